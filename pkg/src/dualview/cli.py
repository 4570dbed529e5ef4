"""Command-line client for the audit pipeline.

Subcommands mirror the service endpoints one-to-one. By default the
pipeline runs in-process; with ``--remote URL`` the same JSON payload is
posted to a running service instead and artifacts stay server-side.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.error
import urllib.request

from pydantic import ValidationError

from . import runner
from .config import ExperimentConfig, apply_overrides, load_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field, e.g. --set train.epochs=50 (repeatable)",
    )
    parser.add_argument("--output-dir", help="shortcut for --set output_dir=...")
    parser.add_argument("--base-seed", type=int, help="shortcut for --set base_seed=...")
    parser.add_argument("--remote", metavar="URL", help="post to a running service instead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualview",
        description="Audit membership privacy of machine unlearning (dual-view inference)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in [
        ("train", "train the original model; emit checkpoint, loss curve, split manifest"),
        ("unlearn", "unlearn the configured forget set from the original model"),
        ("attack", "run the dual-view attack and baselines; emit verdicts and metrics"),
        ("gain", "estimate the dual-view knowledge gain; emit densities"),
        ("sweep", "run the attack across forget ratios"),
        ("export-densities", "export score histograms only"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name == "unlearn":
            p.add_argument("--checkpoint", help="original-model checkpoint to start from")
        if name == "attack":
            p.add_argument("--stats", help="reuse a persisted shadow-stats JSON file")
        if name == "sweep":
            p.add_argument(
                "--ratios",
                type=float,
                nargs="+",
                default=[0.025, 0.05, 0.10],
                help="forget ratios to sweep",
            )

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    if args.base_seed is not None:
        overrides.append(f"base_seed={args.base_seed}")
    return apply_overrides(cfg, overrides)


def _post_remote(url: str, path: str, payload: dict) -> dict:
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url.rstrip("/") + path, data=body, headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read().decode("utf-8"))


def _dispatch(args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    if args.remote:
        payload: dict = {"config": cfg.model_dump(mode="json")}
        if args.command == "unlearn" and args.checkpoint:
            payload["checkpoint_path"] = args.checkpoint
        if args.command == "attack" and args.stats:
            payload["stats_path"] = args.stats
        if args.command == "sweep":
            payload["ratios"] = args.ratios
        return _post_remote(args.remote, f"/{args.command}", payload)

    if args.command == "train":
        out = runner.run_train(cfg)
    elif args.command == "unlearn":
        out = runner.run_unlearn(cfg, checkpoint_path=args.checkpoint)
    elif args.command == "attack":
        stats_payload = None
        if args.stats:
            with open(args.stats, "r", encoding="utf-8") as fh:
                stats_payload = json.load(fh)
        out = runner.run_attack(cfg, stats_payload=stats_payload)
    elif args.command == "gain":
        out = runner.run_gain(cfg)
    elif args.command == "sweep":
        out = runner.run_sweep(cfg, ratios=args.ratios)
    elif args.command == "export-densities":
        out = runner.run_export_densities(cfg)
    else:  # pragma: no cover - argparse enforces the choices
        raise ValueError(f"unknown command {args.command!r}")
    written = runner.write_outputs(cfg.output_dir, out)
    return {"config_hash": cfg.config_hash(), "report": out.report, "artifacts": written}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    try:
        cfg = _build_config(args)
    except (ValidationError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = _dispatch(args, cfg)
    except urllib.error.URLError as exc:
        print(f"remote call failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
