from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
from typing import Sequence

if __package__ in (None, ""):
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
    from app.core.errors import KrylovLindbladError
    from app.core.runner import PRESETS, oracle_check, run, run_preset, sweep
    from app.settings import APP_NAME, ExperimentConfig, parse_override
else:
    from .core.errors import KrylovLindbladError
    from .core.runner import PRESETS, oracle_check, run, run_preset, sweep
    from .settings import APP_NAME, ExperimentConfig, parse_override

logger = logging.getLogger(APP_NAME)

EXIT_DOMAIN_ERROR = 2
EXIT_IO_ERROR = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Krylov complexity of dissipative spin chains.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (defaults to outputs.directory)")
    common.add_argument("--workers", type=int, default=1, help="concurrent member runs")

    configured = argparse.ArgumentParser(add_help=False)
    configured.add_argument("--config", type=Path, help="TOML experiment file")
    configured.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scalar field, e.g. dissipation.alpha=0.05",
    )
    configured.add_argument("--store-bases", action="store_true", help="keep the Krylov bases for diagnostics")
    configured.add_argument("--no-reorth", action="store_true", help="skip full reorthogonalization")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("run", parents=[common, configured], help="run one experiment")
    sweep_parser = commands.add_parser("sweep", parents=[common, configured], help="scan one scalar field")
    sweep_parser.add_argument("--axis", required=True, help="dotted field name, e.g. dissipation.gamma")
    sweep_parser.add_argument("--values", required=True, help="comma-separated values")
    preset_parser = commands.add_parser("preset", parents=[common], help="reproduction presets")
    preset_parser.add_argument("name", choices=sorted(PRESETS))
    commands.add_parser("oracle-check", parents=[common, configured], help="compare against direct evolution")
    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for item in args.overrides:
        key, separator, raw = item.partition("=")
        if not separator:
            raise argparse.ArgumentTypeError(f"--set expects KEY=VALUE, got {item!r}")
        config = config.with_value(key.strip(), parse_override(raw.strip()))
    if args.store_bases:
        config = config.with_value("iteration.store_bases", True)
    if args.no_reorth:
        config = config.with_value("iteration.reorth", False)
    return config


def _output_dir(args: argparse.Namespace, config: ExperimentConfig | None = None) -> Path:
    if args.out is not None:
        return args.out
    return Path(config.outputs.directory if config is not None else "runs")


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "preset":
        out_dir = _output_dir(args) / args.name if args.out is None else args.out
        run_preset(args.name, out_dir, args.workers)
        return 0

    config = _load_config(args)
    out_dir = _output_dir(args, config)
    if args.command == "run":
        result = run(config, out_dir)
        print(json.dumps(result.summary, indent=2, sort_keys=True))
    elif args.command == "sweep":
        values = [parse_override(raw.strip()) for raw in args.values.split(",") if raw.strip()]
        sweep(config, args.axis, values, out_dir, args.workers)
    elif args.command == "oracle-check":
        report = oracle_check(config, out_dir)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0 if report["passed"] else 1
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return _dispatch(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except KrylovLindbladError as exc:
        logger.error("%s", exc)
        return EXIT_DOMAIN_ERROR
    except OSError as exc:
        logger.error("cannot write artifacts: %s", exc)
        return EXIT_IO_ERROR
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
