"""``signalbench`` command line.

Exit status: 0 on success, 1 for usage/configuration errors, 2 for runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import RunConfig, UsageError, run_config_from_mapping, run_eval, run_scaling_report, run_train
from .config import ConfigError, parse_assignment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="signalbench", description=__doc__.splitlines()[0].strip("`"))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file with run settings; flags override it")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a constant, e.g. gen.n_vehicles=500 or dqn.gamma=0.9")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", dest="seeds", type=int, action="append",
                        help="seed (repeatable); training uses the first")
        sp.add_argument("--seeds", dest="seed_list", type=_int_list, help="comma-separated seeds")

    ev = sub.add_parser("eval", help="run controllers over scenarios and write step logs")
    common(ev)
    ev.add_argument("--controller")
    ev.add_argument("--scenario", help="1, 2, 3 or all")
    ev.add_argument("--model", help="trained model file (dqn/a2c)")

    tr = sub.add_parser("train", help="train a dqn or a2c controller")
    common(tr)
    tr.add_argument("--controller")
    tr.add_argument("--episodes", type=int)
    tr.add_argument("--workers", dest="n_workers", type=int, help="a2c worker count")

    sc = sub.add_parser("scaling", help="a2c wall time and wait versus worker count")
    common(sc)
    sc.add_argument("--workers", type=_int_list, help="worker counts, e.g. 1,2,4")
    sc.add_argument("--episodes", type=int)
    sc.add_argument("--scenario", help="1, 2, 3 or all")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    cfg = run_config_from_mapping(data)
    cfg.mode = args.command
    for name in ("controller", "scenario", "model", "episodes", "n_workers", "workers", "out"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    seeds = (args.seeds or []) + (args.seed_list or [])
    if seeds:
        cfg.seeds = seeds
    overrides = dict(cfg.overrides)
    for text in args.overrides:
        key, value = parse_assignment(text)
        overrides[key] = value
    cfg.overrides = overrides
    if args.command == "scaling":
        cfg.controller = "a2c"
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
        cfg.settings()  # surface bad overrides before any work starts
        if args.command == "eval":
            paths = run_eval(cfg)
        elif args.command == "train":
            paths = run_train(cfg)
        else:
            paths = [run_scaling_report(cfg)]
    except (UsageError, ConfigError) as exc:
        print(f"signalbench: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - stable exit-code contract
        print(f"signalbench: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
