"""Command line front end.

Runs a named scenario from a JSON config (plus dotted --set overrides),
validates the config against a schema with field-level error messages,
echoes the resolved config, and writes the report tables next to a summary.
Exit codes: 0 all checks passed, 2 a scenario check failed, 1 usage or
runtime error. Only verbosity and thread count may come from environment
variables; everything else lives in the config so runs are reproducible.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from .games import GAME_CATALOG
from .scenarios import SCENARIOS

log = logging.getLogger("mfglab")

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["scenario"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"type": "string", "enum": sorted(SCENARIOS)},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1, "maximum": 256},
        "params": {"type": "object"},
    },
}


def _parse_set(assignment: str):
    if "=" not in assignment:
        raise ValueError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _apply_set(config: dict, key: str, value) -> None:
    parts = key.split(".")
    node = config
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot descend into non-object at {p!r} in {key!r}")
    node[parts[-1]] = value


def _validate(config: dict) -> list:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    msgs = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path)):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        msgs.append(f"config error at {where}: {err.message}")
    return msgs


def _resolve_config(args) -> dict:
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise ValueError("config file must contain a JSON object")
    if args.scenario:
        config["scenario"] = args.scenario
    if args.seed is not None:
        config["seed"] = args.seed
    if args.threads is not None:
        config["threads"] = args.threads
    for assignment in args.set or []:
        key, value = _parse_set(assignment)
        _apply_set(config, key, value)
    config.setdefault("seed", 0)
    config.setdefault("threads", int(os.environ.get("MFGLAB_THREADS", "1")))
    config.setdefault("params", {})
    return config


def cmd_run(args) -> int:
    config = _resolve_config(args)
    errors = _validate(config)
    if errors:
        for msg in errors:
            print(msg, file=sys.stderr)
        return 1
    print("resolved config: " + json.dumps(config, sort_keys=True))
    runner = SCENARIOS[config["scenario"]]
    report = runner(seed=config["seed"], threads=config["threads"], **config["params"])
    out_dir = Path(args.out) if args.out else Path("mfglab_out") / config["scenario"]
    report.write(out_dir, svg=args.svg)
    print(report.summary_text(), end="")
    print(f"report written to {out_dir}")
    return 0 if report.passed else 2


def cmd_list_catalog(args) -> int:
    for name in sorted(GAME_CATALOG):
        print(f"game: {name}")
    for name in sorted(SCENARIOS):
        print(f"scenario: {name}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfglab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its report")
    run.add_argument("scenario", nargs="?", help="scenario name (or set it in the config file)")
    run.add_argument("--config", help="path to a JSON config file")
    run.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads for repetitions (default MFGLAB_THREADS or 1)")
    run.add_argument("--out", default=None, help="output directory (default mfglab_out/<scenario>)")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config field, e.g. --set params.reps=50")
    run.add_argument("--svg", action="store_true", help="also write an SVG plot of the run curves")
    run.set_defaults(func=cmd_run)

    cat = sub.add_parser("list-catalog", help="list built-in games and scenarios")
    cat.set_defaults(func=cmd_list_catalog)
    return parser


def main(argv=None) -> int:
    level = {"0": logging.WARNING, "1": logging.INFO, "2": logging.DEBUG}.get(
        os.environ.get("MFGLAB_VERBOSE", "0"), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
