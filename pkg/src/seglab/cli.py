"""Command line driver: ``seglab run|diagnose|validate``.

Exit codes: 0 when every declared check passes, 1 on a failed stage or check,
2 on an invalid configuration (nothing is written in that case).
"""
from __future__ import annotations

import argparse
import copy
import os
import sys
from pathlib import Path

from .exceptions import ConfigInvalid
from .pipeline import CONFIG_VERSION, TOLERANCE_PROFILES, execute, load_config, validate_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def set_threads(n) -> None:
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seglab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "run an experiment config"),
        ("diagnose", "diagnose saved fields"),
        ("validate", "run the invariant suite on prototypes"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, required=(name == "run"))
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--tolerance-profile", choices=sorted(TOLERANCE_PROFILES), default="default")
        if name == "diagnose":
            p.add_argument("fields", nargs="*", help="field header JSON files")
            p.add_argument("--centers", default="auto", help="'auto' or 'x,y;x,y;...'")
    return ap


def _parse_centers(text: str):
    if text == "auto":
        return "auto"
    try:
        return [[float(v) for v in item.split(",")] for item in text.split(";") if item.strip()]
    except ValueError:
        raise ConfigInvalid(f"cannot parse centers {text!r}") from None


def resolve_config(args) -> dict:
    if args.config is not None:
        cfg = copy.deepcopy(load_config(args.config))
    elif args.command == "validate":
        cfg = {"version": CONFIG_VERSION, "kind": "validate"}
    elif args.command == "diagnose":
        if not args.fields:
            raise ConfigInvalid("diagnose needs --config or field headers")
        cfg = {"version": CONFIG_VERSION, "kind": "diagnose",
               "diagnose": {"fields": [str(f) for f in args.fields], "centers": _parse_centers(args.centers)}}
    else:
        raise ConfigInvalid("--config is required")
    expected = {"validate": "validate", "diagnose": "diagnose"}.get(args.command)
    if expected and cfg["kind"] != expected:
        raise ConfigInvalid(f"the {args.command} command needs a config of kind {expected!r}, got {cfg['kind']!r}")
    if args.seed is not None:
        cfg["seed"] = args.seed
    return validate_config(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigInvalid as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    threads = args.threads if args.threads is not None else os.environ.get("SEGLAB_THREADS")
    set_threads(threads)
    report = execute(cfg, args.out, args.tolerance_profile)
    for s in report.stages:
        status = "PASS" if s.passed else "FAIL"
        extra = f" ({s.error})" if s.error else ""
        print(f"{status} {s.name} [{s.seconds:.2f}s]{extra}")
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
