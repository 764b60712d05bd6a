"""Command line: ``twotime run|list-scenarios|validate|resume``.

Exit codes: 0 success (or exploratory run), 1 failed oracle check,
2 invalid configuration or unusable checkpoint.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, config_from_dict, load_config
from .runner import CHECKPOINT_NAME, emit_results, resume_scenario, run_scenario
from .scenarios import CATALOG

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


def _overrides(args) -> dict:
    return {"seed": args.seed, "replicas": args.replicas, "output_dir": args.out, "workers": args.workers}


def _load(args):
    target = args.config
    if Path(target).is_file():
        return load_config(target, _overrides(args))
    if target in CATALOG:
        return config_from_dict({"scenario": target}, _overrides(args))
    raise ConfigError(f"{target}: no such file or scenario")


def _report(bundle, paths, quiet):
    for line in bundle.verdict_lines():
        print(line)
    if bundle.failures:
        print(f"{len(bundle.failures)} replica(s) dropped after runaway: "
              f"{[f['replica'] for f in bundle.failures]}")
    if bundle.flagged:
        print("WARNING: no oracle comparison was made for this run")
    if not quiet:
        print("wrote " + ", ".join(str(p) for p in paths))
    status = {True: "PASSED", False: "FAILED", None: "EXPLORATORY"}[bundle.passed]
    print(f"{bundle.config.scenario}: {status}")
    return EXIT_FAILED if bundle.passed is False else EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    bundle = run_scenario(cfg, checkpoint=out / CHECKPOINT_NAME, progress=progress)
    return _report(bundle, emit_results(bundle), args.quiet)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{cfg.scenario}: valid (config hash {cfg.hash[:12]})")
    for key, val in sorted(cfg.to_dict().items()):
        print(f"  {key}: {val}")
    return EXIT_OK


def cmd_list(args) -> int:
    for name, scen in CATALOG.items():
        print(f"{name}")
        print(f"    {scen.description}")
        print(f"    oracle:    {scen.oracle}")
        print(f"    tolerance: {scen.tolerance}")
    return EXIT_OK


def cmd_resume(args) -> int:
    progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        bundle = resume_scenario(args.checkpoint, workers=args.workers, progress=progress)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot resume from {args.checkpoint}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return _report(bundle, emit_results(bundle), args.quiet)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twotime", description="Two-time stochastic quantization scenarios")
    p.add_argument("-v", "--verbose", action="store_true", help="log engine events")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML config file, or a scenario name for its defaults")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--replicas", type=int, help="override the replica count")
        sp.add_argument("--out", help="override the output directory")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("-q", "--quiet", action="store_true")

    common(sub.add_parser("run", help="run a scenario and write results"))
    common(sub.add_parser("validate", help="validate a config without running it"))
    sub.add_parser("list-scenarios", help="list the scenario catalog")
    r = sub.add_parser("resume", help="finish an interrupted run from its checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("--workers", type=int)
    r.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "validate": cmd_validate, "list-scenarios": cmd_list, "resume": cmd_resume}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
