"""Command-line entry point: ``dpgossip run|preset|validate``.

Exit status is 0 on success, 2 for an invalid configuration (the message names
the offending field) and 1 for any failure while running.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .runner import PRESETS, WORKERS_ENV, preset, run_sweep

log = logging.getLogger("dpgossip")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _apply_overrides(cfg: ExperimentConfig, pairs: list[str]) -> ExperimentConfig:
    raw = cfgmod.to_dict(cfg)
    for pair in pairs:
        key, sep, text = pair.partition("=")
        if not sep or not key:
            raise ConfigError(pair, "override must look like key=value")
        value = yaml.safe_load(text)
        head, _, tail = key.partition(".")
        if tail and head == "grid":
            raw["grid"][tail] = value
        elif tail:
            if head not in ("topology", "data"):
                raise ConfigError(key, "unknown key")
            raw[head][tail] = value
        else:
            raw[key] = value
    return cfgmod.from_dict(raw)


def _execute(cfg: ExperimentConfig, out: str | None, workers: int | None) -> int:
    out_dir = Path(out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(cfgmod.dumps(cfg), encoding="utf-8")
    n_cells = sum(1 for _ in cfg.cells())
    log.info("running %d cell(s) x %d seed(s) into %s", n_cells, len(cfg.seeds), out_dir)
    results = run_sweep(cfg, out_dir, workers)
    for r in results:
        log.info("cell %d seed %d: regret=%.6g accuracy=%.4f nnz=%.3f",
                 r.cell_id, r.seed, r.final_regret, r.accuracy, r.nnz_fraction)
    print(out_dir / "sweep_summary.csv")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _apply_overrides(cfgmod.load(args.config), args.set)
    return _execute(cfg, args.out, args.workers)


def cmd_preset(args) -> int:
    cfg = _apply_overrides(preset(args.name), args.set)
    if args.print_config:
        sys.stdout.write(cfgmod.dumps(cfg))
        return EXIT_OK
    if not args.out:
        raise ConfigError("--out", "required unless --print-config is given")
    return _execute(cfg, args.out, args.workers)


def cmd_validate(args) -> int:
    cfg = _apply_overrides(cfgmod.load(args.config), args.set)
    n_cells = sum(1 for _ in cfg.cells())
    print(f"ok: {n_cells} cell(s) x {len(cfg.seeds)} seed(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpgossip", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (dotted keys allowed, e.g. topology.kind=grid)")

    def running(p):
        p.add_argument("--workers", type=int, default=None,
                       help=f"parallel processes (default: ${WORKERS_ENV} or the config's workers)")

    p = sub.add_parser("run", help="run every grid cell and seed of a YAML config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    common(p)
    running(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run one of the built-in studies")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--out")
    p.add_argument("--print-config", action="store_true", help="print the preset as YAML and exit")
    common(p)
    running(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
