"""Command-line entry point: ``andersonlab <kind> [flags]``.

Values come from flags, then the ``--config`` file, then built-in defaults;
the source of every overridden field is recorded in the run manifest.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import KINDS, ConfigError, ExperimentConfig
from .runner import EXIT_CONFIG, EXIT_RUNTIME, run_experiment


def _pair(text: str) -> list[float]:
    try:
        a, b = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    return [a, b]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


# (flag, dest, type, config path, help)
_COMMON = [
    ("--dim", "dim", int, "model.dim", "lattice dimension"),
    ("--half-side", "half_side", int, "model.half_side", "box half side L (side 2L+1)"),
    ("--half-sides", "half_sides", _int_list, "model.half_sides", "comma-separated L list (concentration)"),
    ("--disorder", "disorder", _json, "model.disorder", "disorder spec as JSON"),
    ("--boundary", "boundary", str, "model.boundary", "periodic or simple"),
    ("--realizations", "realizations", int, "run.realizations", "number of disorder realizations"),
    ("--seed", "seed", int, "run.seed", "master seed"),
    ("--workers", "workers", int, "run.workers", "worker processes"),
    ("--out", "out", str, "run.out", "output directory"),
    ("--dos-table", "dos_table", str, "dos_table.path", "precomputed density-of-states table"),
    ("--dos-hash", "dos_hash", str, "dos_table.hash", "expected content hash of --dos-table"),
    ("--dos-realizations", "dos_realizations", int, "dos_table.realizations",
     "realizations for inline density calibration"),
]
_STATS = [
    ("--E0", "E0", float, "stats.E0", "reference energy"),
    ("--E1", "E1", float, "stats.E1", "second reference energy (two-energy)"),
    ("--interval", "intervals", _pair, "stats.intervals", "rescaled interval a,b (repeatable)"),
    ("--J", "J", _pair, "stats.J", "energy interval a,b"),
    ("--U-plus", "U_plus", _pair, "stats.U_plus", "rescaled interval at E0"),
    ("--U-minus", "U_minus", _pair, "stats.U_minus", "rescaled interval at E1"),
    ("--beta", "beta", float, "stats.beta", "scale exponent"),
    ("--delta", "delta", float, "stats.delta", "separation exponent"),
    ("--eps", "eps", float, "stats.eps", "relative deviation (concentration)"),
    ("--ell", "ell", float, "stats.ell", "covariant length scale"),
    ("--energy-scale", "energy_scale", float, "stats.energy_scale", "energy length scale (non-covariant)"),
    ("--space-scale", "space_scale", float, "stats.space_scale", "space length scale (non-covariant)"),
    ("--cube", "cube", _pair, "stats.cube", "rescaled centre cube side a,b"),
    ("--boxes", "boxes", _json, "stats.boxes", "product boxes as JSON [[I, C], ...]"),
    ("--width", "width", float, "stats.width", "energy window width (dcs)"),
    ("--width-exponent", "width_exponent", float, "stats.width_exponent", "local window |I| = volume^-exponent"),
    ("--mode", "mode", str, "stats.mode", "local or macro (spacings)"),
    ("--normalization", "normalization", str, "stats.normalization", "density or interval (spacings)"),
    ("--tau", "tau", float, "stats.tau", "near-maximal fraction (centers)"),
    ("--grid-points", "grid_points", int, "stats.grid_points", "density grid size"),
    ("--gate-threshold", "gate_threshold", float, "stats.gate_threshold", "acceptance floor"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="andersonlab", description="Anderson-model spectral statistics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--gate", action="store_true", default=None, help="exit 1 if the acceptance gate fails")
        for flag, dest, typ, _, help_ in _COMMON + _STATS:
            kw = {"action": "append"} if dest == "intervals" else {}
            p.add_argument(flag, dest=dest, type=typ, default=None, help=help_, **kw)
    return parser


def _set(d: dict, path: str, value):
    head, tail = path.split(".")
    d.setdefault(head, {})[tail] = value


def resolve(args: argparse.Namespace) -> tuple[ExperimentConfig, dict]:
    """Merge flags over config over defaults; return the config and per-field sources."""
    raw: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        if raw.get("kind", args.kind) != args.kind:
            raise ConfigError([("kind", f"config is for {raw['kind']!r}, command is {args.kind!r}")])
    raw["kind"] = args.kind
    sources = {}
    for block in ("model", "stats", "run", "dos_table"):
        for key in raw.get(block, {}) or {}:
            sources[f"{block}.{key}"] = "config"
    table = [(dest, path) for _, dest, _, path, _ in _COMMON + _STATS] + [("gate", "run.gate")]
    for dest, path in table:
        value = getattr(args, dest, None)
        if value is not None:
            _set(raw, path, value)
            sources[path] = "flag"
    return ExperimentConfig.from_dict(raw), dict(sorted(sources.items()))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, sources = resolve(args)
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg, sources)
    except Exception as exc:  # reported, not re-raised: the exit status carries the failure
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    gate = result.manifest.get("gate")
    if gate is not None:
        verdict = "PASS" if gate["passed"] else "FAIL"
        print(f"{cfg.kind}: {verdict} statistic={gate['statistic']:.4g} threshold={gate['threshold']:.4g}")
    print(f"outputs in {result.out_dir}")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
