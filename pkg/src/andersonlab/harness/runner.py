"""Dispatch one configured experiment, write its artifacts and a manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .._mc import derive_seed
from ..centers import centers_experiment, dcs_experiment, joint_experiment, noncovariant_experiment
from ..dos import DosTable, atomic_write, default_grid, density_at, estimate_dos, interval_mass
from ..pointproc import concentration_experiment, levelstats_experiment, two_energy_experiment
from ..spacings import dls_experiment, survival_curve
from .config import ExperimentConfig

log = logging.getLogger(__name__)

# default acceptance floors, used when gating is requested without an explicit threshold
DEFAULT_GATES = {
    "levelstats": 0.05,
    "two-energy": 0.08,
    "concentration": 0.05,
    "spacings": 0.05,
    "joint": 0.1,
    "dcs": 0.08,
}
# reserved realization indices for auxiliary streams (never used by realizations)
DOS_STREAM = 2**41
EXIT_OK, EXIT_GATE_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict
    report: dict
    passed: bool | None = None
    outputs: dict = field(default_factory=dict)

    @property
    def exit_status(self) -> int:
        return EXIT_GATE_FAILED if self.passed is False else EXIT_OK


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x).__name__}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


class _Writer:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def text(self, name: str, text: str):
        path = self.out_dir / name
        atomic_write(path, text)
        self.files[name] = _sha256_file(path)

    def csv(self, name: str, header, rows):
        self.text(name, _csv_text(header, rows))

    def json(self, name: str, obj):
        self.text(name, _dumps(obj))

    def table(self, name: str, table: DosTable):
        table.save(self.out_dir / name)
        self.files[name] = _sha256_file(self.out_dir / name)


def _dos_table(cfg: ExperimentConfig, writer: _Writer, model) -> tuple[DosTable, dict]:
    ref = cfg.dos_table
    if ref.path:
        table = DosTable.load(ref.path, expected_hash=ref.hash)
        return table, {"source": "file", "path": str(ref.path), "hash": table.content_hash}
    seed = derive_seed(cfg.run.seed, DOS_STREAM)
    table = estimate_dos(model.disorder, model.box, default_grid(model.disorder, model.dim, cfg.stats.grid_points),
                         R=ref.realizations, master_seed=seed, boundary=model.boundary, workers=cfg.run.workers)
    writer.table("dos_table.csv", table)
    return table, {"source": "inline", "seed": seed, "realizations": ref.realizations,
                   "hash": table.content_hash}


def _run_dos(cfg, model, writer):
    s = cfg.stats
    grid = default_grid(model.disorder, model.dim, s.grid_points)
    table = estimate_dos(model.disorder, model.box, grid, R=cfg.run.realizations, master_seed=cfg.run.seed,
                         boundary=model.boundary, workers=cfg.run.workers)
    writer.table("dos_table.csv", table)
    report = {
        "hash": table.content_hash,
        "ids_E0": float(table.ids_at(s.E0)),
        "density_E0": density_at(table, s.E0),
        "integral": table.integral(),
        "E0": s.E0,
    }
    if s.J is not None:
        report["mass_J"] = interval_mass(table, s.J)
    return report, None, []


def _run_levelstats(cfg, model, table, writer):
    s = cfg.stats
    intervals = s.intervals or [[-1.0, 1.0]]
    counts, rep, info = levelstats_experiment(model, table, s.E0, intervals, cfg.run.realizations, cfg.run.seed,
                                              cfg.run.workers, beta=s.beta, delta=s.delta)
    writer.csv("counts.csv", ["realization"] + [f"count_{i}" for i in range(len(intervals))],
               [[r, *map(int, c)] for r, c in enumerate(counts)])
    report = {**rep.to_dict(), "nu0": info["nu0"], "windows": info["windows"], "intervals": intervals}
    floor = s.gate_threshold if s.gate_threshold is not None else DEFAULT_GATES["levelstats"]
    gate = {"statistic": rep.tv_joint, "threshold": max(floor, rep.threshold or 0.0)}
    return report, gate, info["warnings"]


def _run_two_energy(cfg, model, table, writer):
    s = cfg.stats
    up = s.U_plus or [-0.5, 0.5]
    um = s.U_minus or [-0.5, 0.5]
    pairs, rep, info = two_energy_experiment(model, table, s.E0, s.E1, up, um, cfg.run.realizations,
                                             cfg.run.seed, cfg.run.workers)
    writer.csv("pairs.csv", ["realization", "count_plus", "count_minus"],
               [[r, int(a), int(b)] for r, (a, b) in enumerate(pairs)])
    report = {**rep.to_dict(), "nu": info["nu"], "windows": info["windows"], "separation": info["separation"]}
    floor = s.gate_threshold if s.gate_threshold is not None else DEFAULT_GATES["two-energy"]
    gate = {"statistic": rep.tv_independence, "threshold": max(floor, rep.threshold_independence or 0.0)}
    return report, gate, list(rep.warnings)


def _run_concentration(cfg, model, table, writer):
    s, m = cfg.stats, cfg.model
    sides = m.half_sides or [m.half_side]
    models = [cfg.model_spec(L) for L in sides]
    rows, monotone = concentration_experiment(models, table, s.J, s.eps, cfg.run.realizations, cfg.run.seed,
                                              cfg.run.workers, delta=s.delta)
    keys = list(rows[0])
    writer.csv("concentration.csv", keys, [[row[k] for k in keys] for row in rows])
    report = {"rows": rows, "monotone": monotone, "J": s.J, "eps": s.eps}
    floor = s.gate_threshold if s.gate_threshold is not None else DEFAULT_GATES["concentration"]
    gate = {"statistic": rows[-1]["tail"], "threshold": floor, "monotone": monotone}
    return report, gate, []


def _run_spacings(cfg, model, table, writer):
    s = cfg.stats
    emp, ref, rep = dls_experiment(model, table, cfg.run.realizations, cfg.run.seed, mode=s.mode, E0=s.E0, J=s.J,
                                   width_exponent=s.width_exponent, normalization=s.normalization,
                                   workers=cfg.run.workers)
    writer.csv("spacings.csv", ["spacing"], [[float(v)] for v in emp.values])
    xs, es, rs = survival_curve(emp, ref)
    writer.csv("curve.csv", ["x", "empirical", "reference"], zip(xs, es, rs))
    floor = s.gate_threshold if s.gate_threshold is not None else DEFAULT_GATES["spacings"]
    gate = {"statistic": rep.sup_distance, "threshold": floor}
    return rep.to_dict(), gate, []


def _run_centers(cfg, model, table, writer):
    s = cfg.stats
    records, summary = centers_experiment(model, s.J, cfg.run.realizations, cfg.run.seed, s.tau, cfg.run.workers)
    coords = [f"x{k}" for k in range(model.dim)]
    writer.csv("centers.csv", ["realization", "j", "energy", *coords, "amplitude", "diameter"],
               [[r, j, E, *c, a, dm] for r, j, E, c, a, dm in records])
    return summary, None, []


def _run_joint(cfg, model, table, writer):
    s = cfg.stats
    if s.energy_scale is not None or s.space_scale is not None:
        es = s.energy_scale if s.energy_scale is not None else float(model.box.side)
        ss = s.space_scale if s.space_scale is not None else float(model.box.side)
        J = s.J or [-0.5, 0.5]
        C = s.cube or [-0.5, 0.5]
        raw, info = noncovariant_experiment(model, table, s.E0, es, ss, J, C, cfg.run.realizations,
                                            cfg.run.seed, cfg.run.workers)
        factor = (es / ss) ** model.dim
        writer.csv("counts.csv", ["realization", "raw", "normalized"],
                   [[r, int(k), float(k * factor)] for r, k in enumerate(raw)])
        return {**info, "energy_scale": es, "space_scale": ss, "J": J, "cube": C}, None, []
    ell = s.ell if s.ell is not None else float(model.box.side)
    boxes = s.boxes or [[[-1.0, 0.0], [-0.5, 0.5]], [[0.0, 1.0], [-0.5, 0.5]]]
    counts, rep, info = joint_experiment(model, table, s.E0, ell, boxes, cfg.run.realizations, cfg.run.seed,
                                         cfg.run.workers)
    writer.csv("counts.csv", ["realization"] + [f"count_{i}" for i in range(len(boxes))],
               [[r, *map(int, c)] for r, c in enumerate(counts)])
    report = {**rep.to_dict(), "nu0": info["nu0"], "window": info["window"], "c_ell": info["c_ell"], "ell": ell}
    floor = s.gate_threshold if s.gate_threshold is not None else DEFAULT_GATES["joint"]
    gate = {"statistic": rep.tv_joint, "threshold": max(floor, rep.threshold or 0.0)}
    return report, gate, info["warnings"]


def _run_dcs(cfg, model, table, writer):
    s = cfg.stats
    width = s.width if s.width is not None else 1.0 / math.log(model.box.volume) ** model.dim
    emp, oracle, rep = dcs_experiment(model, table, s.E0, width, cfg.run.realizations, cfg.run.seed,
                                      cfg.run.workers)
    writer.csv("dcs.csv", ["spacing"], [[float(v)] for v in emp.values])
    xs, es, os_ = survival_curve(emp, oracle)
    lim = np.exp(-xs**model.dim)
    writer.csv("curve.csv", ["s", "empirical", "oracle", "limit"], zip(xs, es, os_, lim))
    floor = s.gate_threshold if s.gate_threshold is not None else DEFAULT_GATES["dcs"]
    gate = {"statistic": rep.sup_oracle, "threshold": floor}
    return rep.to_dict(), gate, list(rep.warnings)


_DISPATCH = {
    "levelstats": _run_levelstats,
    "two-energy": _run_two_energy,
    "concentration": _run_concentration,
    "spacings": _run_spacings,
    "centers": _run_centers,
    "joint": _run_joint,
    "dcs": _run_dcs,
}


def _realization_seeds(cfg: ExperimentConfig) -> dict:
    R, seed = cfg.run.realizations, cfg.run.seed
    if cfg.kind == "concentration":
        sides = cfg.model.half_sides or [cfg.model.half_side]
        return {str(L): [derive_seed(derive_seed(seed, k), i) for i in range(R)] for k, L in enumerate(sides)}
    return {"main": [derive_seed(seed, i) for i in range(R)]}


def run_experiment(cfg: ExperimentConfig, sources: dict | None = None) -> RunResult:
    """Run ``cfg``; write CSV/JSON artifacts and finally ``manifest.json`` into ``cfg.run.out``."""
    cfg.validate()
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    writer = _Writer(out)
    model = cfg.model_spec()
    t0 = time.perf_counter()
    caught_msgs: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.kind == "dos":
            report, gate, extra = _run_dos(cfg, model, writer)
            dos_info = {"source": "computed", "hash": report["hash"]}
        else:
            table, dos_info = _dos_table(cfg, writer, model)
            report, gate, extra = _DISPATCH[cfg.kind](cfg, model, table, writer)
    caught_msgs += [str(w.message) for w in caught]
    wall = time.perf_counter() - t0
    warn = sorted(set(caught_msgs) | set(extra or []))

    passed = None
    if cfg.run.gate and gate is not None:
        passed = bool(gate["statistic"] <= gate["threshold"] and gate.get("monotone", True))
        report = {**report, "gate": {**gate, "passed": passed}}
    writer.json("report.json", report)

    manifest = {
        "kind": cfg.kind,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "code_version": __version__,
        "seeds": {"master": cfg.run.seed, "realizations": _realization_seeds(cfg)},
        "dos_table": dos_info,
        "wall_clock_seconds": wall,
        "warnings": warn,
        "outputs": dict(sorted(writer.files.items())),
        "precedence": sources or {},
        "workers": cfg.run.workers,
        "gate": None if passed is None else {**gate, "passed": passed},
    }
    # manifest last: its presence marks a complete run
    atomic_write(out / "manifest.json", _dumps(manifest))
    log.info("%s finished in %.1fs -> %s", cfg.kind, wall, os.fspath(out))
    return RunResult(out, manifest, report, passed, dict(writer.files))
