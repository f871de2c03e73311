"""Experiment configuration: JSON in, validated dataclasses out."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ..model import BOUNDARIES, DisorderError, DisorderSpec, LatticeError, ModelSpec, build_box
from ..pointproc import check_beta

KINDS = ("dos", "levelstats", "two-energy", "concentration", "spacings", "centers", "joint", "dcs")


class ConfigError(ValueError):
    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


@dataclass
class ModelBlock:
    dim: int = 1
    half_side: int = 500
    half_sides: list | None = None
    disorder: dict = field(default_factory=lambda: {"kind": "uniform", "a": -0.5, "b": 0.5, "coupling": 5.0})
    boundary: str = "periodic"


@dataclass
class StatsBlock:
    E0: float = 0.0
    E1: float | None = None
    intervals: list | None = None
    J: list | None = None
    U_plus: list | None = None
    U_minus: list | None = None
    beta: float | None = None
    delta: float | None = None
    eps: float = 0.1
    ell: float | None = None
    energy_scale: float | None = None
    space_scale: float | None = None
    cube: list | None = None
    boxes: list | None = None
    width: float | None = None
    width_exponent: float = 0.3
    mode: str = "local"
    normalization: str = "density"
    tau: float = 0.5
    grid_points: int = 2001
    gate_threshold: float | None = None


@dataclass
class RunBlock:
    realizations: int = 100
    seed: int = 0
    workers: int = 1
    out: str = "out"
    gate: bool = False


@dataclass
class DosRef:
    path: str | None = None
    hash: str | None = None
    realizations: int = 100


@dataclass
class ExperimentConfig:
    kind: str
    model: ModelBlock = field(default_factory=ModelBlock)
    stats: StatsBlock = field(default_factory=StatsBlock)
    run: RunBlock = field(default_factory=RunBlock)
    dos_table: DosRef = field(default_factory=DosRef)

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def model_spec(self, half_side: int | None = None) -> ModelSpec:
        m = self.model
        return ModelSpec(m.dim, m.half_side if half_side is None else half_side,
                         DisorderSpec.from_dict(m.disorder), m.boundary)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        problems: list[tuple[str, str]] = []
        blocks = {"model": ModelBlock, "stats": StatsBlock, "run": RunBlock, "dos_table": DosRef}
        unknown = set(d) - {"kind", *blocks}
        problems += [(k, "unknown field") for k in sorted(unknown)]
        kwargs: dict[str, Any] = {"kind": d.get("kind")}
        for name, klass in blocks.items():
            sub = d.get(name, {}) or {}
            if not isinstance(sub, dict):
                problems.append((name, "must be an object"))
                continue
            names = {f.name for f in fields(klass)}
            problems += [(f"{name}.{k}", "unknown field") for k in sorted(set(sub) - names)]
            kwargs[name] = klass(**{k: v for k, v in sub.items() if k in names})
        if problems:
            raise ConfigError(problems)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        p: list[tuple[str, str]] = []
        if self.kind not in KINDS:
            p.append(("kind", f"must be one of {', '.join(KINDS)}"))
        m, s, r = self.model, self.stats, self.run
        try:
            build_box(m.dim, m.half_side)
        except (LatticeError, TypeError) as exc:
            p.append(("model.half_side", str(exc)))
        if m.boundary not in BOUNDARIES:
            p.append(("model.boundary", f"must be one of {BOUNDARIES}"))
        try:
            DisorderSpec.from_dict(m.disorder)
        except (DisorderError, TypeError) as exc:
            p.append(("model.disorder", str(exc)))
        if not isinstance(r.realizations, int) or r.realizations < 1:
            p.append(("run.realizations", "must be a positive integer"))
        if not isinstance(r.workers, int) or r.workers < 1:
            p.append(("run.workers", "must be a positive integer"))
        if not isinstance(r.seed, int) or not 0 <= r.seed < 2**64:
            p.append(("run.seed", "must be a 64-bit nonnegative integer"))
        if s.beta is not None:
            try:
                check_beta(s.beta, m.dim)
            except ValueError as exc:
                p.append(("stats.beta", str(exc)))
        if s.delta is not None and not s.delta > 0:
            p.append(("stats.delta", "must be positive"))
        if self.kind == "two-energy" and s.E1 is None:
            p.append(("stats.E1", "required for two-energy"))
        if self.kind == "concentration":
            if not 0 < s.eps:
                p.append(("stats.eps", "must be positive"))
            if s.J is None:
                p.append(("stats.J", "required for concentration"))
        if self.kind == "spacings" and s.mode not in ("local", "macro"):
            p.append(("stats.mode", "must be local or macro"))
        if self.kind == "spacings" and s.mode == "macro" and s.J is None:
            p.append(("stats.J", "required for macro spacings"))
        if self.kind == "centers" and s.J is None:
            p.append(("stats.J", "required for centers"))
        if not 0 <= s.tau < 1:
            p.append(("stats.tau", "must lie in [0, 1)"))
        if p:
            raise ConfigError(p)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_dict(json.load(fh))
