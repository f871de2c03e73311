"""Disorder-averaged integrated density of states and its derivative.

``ids(E)`` is estimated as the realization average of ``#{E_j < E} / N``;
the density is a centred finite difference of ``ids`` on the grid.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._mc import derive_seed, map_ordered
from .eig import EigenSolverError, counts_below, eigen_full
from .model import DisorderSpec, LatticeBox, ModelSpec, spectrum_bounds

log = logging.getLogger(__name__)

MAX_RETRIES = 3


class OutOfRange(ValueError):
    pass


def default_grid(spec: DisorderSpec, dim: int, points: int = 2001, pad: float = 0.5) -> np.ndarray:
    lo, hi = spectrum_bounds(spec, dim)
    return np.linspace(lo - pad, hi + pad, points)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _ids_to_density(energies, ids, h_steps):
    n = len(energies)
    k = np.arange(n)
    hi = np.minimum(k + h_steps, n - 1)
    lo = np.maximum(k - h_steps, 0)
    raw = (ids[hi] - ids[lo]) / (energies[hi] - energies[lo])
    clipped = int(np.sum(raw < 0))
    return np.maximum(raw, 0.0), clipped


@dataclass(frozen=True, eq=False)
class DosTable:
    energies: np.ndarray = field(repr=False)
    ids: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_ids(cls, energies, ids, h_steps: int = 5, metadata: dict | None = None) -> "DosTable":
        energies = np.asarray(energies, dtype=float)
        ids = np.asarray(ids, dtype=float)
        if energies.ndim != 1 or len(energies) < 3 or np.any(np.diff(energies) <= 0):
            raise ValueError("energy grid must be strictly increasing with >= 3 points")
        if ids.shape != energies.shape:
            raise ValueError("ids must match the energy grid")
        density, clipped = _ids_to_density(energies, ids, h_steps)
        meta = dict(metadata or {})
        meta.setdefault("h_steps", h_steps)
        meta["clipped"] = clipped
        return cls(energies, ids, density, meta)

    @property
    def step(self) -> float:
        return float(np.min(np.diff(self.energies)))

    @property
    def key(self) -> dict:
        keys = ("disorder", "dim", "half_side", "boundary", "grid", "realizations", "seed")
        return {k: self.metadata.get(k) for k in keys}

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.key).encode()).hexdigest()

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.energies))

    def _check(self, *energies):
        lo, hi = self.energies[0], self.energies[-1]
        for e in energies:
            if not lo <= e <= hi:
                raise OutOfRange(f"energy {e} outside calibrated range [{lo}, {hi}]")

    def ids_at(self, E):
        return np.interp(E, self.energies, self.ids)

    def density_on(self, E):
        return np.interp(E, self.energies, self.density)

    def save(self, path) -> str:
        """Write a one-line JSON header followed by an ``energy,ids,density`` CSV body."""
        header = dict(self.metadata)
        header["hash"] = self.content_hash
        buf = io.StringIO()
        buf.write(canonical_json(header) + "\n")
        buf.write("energy,ids,density\n")
        for row in zip(self.energies, self.ids, self.density):
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        atomic_write(path, buf.getvalue())
        return header["hash"]

    @classmethod
    def load(cls, path, expected_hash: str | None = None) -> "DosTable":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            body = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
        stored = header.pop("hash", None)
        table = cls(body[:, 0], body[:, 1], body[:, 2], header)
        if stored != table.content_hash:
            raise ValueError("dos table header hash does not match its metadata")
        if expected_hash is not None and expected_hash != stored:
            raise ValueError(f"dos table hash mismatch: expected {expected_hash}, found {stored}")
        return table


def atomic_write(path, text: str):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def realization_counts(H, energies) -> np.ndarray:
    """``#{E_j < E}`` at every grid energy for one Hamiltonian."""
    if H.is_chain:
        return counts_below(H, energies)[0]
    # d >= 2: one dense solve beats a dense LDL^T per grid point
    w = eigen_full(H).eigenvalues
    return np.searchsorted(w, energies, side="left")


def _one_realization(index, model: ModelSpec, grid, master_seed):
    seed = derive_seed(master_seed, index)
    replaced = []
    for attempt in range(MAX_RETRIES + 1):
        try:
            return realization_counts(model.hamiltonian(seed), grid), replaced
        except EigenSolverError as exc:
            log.warning("realization %d failed (%s); resampling", index, exc)
            seed = derive_seed(seed, attempt)
            replaced.append(seed)
    raise EigenSolverError(f"realization {index} failed after {MAX_RETRIES} retries", index=index)


def estimate_dos(
    spec: DisorderSpec,
    box: LatticeBox,
    grid=None,
    R: int = 100,
    master_seed: int = 0,
    boundary: str = "periodic",
    h_steps: int = 5,
    workers: int = 1,
) -> DosTable:
    if R < 1:
        raise ValueError("need at least one realization")
    grid = default_grid(spec, box.dim) if grid is None else np.asarray(grid, dtype=float)
    model = ModelSpec(box.dim, box.half_side, spec, boundary)
    results = map_ordered(partial(_one_realization, model=model, grid=grid, master_seed=master_seed), range(R), workers)
    total = np.zeros(len(grid), dtype=np.int64)
    replacements = {}
    for i, (counts, replaced) in enumerate(results):
        total += counts
        if replaced:
            replacements[str(i)] = replaced
    ids = total / (R * box.volume)
    meta = {
        "disorder": spec.to_dict(),
        "dim": box.dim,
        "half_side": box.half_side,
        "boundary": boundary,
        "grid": {"start": float(grid[0]), "stop": float(grid[-1]), "points": len(grid),
                 "sha256": hashlib.sha256(np.ascontiguousarray(grid).tobytes()).hexdigest()},
        "realizations": R,
        "seed": int(master_seed),
        "estimator": "normalized eigenvalue count",
        "replacement_seeds": replacements,
    }
    return DosTable.from_ids(grid, ids, h_steps, meta)


def density_at(table: DosTable, E0: float, h: float | None = None) -> float:
    """Centred difference ``(N(E0+h) - N(E0-h)) / 2h`` of the interpolated ids."""
    step = table.step
    h = table.metadata.get("h_steps", 5) * step if h is None else float(h)
    if h < 2 * step * (1 - 1e-9):
        raise ValueError("bandwidth must be at least two grid steps")
    table._check(E0 - h, E0 + h)
    return max(0.0, float((table.ids_at(E0 + h) - table.ids_at(E0 - h)) / (2 * h)))


def density_stability(table: DosTable, E0: float, h: float | None = None) -> float:
    """Relative change of :func:`density_at` when the bandwidth doubles."""
    h = table.metadata.get("h_steps", 5) * table.step if h is None else h
    a = density_at(table, E0, h)
    b = density_at(table, E0, 2 * h)
    return abs(b - a) / a if a > 0 else float("inf")


def interval_mass(table: DosTable, J) -> float:
    """``N(J) = ids(b) - ids(a)``."""
    a, b = map(float, J)
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    table._check(a, b)
    return max(0.0, float(table.ids_at(b) - table.ids_at(a)))


def mean_density(table: DosTable, J) -> float:
    """``N(J) / |J|``, the alternative normalisation for windows where the density may vanish."""
    a, b = map(float, J)
    if b <= a:
        raise ValueError("interval must have positive length")
    return interval_mass(table, J) / (b - a)
