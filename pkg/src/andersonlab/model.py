"""Lattice torus, i.i.d. disorder and the finite-volume Anderson Hamiltonian.

The Hamiltonian on the box ``[-L, L]^d`` is the adjacency (hopping) operator
plus a diagonal random potential::

    (H u)_n = sum_{|m - n| = 1} u_m + omega_n u_n

with periodic ("periodic") or free ("simple") boundary conditions.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

BOUNDARIES = ("periodic", "simple")


class LatticeError(ValueError):
    pass


class DisorderError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeBox:
    """Cubic box ``[-L, L]^d`` of side ``M = 2L + 1`` viewed as a torus.

    Sites are indexed row-major over coordinates shifted to ``[0, M)^d``; the
    first coordinate varies slowest.
    """

    dim: int
    half_side: int

    @property
    def side(self) -> int:
        return 2 * self.half_side + 1

    @property
    def volume(self) -> int:
        return self.side**self.dim

    @cached_property
    def _strides(self) -> np.ndarray:
        return self.side ** np.arange(self.dim - 1, -1, -1, dtype=np.int64)

    def coords(self, index) -> np.ndarray:
        """Multi-coordinates in ``[-L, L]^d`` of linear site index(es)."""
        index = np.asarray(index, dtype=np.int64)
        if np.any((index < 0) | (index >= self.volume)):
            raise LatticeError("site index out of range")
        shifted = (index[..., None] // self._strides) % self.side
        return shifted - self.half_side

    def index(self, coords) -> np.ndarray:
        """Linear index of multi-coordinates (taken modulo the torus)."""
        coords = np.asarray(coords, dtype=np.int64)
        if coords.shape[-1] != self.dim:
            raise LatticeError("coordinate dimension mismatch")
        shifted = (coords + self.half_side) % self.side
        return shifted @ self._strides

    @cached_property
    def all_coords(self) -> np.ndarray:
        return self.coords(np.arange(self.volume))

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``(N, 2d)`` torus neighbours; column ``2k`` is ``+e_k``, ``2k+1`` is ``-e_k``."""
        c = self.all_coords
        cols = []
        for k in range(self.dim):
            for step in (1, -1):
                shifted = c.copy()
                shifted[:, k] += step
                cols.append(self.index(shifted))
        return np.stack(cols, axis=1)

    def edges(self, boundary: str = "periodic") -> tuple[np.ndarray, np.ndarray]:
        """Undirected nearest-neighbour pairs ``(i, j)`` with ``i < j``."""
        if boundary not in BOUNDARIES:
            raise LatticeError(f"unknown boundary {boundary!r}")
        c = self.all_coords
        src, dst = [], []
        for k in range(self.dim):
            plus = self.neighbors[:, 2 * k]
            keep = np.ones(self.volume, dtype=bool)
            if boundary == "simple":
                keep = c[:, k] < self.half_side
            i = np.arange(self.volume)[keep]
            j = plus[keep]
            src.append(np.minimum(i, j))
            dst.append(np.maximum(i, j))
        return np.concatenate(src), np.concatenate(dst)

    def torus_delta(self, a, b) -> np.ndarray:
        """Componentwise minimal-image displacement ``b - a`` (sites as linear indices)."""
        d = self.coords(b) - self.coords(a)
        M = self.side
        return (d + self.half_side) % M - self.half_side

    def torus_distance(self, a, b) -> np.ndarray:
        """Max-norm distance on the torus between linear site indices."""
        return np.abs(self.torus_delta(a, b)).max(axis=-1)


def build_box(d: int, L: int) -> LatticeBox:
    if int(d) != d or int(L) != L or d <= 0 or L <= 0:
        raise LatticeError("invalid lattice: need d >= 1 and L >= 1")
    d, L = int(d), int(L)
    if (2 * L + 1) ** d > sys.maxsize:
        raise LatticeError("box too large")
    return LatticeBox(d, L)


@dataclass(frozen=True)
class DisorderSpec:
    """Single-site distribution: ``coupling * X`` where ``X`` has density g.

    ``kind`` is ``"uniform"`` (on ``[a, b]``), ``"piecewise"`` (constant
    density ``weights[i]`` on ``[breakpoints[i], breakpoints[i+1]]``) or
    ``"constant"`` (every site equal to ``value``; non-physical, oracle tests
    only).
    """

    kind: str = "uniform"
    a: float = -0.5
    b: float = 0.5
    coupling: float = 1.0
    breakpoints: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()
    value: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.coupling) and self.coupling > 0):
            raise DisorderError("coupling must be a positive finite number")
        if self.kind == "uniform":
            if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
                raise DisorderError("uniform support needs finite a < b")
        elif self.kind == "piecewise":
            bp = np.asarray(self.breakpoints, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if bp.ndim != 1 or len(bp) < 2 or len(w) != len(bp) - 1:
                raise DisorderError("piecewise density needs k+1 breakpoints and k weights")
            if not np.all(np.isfinite(bp)) or np.any(np.diff(bp) <= 0):
                raise DisorderError("breakpoints must be finite and strictly increasing")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DisorderError("weights must be finite and nonnegative")
            if abs(float(np.sum(w * np.diff(bp))) - 1.0) > 1e-12:
                raise DisorderError("density does not integrate to 1")
            object.__setattr__(self, "breakpoints", tuple(float(x) for x in bp))
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
        elif self.kind == "constant":
            if not np.isfinite(self.value):
                raise DisorderError("constant value must be finite")
        else:
            raise DisorderError(f"unknown disorder kind {self.kind!r}")

    @property
    def non_physical(self) -> bool:
        return self.kind == "constant"

    @property
    def support(self) -> tuple[float, float]:
        """Support of the scaled single-site law ``coupling * X``."""
        if self.kind == "uniform":
            lo, hi = self.a, self.b
        elif self.kind == "piecewise":
            lo, hi = self.breakpoints[0], self.breakpoints[-1]
        else:
            lo = hi = self.value
        return self.coupling * lo, self.coupling * hi

    def to_dict(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "a": self.a, "b": self.b, "coupling": self.coupling}
        if self.kind == "piecewise":
            return {
                "kind": "piecewise",
                "breakpoints": list(self.breakpoints),
                "weights": list(self.weights),
                "coupling": self.coupling,
            }
        return {"kind": "constant", "value": self.value, "coupling": self.coupling}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DisorderSpec":
        d = dict(d)
        kind = d.pop("kind", "uniform")
        allowed = {
            "uniform": {"a", "b", "coupling"},
            "piecewise": {"breakpoints", "weights", "coupling"},
            "constant": {"value", "coupling"},
        }.get(kind)
        if allowed is None:
            raise DisorderError(f"unknown disorder kind {kind!r}")
        extra = set(d) - allowed
        if extra:
            raise DisorderError(f"unexpected fields for {kind}: {sorted(extra)}")
        if "breakpoints" in d:
            d["breakpoints"] = tuple(d["breakpoints"])
            d["weights"] = tuple(d["weights"])
        return cls(kind=kind, **d)

    @classmethod
    def from_json(cls, text: str) -> "DisorderSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DisorderRealization:
    values: np.ndarray = field(repr=False)
    seed: int
    spec: DisorderSpec

    def __len__(self):
        return len(self.values)


def sample_disorder(spec: DisorderSpec, box: LatticeBox, seed: int) -> DisorderRealization:
    """Draw ``N`` i.i.d. site energies; a pure function of ``(spec, box, seed)``."""
    n = box.volume
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    if spec.kind == "uniform":
        x = rng.uniform(spec.a, spec.b, size=n)
    elif spec.kind == "piecewise":
        bp = np.asarray(spec.breakpoints)
        mass = np.asarray(spec.weights) * np.diff(bp)
        cdf = np.cumsum(mass)
        cdf /= cdf[-1]
        seg = np.searchsorted(cdf, rng.random(n), side="right")
        seg = np.minimum(seg, len(mass) - 1)
        x = bp[seg] + rng.random(n) * (bp[seg + 1] - bp[seg])
    else:
        x = np.full(n, spec.value, dtype=float)
    values = spec.coupling * x
    values.setflags(write=False)
    return DisorderRealization(values, int(seed), spec)


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """``H = A + diag(omega)`` with ``A`` the torus (or free) adjacency matrix.

    Storage is implicit; dense and sparse views are built on demand.
    ``hopping=0`` gives a purely diagonal matrix (test mode).
    """

    box: LatticeBox
    diagonal: np.ndarray = field(repr=False)
    boundary: str = "periodic"
    hopping: float = 1.0

    @property
    def n(self) -> int:
        return len(self.diagonal)

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.box.edges(self.boundary)

    @cached_property
    def norm_inf(self) -> float:
        """Max absolute row sum."""
        i, j = self.edges
        deg = np.bincount(i, minlength=self.n) + np.bincount(j, minlength=self.n)
        return float(np.max(np.abs(self.diagonal) + abs(self.hopping) * deg))

    def to_sparse(self) -> sp.csr_matrix:
        i, j = self.edges
        n = self.n
        off = np.full(len(i), self.hopping, dtype=float)
        A = sp.coo_matrix((off, (i, j)), shape=(n, n))
        return (A + A.T + sp.diags(self.diagonal)).tocsr()

    def to_dense(self) -> np.ndarray:
        H = np.diag(np.asarray(self.diagonal, dtype=float))
        i, j = self.edges
        H[i, j] = self.hopping
        H[j, i] = self.hopping
        return H

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        return self.to_sparse()

    @property
    def is_chain(self) -> bool:
        return self.box.dim == 1

    def chain_arrays(self) -> tuple[np.ndarray, np.ndarray, float]:
        """For d = 1: diagonal, sub-diagonal and corner entry ``H[0, N-1]``."""
        if not self.is_chain:
            raise ValueError("chain_arrays requires d = 1")
        n = self.n
        off = np.full(n - 1, self.hopping, dtype=float)
        corner = self.hopping if self.boundary == "periodic" else 0.0
        return np.ascontiguousarray(self.diagonal, dtype=float), off, corner

    def gershgorin(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.edges
        deg = np.bincount(i, minlength=self.n) + np.bincount(j, minlength=self.n)
        r = abs(self.hopping) * deg
        return self.diagonal - r, self.diagonal + r


def assemble_hamiltonian(
    box: LatticeBox,
    omega: DisorderRealization | Sequence[float] | np.ndarray,
    boundary: str = "periodic",
    hopping: float = 1.0,
) -> HamiltonianMatrix:
    values = omega.values if isinstance(omega, DisorderRealization) else omega
    values = np.array(values, dtype=float)
    if values.ndim != 1 or len(values) != box.volume:
        raise ValueError(f"potential has length {values.size}, box has {box.volume} sites")
    if boundary not in BOUNDARIES:
        raise LatticeError(f"unknown boundary {boundary!r}")
    values.setflags(write=False)
    return HamiltonianMatrix(box, values, boundary, float(hopping))


def spectrum_bounds(spec: DisorderSpec, d: int) -> tuple[float, float]:
    """Almost-sure spectrum ``[-2d, 2d] + supp(coupling * g)``."""
    lo, hi = spec.support
    return -2.0 * d + lo, 2.0 * d + hi


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to build ``H`` for one disorder seed."""

    dim: int
    half_side: int
    disorder: DisorderSpec
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise LatticeError(f"unknown boundary {self.boundary!r}")
        build_box(self.dim, self.half_side)

    @property
    def box(self) -> LatticeBox:
        return build_box(self.dim, self.half_side)

    def hamiltonian(self, seed: int) -> HamiltonianMatrix:
        box = self.box
        return assemble_hamiltonian(box, sample_disorder(self.disorder, box, seed), self.boundary)

    def envelope(self) -> tuple[float, float]:
        return spectrum_bounds(self.disorder, self.dim)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "half_side": self.half_side,
            "disorder": self.disorder.to_dict(),
            "boundary": self.boundary,
        }
