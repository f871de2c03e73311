"""Level-spacing distributions: local (against ``exp(-x)``) and macroscopic.

Spacings are ``c (E_{j+1} - E_j)`` for every level ``E_j`` inside the window;
the last level in the window pairs with the first level above it. The
empirical survival function divides by the number of levels in the window.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from ._mc import derive_seed, map_ordered
from .dos import DosTable, density_at, interval_mass
from .eig import eigenvalues_by_rank, window_ranks
from .model import ModelSpec


class InsufficientLevels(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Survival function ``S(x) = #{v >= x} / size`` of a nonnegative sample.

    ``size`` may exceed the number of values (levels with no right neighbour
    count in the denominator only).
    """

    values: np.ndarray = field(repr=False)
    size: int

    @classmethod
    def from_values(cls, values, size: int | None = None) -> "EmpiricalDistribution":
        v = np.sort(np.asarray(values, dtype=float))
        size = len(v) if size is None else int(size)
        if size < len(v):
            raise ValueError("size smaller than the number of values")
        return cls(v, size)

    @classmethod
    def pooled(cls, parts: Sequence["EmpiricalDistribution"]) -> "EmpiricalDistribution":
        parts = list(parts)
        if not parts:
            return cls(np.zeros(0), 0)
        return cls.from_values(np.concatenate([p.values for p in parts]), sum(p.size for p in parts))

    def survival(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.size == 0:
            return np.zeros_like(x)
        return (len(self.values) - np.searchsorted(self.values, x, side="left")) / self.size

    def survival_right(self, x) -> np.ndarray:
        """``S(x+) = #{v > x} / size``."""
        x = np.asarray(x, dtype=float)
        if self.size == 0:
            return np.zeros_like(x)
        return (len(self.values) - np.searchsorted(self.values, x, side="right")) / self.size


def spacing_sequence(levels, c: float) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    if len(levels) < 2:
        raise InsufficientLevels("insufficient levels")
    if not c > 0:
        raise ValueError("normalization must be positive")
    return c * np.diff(levels)


def sup_distance(emp: EmpiricalDistribution, reference) -> float:
    """``sup_{x >= 0} |S_emp(x) - S_ref(x)|``.

    ``reference`` is either a continuous nonincreasing callable or another
    :class:`EmpiricalDistribution`. The supremum is taken over the jump
    points of the step functions, on both sides of each jump.
    """
    if isinstance(reference, EmpiricalDistribution):
        xs = np.unique(np.concatenate([[0.0], emp.values, reference.values]))
        xs = xs[xs >= 0]
        left = np.abs(emp.survival(xs) - reference.survival(xs))
        right = np.abs(emp.survival_right(xs) - reference.survival_right(xs))
        return float(max(left.max(), right.max()))
    xs = np.unique(np.concatenate([[0.0], emp.values[emp.values >= 0]]))
    ref = np.asarray(reference(xs), dtype=float)
    left = np.abs(emp.survival(xs) - ref)
    right = np.abs(emp.survival_right(xs) - ref)
    return float(max(left.max(), right.max()))


dls_statistic = sup_distance


def exp_survival(x):
    return np.exp(-np.asarray(x, dtype=float))


def g_limit(table: DosTable, J, x):
    """``g(x) = int_J exp(-nu_J(l) x) nu_J(l) dl`` with ``nu_J = nu / int_J nu``.

    Trapezoid rule on the table grid restricted to ``J`` (endpoints interpolated).
    """
    a, b = map(float, J)
    interval_mass(table, J)  # range check
    E = table.energies
    inner = E[(E > a) & (E < b)]
    lam = np.concatenate([[a], inner, [b]])
    nu = table.density_on(lam)
    mass = np.trapezoid(nu, lam)
    if not mass > 0:
        raise ValueError("interval has zero density mass")
    nuJ = nu / mass
    x = np.asarray(x, dtype=float)
    vals = np.trapezoid(np.exp(-np.multiply.outer(x, nuJ)) * nuJ, lam, axis=-1)
    return vals


def window_spacings(levels, window, c: float, next_level: float | None = None) -> EmpiricalDistribution:
    """Spacings of the levels in ``window`` for one realization.

    ``levels`` is sorted; ``next_level`` (if known) is the first level above
    the window, used as the right neighbour of the window's last level.
    """
    a, b = window
    levels = np.sort(np.asarray(levels, dtype=float))
    inside = levels[(levels >= a) & (levels <= b)]
    above = levels[levels > b]
    nxt = above[0] if len(above) else next_level
    chain = inside if nxt is None else np.append(inside, nxt)
    if len(inside) < 2 or len(chain) < 2:
        # fewer than two levels in the window: nothing to contribute
        return EmpiricalDistribution(np.zeros(0), 0)
    return EmpiricalDistribution.from_values(spacing_sequence(chain, c), len(inside))


def _window_levels(index, model: ModelSpec, window, master_seed):
    H = model.hamiltonian(derive_seed(master_seed, index))
    k0, k1 = window_ranks(H, window)
    return eigenvalues_by_rank(H, k0, k1 + 1)


@dataclass
class DLSReport:
    mode: str
    window: tuple
    normalization: float
    sup_distance: float
    sample_size: int
    spacings: int
    empty_realizations: int
    threshold: float | None = None

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def pooled_dls(level_sets, window, c: float) -> tuple[EmpiricalDistribution, int]:
    """Pool per-realization spacings; returns the pooled distribution and the number of empty windows."""
    parts = [window_spacings(lv, window, c) for lv in level_sets]
    empty = sum(1 for p in parts if p.size == 0)
    return EmpiricalDistribution.pooled(parts), empty


def local_window(E0: float, volume: int, exponent: float = 0.3):
    """Default shrinking window: ``|I| = volume^-exponent`` centred at ``E0``."""
    w = volume ** (-exponent)
    return E0 - w / 2, E0 + w / 2


def dls_experiment(model: ModelSpec, table: DosTable, R: int, seed: int, *, mode: str = "local",
                   E0: float = 0.0, J=None, width_exponent: float = 0.3, normalization: str = "density",
                   workers: int = 1):
    """Pooled level-spacing survival function against its limit law.

    ``mode="local"``: window ``E0 +- volume^-width_exponent / 2`` and reference
    ``exp(-x)``; ``normalization="density"`` uses ``|Lambda| nu(E0)``,
    ``"interval"`` uses ``|Lambda| N(I)/|I|``. ``mode="macro"``: window ``J``,
    normalisation ``|Lambda| N(J)`` and reference ``g_limit(table, J, .)``.
    """
    vol = model.box.volume
    if mode == "local":
        window = local_window(E0, vol, width_exponent)
        if normalization == "density":
            c = vol * density_at(table, E0)
        elif normalization == "interval":
            c = vol * interval_mass(table, window) / (window[1] - window[0])
        else:
            raise ValueError(f"unknown normalization {normalization!r}")
        reference: Callable = exp_survival
    elif mode == "macro":
        if J is None:
            raise ValueError("macro mode needs an interval J")
        window = tuple(map(float, J))
        c = vol * interval_mass(table, window)
        reference = partial(g_limit, table, window)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not c > 0:
        raise ValueError("density nonpositive at reference energy")
    fn = partial(_window_levels, model=model, window=window, master_seed=seed)
    level_sets = map_ordered(fn, range(R), workers)
    emp, empty = pooled_dls(level_sets, window, c)
    report = DLSReport(mode, window, c, sup_distance(emp, reference), emp.size, len(emp.values), empty)
    return emp, reference, report


def write_spacings_csv(path, emp: EmpiricalDistribution):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["spacing"])
        for v in emp.values:
            w.writerow([repr(float(v))])


def survival_curve(emp: EmpiricalDistribution, reference, points: int = 201, xmax: float | None = None):
    xmax = (float(emp.values.max()) if len(emp.values) else 1.0) if xmax is None else xmax
    xs = np.linspace(0.0, xmax, points)
    ref = reference.survival(xs) if isinstance(reference, EmpiricalDistribution) else reference(xs)
    return xs, emp.survival(xs), np.asarray(ref, dtype=float)


def uniform_level_sets(n_levels: int, R: int, seed: int):
    """i.i.d. uniform points on ``[0, 1]`` (Poisson oracle input for the spacing pipeline)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return [np.sort(rng.random(n_levels)) for _ in range(R)]
