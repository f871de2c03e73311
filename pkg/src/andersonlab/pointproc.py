"""Rescaled local level statistics and their Poisson limit laws.

Levels near ``E0`` are unfolded as ``xi_j = |Lambda| nu0 (E_j - E0)``; counts
of ``xi_j`` in fixed intervals are compared with independent Poisson laws of
mean ``|I|`` through total-variation distances. Finite-sample thresholds come
from simulating the limit law itself with the same sample size.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from ._mc import derive_seed, map_ordered
from .dos import DosTable, density_at, interval_mass
from .eig import SpectralData, count_in_interval
from .model import ModelSpec

TAIL_MASS = 1e-4
CALIBRATION_REPS = 200
CALIBRATION_QUANTILE = 0.99
MIN_THRESHOLD = 0.02


class AsymptoticWarning(UserWarning):
    """A finite-size run sits outside the regime where its limit law applies."""


@dataclass(frozen=True)
class RescaledConfiguration:
    E0: float
    nu0: float
    volume: int
    points: np.ndarray = field(repr=False)

    def energies(self) -> np.ndarray:
        return self.E0 + self.points / (self.volume * self.nu0)


@dataclass(frozen=True)
class CountSample:
    counts: np.ndarray
    seed: int | None = None


@dataclass(frozen=True)
class ScaleSpec:
    beta: float
    delta: float
    dim: int = 1

    def __post_init__(self):
        check_beta(self.beta, self.dim)
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def check_beta(beta: float, dim: int):
    lo = dim / (dim + 2)
    if not lo < beta < 1:
        raise ValueError(f"inadmissible exponent: beta={beta} must satisfy {lo:.6g} < beta < 1")


def rescale_levels(levels, E0: float, nu0: float, volume: int) -> RescaledConfiguration:
    if isinstance(levels, SpectralData):
        levels = levels.eigenvalues
    if not nu0 > 0:
        raise ValueError("density nonpositive at reference energy")
    if volume < 1:
        raise ValueError("volume must be >= 1")
    pts = volume * nu0 * (np.asarray(levels, dtype=float) - E0)
    return RescaledConfiguration(float(E0), float(nu0), int(volume), np.sort(pts))


def admissible_window(E0: float, beta: float, volume: int, dim: int = 1):
    """Energy window ``E0 +- |Lambda|^-beta`` and the rescaled range ``|Lambda|^(1-beta) [-1, 1]``."""
    check_beta(beta, dim)
    w = volume ** (-beta)
    r = volume ** (1 - beta)
    return (E0 - w, E0 + w), (-r, r)


def _validate_intervals(intervals):
    ivs = [tuple(map(float, iv)) for iv in intervals]
    for a, b in ivs:
        if a > b:
            raise ValueError("interval must satisfy a <= b")
    order = sorted(ivs)
    for (a0, b0), (a1, b1) in zip(order, order[1:]):
        if a1 < b0:
            raise ValueError("intervals not disjoint")
    return ivs


def interval_counts(
    config: RescaledConfiguration,
    intervals: Sequence[tuple[float, float]],
    *,
    delta: float | None = None,
    beta: float | None = None,
    seed: int | None = None,
) -> CountSample:
    """Counts of rescaled points in each closed interval."""
    ivs = _validate_intervals(intervals)
    if delta is not None and len(ivs) > 1:
        order = sorted(ivs)
        sep = min(a1 - b0 for (_, b0), (a1, _) in zip(order, order[1:]))
        if sep < math.exp(-config.volume**delta):
            warnings.warn("intervals closer than exp(-|Lambda|^delta)", AsymptoticWarning, stacklevel=2)
    if beta is not None:
        r = config.volume ** (1 - beta)
        if any(a < -r or b > r for a, b in ivs):
            warnings.warn("interval leaves the admissible rescaled range", AsymptoticWarning, stacklevel=2)
    p = config.points
    counts = np.array(
        [np.searchsorted(p, b, side="right") - np.searchsorted(p, a, side="left") for a, b in ivs],
        dtype=np.int64,
    )
    return CountSample(counts, seed)


def poisson_reference(means, counts) -> float:
    """Product of independent Poisson pmfs (computed in log space)."""
    means = np.asarray(means, dtype=float)
    counts = np.asarray(counts)
    if np.any(means < 0):
        raise ValueError("means must be nonnegative")
    return float(np.exp(np.sum(stats.poisson.logpmf(counts, means))))


def truncation_limit(mean: float, tail: float = TAIL_MASS) -> int:
    """Smallest ``K`` with ``P(Poisson(mean) > K) < tail``."""
    K = int(stats.poisson.ppf(1 - tail, mean))
    while stats.poisson.sf(K, mean) >= tail:
        K += 1
    return K


def _joint_cells(counts: np.ndarray, limits: Sequence[int]) -> np.ndarray:
    """Flat cell index of each row on the truncated grid; overflow rows map to the last cell."""
    limits = np.asarray(limits)
    over = np.any(counts > limits, axis=1)
    flat = np.ravel_multi_index(tuple(np.minimum(counts, limits).T), tuple(limits + 1))
    flat[over] = int(np.prod(limits + 1))
    return flat


def empirical_pmf(counts: np.ndarray, limits: Sequence[int]) -> np.ndarray:
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    ncell = int(np.prod(np.asarray(limits) + 1)) + 1
    return np.bincount(_joint_cells(counts, limits), minlength=ncell) / len(counts)


def product_pmf(marginals: Sequence[np.ndarray]) -> np.ndarray:
    """Joint pmf on the truncated grid (plus overflow cell) of independent marginals.

    Each marginal is given on ``0..K`` (its own overflow excluded).
    """
    joint = marginals[0]
    for m in marginals[1:]:
        joint = np.multiply.outer(joint, m)
    flat = np.ravel(joint)
    return np.append(flat, max(0.0, 1.0 - flat.sum()))


def poisson_pmf_grid(means: Sequence[float], limits: Sequence[int]) -> np.ndarray:
    return product_pmf([stats.poisson.pmf(np.arange(K + 1), m) for m, K in zip(means, limits)])


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def calibrate(statistic: Callable[[np.ndarray], float], simulate: Callable[[np.random.Generator], np.ndarray],
              seed: int, reps: int = CALIBRATION_REPS) -> tuple[float, np.ndarray]:
    """99th percentile of ``statistic`` over ``reps`` samples of the exact limit law (floored at 0.02)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    vals = np.array([statistic(simulate(rng)) for _ in range(reps)])
    return max(MIN_THRESHOLD, float(np.quantile(vals, CALIBRATION_QUANTILE))), vals


@dataclass
class CountTestReport:
    means: list
    limits: list
    sample_size: int
    empirical_pmf: np.ndarray
    reference_pmf: np.ndarray
    tv_joint: float
    tv_marginals: list
    threshold: float | None

    def passed(self, floor: float = 0.0) -> bool:
        return self.tv_joint <= max(floor, self.threshold or 0.0)

    def to_dict(self) -> dict:
        return {
            "means": [float(m) for m in self.means],
            "limits": [int(k) for k in self.limits],
            "sample_size": self.sample_size,
            "empirical_pmf": [float(x) for x in self.empirical_pmf],
            "reference_pmf": [float(x) for x in self.reference_pmf],
            "tv_joint": self.tv_joint,
            "tv_marginals": [float(x) for x in self.tv_marginals],
            "threshold": self.threshold,
        }


def _stack_counts(samples) -> np.ndarray:
    rows = [s.counts if isinstance(s, CountSample) else np.asarray(s) for s in samples]
    return np.atleast_2d(np.asarray(rows, dtype=np.int64))


def _poisson_tv(counts: np.ndarray, means, limits) -> float:
    return tv_distance(empirical_pmf(counts, limits), poisson_pmf_grid(means, limits))


def count_distribution_test(samples, means, *, calibration_seed: int | None = 0,
                            reps: int = CALIBRATION_REPS, min_samples: int = 100) -> CountTestReport:
    """TV distance between empirical joint counts and independent Poisson(means)."""
    counts = _stack_counts(samples)
    means = [float(m) for m in np.atleast_1d(means)]
    if counts.shape[1] != len(means):
        raise ValueError("one mean per interval required")
    if len(counts) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(counts)}")
    limits = [truncation_limit(m) for m in means]
    emp = empirical_pmf(counts, limits)
    ref = poisson_pmf_grid(means, limits)
    tv_marg = [_poisson_tv(counts[:, [i]], [m], [K]) for i, (m, K) in enumerate(zip(means, limits))]
    threshold = None
    if calibration_seed is not None:
        R = len(counts)
        threshold, _ = calibrate(
            lambda c: _poisson_tv(c, means, limits),
            lambda rng: rng.poisson(means, size=(R, len(means))),
            calibration_seed, reps,
        )
    return CountTestReport(means, limits, len(counts), emp, ref, tv_distance(emp, ref), tv_marg, threshold)


def _independence_tv(pairs: np.ndarray, limits) -> float:
    joint = empirical_pmf(pairs, limits)
    margs = [np.bincount(np.minimum(pairs[:, i], limits[i] + 1), minlength=limits[i] + 2) / len(pairs)
             for i in range(2)]
    # keep each marginal's overflow mass in the product's overflow cell
    return tv_distance(joint, product_pmf([m[:-1] for m in margs]))


@dataclass
class IndependenceReport:
    means: list
    limits: list
    sample_size: int
    joint_pmf: np.ndarray
    tv_independence: float
    tv_poisson: float
    threshold_independence: float | None
    threshold_poisson: float | None
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "means": self.means,
            "limits": self.limits,
            "sample_size": self.sample_size,
            "joint_pmf": [float(x) for x in self.joint_pmf],
            "tv_independence": self.tv_independence,
            "tv_poisson": self.tv_poisson,
            "threshold_independence": self.threshold_independence,
            "threshold_poisson": self.threshold_poisson,
            "warnings": list(self.warnings),
        }


def independence_test(pairs, means, *, calibration_seed: int | None = 0,
                      reps: int = CALIBRATION_REPS) -> IndependenceReport:
    """Joint law of ``(k+, k-)`` against the product of its marginals and against product Poisson."""
    pairs = _stack_counts(pairs)
    if pairs.shape[1] != 2:
        raise ValueError("pairs must have two columns")
    means = [float(m) for m in means]
    limits = [truncation_limit(m) for m in means]
    tv_ind = _independence_tv(pairs, limits)
    tv_poi = _poisson_tv(pairs, means, limits)
    th_ind = th_poi = None
    if calibration_seed is not None:
        R = len(pairs)
        sim = lambda rng: rng.poisson(means, size=(R, 2))  # noqa: E731
        th_ind, _ = calibrate(lambda c: _independence_tv(c, limits), sim, calibration_seed, reps)
        th_poi, _ = calibrate(lambda c: _poisson_tv(c, means, limits), sim, calibration_seed + 1, reps)
    return IndependenceReport(means, limits, len(pairs), empirical_pmf(pairs, limits),
                              tv_ind, tv_poi, th_ind, th_poi)


# simulation drivers ------------------------------------------------------------------


def _energy_window(E0, nu0, volume, iv):
    return E0 + iv[0] / (volume * nu0), E0 + iv[1] / (volume * nu0)


def _counts_one(index, model: ModelSpec, windows, master_seed):
    H = model.hamiltonian(derive_seed(master_seed, index))
    return [count_in_interval(H, w) for w in windows]


def simulate_counts(model: ModelSpec, windows, R: int, seed: int, workers: int = 1) -> np.ndarray:
    """Per-realization eigenvalue counts in fixed energy windows (inertia counting only)."""
    fn = partial(_counts_one, model=model, windows=[tuple(map(float, w)) for w in windows], master_seed=seed)
    return np.asarray(map_ordered(fn, range(R), workers), dtype=np.int64).reshape(R, len(windows))


MIN_DENSITY_LEVELS = 400


def reference_density(table: DosTable, E0: float) -> float:
    """``nu(E0)`` from the table; warns when the estimate rests on few sampled levels."""
    nu0 = density_at(table, E0)
    if not nu0 > 0:
        raise ValueError("density nonpositive at reference energy")
    meta = table.metadata
    if {"realizations", "half_side", "dim"} <= set(meta):
        h = meta.get("h_steps", 5) * table.step
        levels = meta["realizations"] * (2 * meta["half_side"] + 1) ** meta["dim"] * 2 * h * nu0
        if levels < MIN_DENSITY_LEVELS:
            warnings.warn(f"density at {E0} estimated from about {levels:.0f} levels; "
                          "rescaled statistics will be biased", AsymptoticWarning, stacklevel=2)
    return nu0


def levelstats_experiment(model: ModelSpec, table: DosTable, E0: float, intervals, R: int, seed: int,
                          workers: int = 1, nu0: float | None = None, beta: float | None = None,
                          delta: float | None = None):
    """Counts of unfolded levels near ``E0`` in the given rescaled intervals, against Poisson."""
    ivs = _validate_intervals(intervals)
    box = model.box
    if beta is not None:
        check_beta(beta, model.dim)
    nu0 = reference_density(table, E0) if nu0 is None else nu0
    msgs = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        interval_counts(RescaledConfiguration(E0, nu0, box.volume, np.zeros(0)), ivs, delta=delta, beta=beta)
    msgs += [str(w.message) for w in caught]
    windows = [_energy_window(E0, nu0, box.volume, iv) for iv in ivs]
    counts = simulate_counts(model, windows, R, seed, workers)
    means = [b - a for a, b in ivs]
    report = count_distribution_test(counts, means, calibration_seed=derive_seed(seed, 2**40))
    return counts, report, {"nu0": nu0, "windows": windows, "warnings": msgs}


def two_energy_experiment(model: ModelSpec, table: DosTable, E0: float, E1: float, U_plus, U_minus,
                          R: int, seed: int, workers: int = 1):
    """Counts in ``U+`` around ``E0`` and ``U-`` around ``E1`` from the same realizations."""
    box = model.box
    nu0 = reference_density(table, E0)
    nu1 = reference_density(table, E1)
    msgs = []
    sep = box.volume * abs(E0 - E1)
    if sep < 100:
        msgs.append(f"volume*|E0-E0'| = {sep:.3g} < 100: divergence condition weakly met")
    windows = [_energy_window(E0, nu0, box.volume, U_plus), _energy_window(E1, nu1, box.volume, U_minus)]
    pairs = simulate_counts(model, windows, R, seed, workers)
    means = [U_plus[1] - U_plus[0], U_minus[1] - U_minus[0]]
    report = independence_test(pairs, means, calibration_seed=derive_seed(seed, 2**40))
    report.warnings = msgs
    return pairs, report, {"nu": [nu0, nu1], "windows": windows, "separation": sep}


def large_deviation_bound(mean_count: float, delta: float) -> float:
    """``exp(-(N(I)|Lambda|)^delta / delta)``."""
    return math.exp(-(mean_count**delta) / delta)


def _interval_count_one(index, model, J, master_seed):
    H = model.hamiltonian(derive_seed(master_seed, index))
    return count_in_interval(H, J)


def concentration_experiment(models: Sequence[ModelSpec], table: DosTable, J, eps: float, R: int, seed: int,
                             workers: int = 1, delta: float | None = None, alpha: float = 0.05):
    """Empirical ``P(|N(J, omega) - N(J)|Lambda|| >= eps N(J)|Lambda|)`` per box size."""
    if not 0 < eps:
        raise ValueError("eps must be positive")
    mass = interval_mass(table, J)
    if not mass > 0:
        raise ValueError("interval has zero integrated density")
    rows = []
    for k, model in enumerate(models):
        vol = model.box.volume
        fn = partial(_interval_count_one, model=model, J=tuple(map(float, J)), master_seed=derive_seed(seed, k))
        counts = np.asarray(map_ordered(fn, range(R), workers), dtype=np.int64)
        expected = mass * vol
        hits = int(np.sum(np.abs(counts - expected) >= eps * expected))
        lo, hi = proportion_confint(hits, R, alpha=alpha, method="wilson")
        row = {
            "half_side": model.half_side,
            "volume": vol,
            "eps": eps,
            "expected_count": expected,
            "mean_count": float(counts.mean()),
            "std_count": float(counts.std()),
            "tail": hits / R,
            "ci_low": float(lo),
            "ci_high": float(hi),
        }
        if delta is not None:
            row["bound"] = large_deviation_bound(expected, delta)
        rows.append(row)
    tails = [r["tail"] for r in rows]
    monotone = all(b <= a for a, b in zip(tails, tails[1:]))
    return rows, monotone
