"""Localization centres, joint (energy, centre) processes and centre spacings."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple, Sequence

import numpy as np

from ._mc import derive_seed, map_ordered
from .dos import DosTable
from .eig import SpectralData, eigenpairs_in_window
from .model import LatticeBox, ModelSpec
from .pointproc import AsymptoticWarning, count_distribution_test, reference_density
from .spacings import EmpiricalDistribution, sup_distance


@dataclass(frozen=True)
class LocalizationCenter:
    index: int
    site: int
    coords: tuple
    amplitude: float


def localization_center(vector, box: LatticeBox, index: int = 0) -> LocalizationCenter:
    """Site of largest ``|phi|``; ties go to the smallest linear index."""
    v = np.asarray(vector, dtype=float)
    if v.shape != (box.volume,):
        raise ValueError("vector length does not match the box")
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("zero vector has no localization center")
    if abs(nrm - 1) > 1e-10:
        raise ValueError("vector is not normalized")
    a = np.abs(v)
    site = int(np.argmax(a))
    return LocalizationCenter(index, site, tuple(int(c) for c in box.coords(site)), float(a[site]))


def centers_of(spec: SpectralData, box: LatticeBox) -> np.ndarray:
    """Linear centre site of every eigenvector column."""
    if spec.eigenvectors is None:
        raise ValueError("missing eigenvectors")
    return np.argmax(np.abs(spec.eigenvectors), axis=0).astype(np.int64)


def _pairwise_diameter(box: LatticeBox, sites: np.ndarray) -> int:
    if len(sites) < 2:
        return 0
    c = box.coords(sites)
    d = np.abs(c[:, None, :] - c[None, :, :])
    d = np.minimum(d, box.side - d)
    return int(d.max())


def center_cloud_diameter(vector, box: LatticeBox, tau: float = 0.0) -> int:
    """Torus max-norm diameter of ``{g : |phi(g)| >= (1 - tau) max |phi|}``."""
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    a = np.abs(np.asarray(vector, dtype=float))
    top = a.max()
    sites = np.flatnonzero(a >= (1 - tau) * top) if tau > 0 else np.flatnonzero(a == top)
    return _pairwise_diameter(box, sites)


class JointPoints(NamedTuple):
    xi: np.ndarray  # rescaled energies
    x: np.ndarray  # (n, d) rescaled centres


def _check_scale(ell: float, box: LatticeBox):
    if ell <= 5 * math.log(box.volume) or ell > box.side:
        warnings.warn(f"scale {ell:g} outside (5 log|Lambda|, M]", AsymptoticWarning, stacklevel=3)


def rescaled_points(energies, sites, E0: float, nu0: float, energy_scale: float, space_scale: float,
                    box: LatticeBox) -> JointPoints:
    if not nu0 > 0:
        raise ValueError("density nonpositive at reference energy")
    xi = nu0 * (np.asarray(energies, dtype=float) - E0) * energy_scale**box.dim
    x = box.coords(np.asarray(sites, dtype=np.int64)).reshape(-1, box.dim) / space_scale
    return JointPoints(xi, x)


def joint_points(pairs: SpectralData, E0: float, nu0: float, ell: float, box: LatticeBox) -> JointPoints:
    """Points ``(nu0 (E_j - E0) ell^d, x_j / ell)`` with centres in ``[-L, L]^d``."""
    _check_scale(ell, box)
    return rescaled_points(pairs.eigenvalues, centers_of(pairs, box), E0, nu0, ell, ell, box)


def _as_cube(C, dim):
    C = np.asarray(C, dtype=float)
    if C.shape == (2,):
        C = np.tile(C, (dim, 1))
    if C.shape != (dim, 2) or np.any(C[:, 0] > C[:, 1]):
        raise ValueError("cube must be (lo, hi) or one (lo, hi) per axis")
    return C


def _overlap(a, b):
    return min(a[1], b[1]) - max(a[0], b[0]) > 0


def product_box_counts(points: JointPoints, boxes: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Counts of points in each closed box ``I x C`` and their Lebesgue reference means ``|I| |C|``."""
    dim = points.x.shape[1] if points.x.ndim == 2 else 1
    parsed = [(tuple(map(float, I)), _as_cube(C, dim)) for I, C in boxes]
    for i in range(len(parsed)):
        for j in range(i + 1, len(parsed)):
            (I1, C1), (I2, C2) = parsed[i], parsed[j]
            if _overlap(I1, I2) and all(_overlap(C1[k], C2[k]) for k in range(dim)):
                raise ValueError("boxes not disjoint")
    counts, means = [], []
    for I, C in parsed:
        inside = (points.xi >= I[0]) & (points.xi <= I[1])
        for k in range(dim):
            inside &= (points.x[:, k] >= C[k, 0]) & (points.x[:, k] <= C[k, 1])
        counts.append(int(inside.sum()))
        means.append((I[1] - I[0]) * float(np.prod(C[:, 1] - C[:, 0])))
    return np.array(counts, dtype=np.int64), np.array(means)


def noncovariant_count(pairs: SpectralData, E0: float, nu0: float, energy_scale: float, space_scale: float,
                       J, C, box: LatticeBox) -> tuple[int, float]:
    """Raw count of points with ``nu0 (E - E0) energy_scale^d`` in ``J`` and centre in ``space_scale * C``,
    and the count multiplied by ``(energy_scale / space_scale)^d``."""
    pts = rescaled_points(pairs.eigenvalues, centers_of(pairs, box), E0, nu0, energy_scale, space_scale, box)
    raw = int(product_box_counts(pts, [(J, C)])[0][0])
    return raw, raw * (energy_scale / space_scale) ** box.dim


def center_spacings(sites, nu0: float, width: float, box: LatticeBox) -> np.ndarray:
    """Nearest-other-centre torus max-norm distance times ``(nu0 |I|)^(1/d)``."""
    sites = np.asarray(sites, dtype=np.int64)
    if len(sites) < 2:
        return np.zeros(0)
    c = box.coords(sites)
    d = np.abs(c[:, None, :] - c[None, :, :])
    d = np.minimum(d, box.side - d).max(axis=-1).astype(float)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1) * (nu0 * width) ** (1.0 / box.dim)


def lattice_poisson_oracle(box: LatticeBox, intensity: float, R: int, seed: int, width: float = 1.0,
                           nu0: float | None = None) -> EmpiricalDistribution:
    """Pooled centre-spacing law for i.i.d. Bernoulli(intensity) site occupation.

    The lattice analogue of a homogeneous Poisson process of the given
    intensity, normalised as :func:`center_spacings` with ``nu0 * width = intensity``.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    vals = []
    for _ in range(R):
        sites = np.flatnonzero(rng.random(box.volume) < intensity)
        vals.append(center_spacings(sites, intensity, 1.0, box))
    return EmpiricalDistribution.from_values(np.concatenate(vals) if vals else np.zeros(0))


def dcs_limit(s, dim: int):
    return np.exp(-np.asarray(s, dtype=float) ** dim)


# simulation drivers ------------------------------------------------------------------


def _pairs_one(index, model: ModelSpec, window, master_seed, tau=None):
    """Eigenvalues, centre sites and amplitudes in ``window`` for one realization."""
    H = model.hamiltonian(derive_seed(master_seed, index))
    sd = eigenpairs_in_window(H, window)
    sites = centers_of(sd, model.box)
    amps = np.abs(sd.eigenvectors[sites, np.arange(len(sites))]) if len(sites) else np.zeros(0)
    out = {"E": sd.eigenvalues, "j": sd.indices, "site": sites, "amp": amps}
    if tau is not None:
        out["diam"] = np.array([center_cloud_diameter(sd.eigenvectors[:, i], model.box, tau)
                                for i in range(len(sites))], dtype=np.int64)
    return out


def window_pairs(model: ModelSpec, window, R: int, seed: int, workers: int = 1, tau=None) -> list[dict]:
    fn = partial(_pairs_one, model=model, window=tuple(map(float, window)), master_seed=seed, tau=tau)
    return map_ordered(fn, range(R), workers)


def centers_experiment(model: ModelSpec, window, R: int, seed: int, tau: float = 0.5, workers: int = 1):
    """Per-centre records and the median near-maximal-set diameter."""
    per = window_pairs(model, window, R, seed, workers, tau)
    records = []
    for r, p in enumerate(per):
        coords = model.box.coords(p["site"]).reshape(-1, model.dim)
        for i in range(len(p["E"])):
            records.append((r, int(p["j"][i]), float(p["E"][i]), tuple(int(c) for c in coords[i]),
                            float(p["amp"][i]), int(p["diam"][i])))
    diams = np.array([rec[5] for rec in records])
    summary = {
        "centers": len(records),
        "median_diameter": float(np.median(diams)) if len(diams) else None,
        "max_diameter": int(diams.max()) if len(diams) else None,
        "log_volume": math.log(model.box.volume),
        "tau": tau,
    }
    return records, summary


def joint_experiment(model: ModelSpec, table: DosTable, E0: float, ell: float, boxes, R: int, seed: int,
                     workers: int = 1, nu0: float | None = None):
    """Joint counts of (rescaled energy, rescaled centre) in product boxes against product Poisson."""
    box = model.box
    nu0 = reference_density(table, E0) if nu0 is None else nu0
    msgs = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        _check_scale(ell, box)
    msgs += [str(w.message) for w in caught]
    lo = min(float(I[0]) for I, _ in boxes)
    hi = max(float(I[1]) for I, _ in boxes)
    scale = nu0 * ell**box.dim
    window = (E0 + lo / scale, E0 + hi / scale)
    per = window_pairs(model, window, R, seed, workers)
    counts, means = [], None
    for p in per:
        pts = rescaled_points(p["E"], p["site"], E0, nu0, ell, ell, box)
        c, means = product_box_counts(pts, boxes)
        counts.append(c)
    counts = np.array(counts)
    report = count_distribution_test(counts, means, calibration_seed=derive_seed(seed, 2**40))
    return counts, report, {"nu0": nu0, "window": window, "c_ell": box.side / ell, "warnings": msgs}


def noncovariant_experiment(model: ModelSpec, table: DosTable, E0: float, energy_scale: float,
                            space_scale: float, J, C, R: int, seed: int, workers: int = 1,
                            nu0: float | None = None):
    box = model.box
    nu0 = reference_density(table, E0) if nu0 is None else nu0
    scale = nu0 * energy_scale**box.dim
    window = (E0 + J[0] / scale, E0 + J[1] / scale)
    per = window_pairs(model, window, R, seed, workers)
    raw = []
    for p in per:
        pts = rescaled_points(p["E"], p["site"], E0, nu0, energy_scale, space_scale, box)
        raw.append(int(product_box_counts(pts, [(J, C)])[0][0]))
    raw = np.array(raw, dtype=np.int64)
    factor = (energy_scale / space_scale) ** box.dim
    cube = _as_cube(C, box.dim)
    return raw, {
        "nu0": nu0,
        "window": window,
        "ratio_space_to_energy": space_scale / energy_scale,
        "zero_fraction": float(np.mean(raw == 0)),
        "mean_normalized": float(np.mean(raw) * factor),
        "target": (J[1] - J[0]) * float(np.prod(cube[:, 1] - cube[:, 0])),
    }


@dataclass
class DCSReport:
    dim: int
    window: tuple
    intensity: float
    sample_size: int
    empty_realizations: int
    sup_oracle: float
    sup_limit: float
    oracle_size: int
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def dcs_experiment(model: ModelSpec, table: DosTable, E0: float, width: float, R: int, seed: int,
                   workers: int = 1, oracle_factor: int = 10, nu0: float | None = None):
    """Pooled centre-spacing law against a same-intensity lattice Poisson oracle."""
    box = model.box
    nu0 = reference_density(table, E0) if nu0 is None else nu0
    msgs = []
    if width > 1 / math.log(box.volume) ** box.dim:
        msgs.append("window wider than 1/log^d|Lambda|")
    window = (E0 - width / 2, E0 + width / 2)
    per = window_pairs(model, window, R, seed, workers)
    parts, empty = [], 0
    for p in per:
        s = center_spacings(p["site"], nu0, width, box)
        if len(s) == 0:
            empty += 1
        parts.append(s)
    emp = EmpiricalDistribution.from_values(np.concatenate(parts))
    oracle = lattice_poisson_oracle(box, nu0 * width, oracle_factor * R, derive_seed(seed, 2**40))
    report = DCSReport(box.dim, window, nu0 * width, emp.size, empty, sup_distance(emp, oracle),
                       sup_distance(emp, partial(dcs_limit, dim=box.dim)), oracle.size, msgs)
    return emp, oracle, report
