"""Eigensolvers and inertia-based eigenvalue counting.

Counting uses Sylvester's law of inertia: the number of eigenvalues of ``H``
below ``E`` equals the number of negative pivots in a symmetric factorisation
of ``H - E I``. For d = 1 this is an O(N) compiled sweep (Sturm sequence for
the open chain, bordered elimination for the ring); otherwise a
Bunch-Kaufman LDL^T of the dense matrix is used.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .model import HamiltonianMatrix

log = logging.getLogger(__name__)

PIVOT_FLOOR = 1e-13
ENDPOINT_SHIFT = 1e-10
RESIDUAL_TOL = 1e-10
WINDOW_FULL_FRACTION = 0.2

Matrix = Union[HamiltonianMatrix, np.ndarray]


class EigenSolverError(RuntimeError):
    """Raised when an eigensolver fails to converge."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class SpectralData:
    """Sorted eigenvalues and, optionally, orthonormal eigenvectors as columns.

    ``indices`` holds the 0-based global rank of every eigenvalue (all of
    them for a full solve, a contiguous run for a window).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    residual_bound: float = 0.0
    indices: np.ndarray | None = None
    fallback: bool = False

    def __len__(self):
        return len(self.eigenvalues)

    def __post_init__(self):
        if self.indices is None:
            object.__setattr__(self, "indices", np.arange(len(self.eigenvalues)))


def _norm(H: Matrix) -> float:
    if isinstance(H, HamiltonianMatrix):
        return H.norm_inf
    return float(np.max(np.sum(np.abs(H), axis=1))) if H.size else 0.0


def _dense(H: Matrix) -> np.ndarray:
    return H.to_dense() if isinstance(H, HamiltonianMatrix) else np.asarray(H, dtype=float)


def _check_symmetric(A: np.ndarray):
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError("matrix must be square and non-empty")
    if not np.allclose(A, A.T, rtol=0, atol=0):
        raise ValueError("matrix must be symmetric")


def residuals(H: Matrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """``||H v_i - lambda_i v_i||_inf`` for every column."""
    if len(values) == 0:
        return np.zeros(0)
    Hv = H.sparse @ vectors if isinstance(H, HamiltonianMatrix) else H @ vectors
    return np.max(np.abs(Hv - vectors * values), axis=0)


def eigen_full(H: Matrix, want_vectors: bool = False) -> SpectralData:
    """Complete spectrum via LAPACK (Householder tridiagonalisation + QR/divide and conquer)."""
    nrm = _norm(H)
    try:
        if isinstance(H, HamiltonianMatrix) and H.is_chain and H.boundary == "simple":
            d, e, _ = H.chain_arrays()
            if want_vectors:
                w, v = sla.eigh_tridiagonal(d, e)
            else:
                w, v = sla.eigvalsh_tridiagonal(d, e, lapack_driver="sterf"), None
        else:
            A = _dense(H)
            _check_symmetric(A)
            if want_vectors:
                w, v = sla.eigh(A)
            else:
                w, v = sla.eigh(A, eigvals_only=True), None
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise EigenSolverError(f"eigensolver did not converge: {exc}") from exc
    if v is not None:
        bound = float(np.max(residuals(H, w, v), initial=0.0))
        if bound > RESIDUAL_TOL * max(nrm, 1.0):
            raise EigenSolverError(f"residual {bound:.3e} exceeds tolerance")
    else:
        bound = float(len(w) * np.finfo(float).eps * nrm)
    return SpectralData(np.asarray(w), v, bound)


def _ldl_inertia(A: np.ndarray, E: float, pivmin: float) -> tuple[int, bool]:
    n = A.shape[0]
    _, D, _ = sla.ldl(A - E * np.eye(n), lower=True, hermitian=True)
    neg, tiny, i = 0, False, 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(D[i : i + 2, i : i + 2])
            i += 2
        else:
            ev = D[i : i + 1, i]
            i += 1
        neg += int(np.sum(ev < 0))
        tiny |= bool(np.any(np.abs(ev) < pivmin))
    return neg, tiny


def _raw_counts(H: Matrix, energies: np.ndarray, pivmin: float) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(H, HamiltonianMatrix) and H.is_chain:
        d, e, c = H.chain_arrays()
        return _kernels.chain_counts(d, e, float(c), energies, pivmin)
    A = _dense(H)
    _check_symmetric(A)
    out = [_ldl_inertia(A, float(E), pivmin) for E in energies]
    return (
        np.array([o[0] for o in out], dtype=np.int64),
        np.array([o[1] for o in out], dtype=bool),
    )


def counts_below(H: Matrix, energies, direction: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`count_below`.

    Returns the counts and a mask of the probes that hit the pivot floor and
    were re-evaluated at ``E + direction * 1e-10 ||H||``.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    nrm = max(_norm(H), np.finfo(float).tiny)
    pivmin = PIVOT_FLOOR * nrm
    counts, tiny = _raw_counts(H, energies, pivmin)
    shifted = tiny.copy()
    step = ENDPOINT_SHIFT * nrm * direction
    probe = energies.copy()
    for attempt in range(1, 6):
        if not tiny.any():
            break
        probe[tiny] += step
        c2, t2 = _raw_counts(H, probe[tiny], pivmin)
        counts[tiny] = c2
        idx = np.flatnonzero(tiny)
        tiny[idx] = t2
    if tiny.any():
        raise EigenSolverError("pivot floor hit after repeated shifts")
    if shifted.any():
        log.debug("shift-perturbed count at %d probe(s)", int(shifted.sum()))
    return counts, shifted


def count_below(H: Matrix, E: float, *, info: bool = False):
    """Number of eigenvalues strictly below ``E`` (shift-perturbed near an eigenvalue).

    With ``info=True`` returns ``(count, shifted)``.
    """
    c, s = counts_below(H, [E])
    return (int(c[0]), bool(s[0])) if info else int(c[0])


def count_in_interval(H: Matrix, J) -> int:
    """Number of eigenvalues in the closed interval ``J = [a, b]``."""
    a, b = map(float, J)
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    hi, _ = counts_below(H, [b], direction=1.0)
    lo, _ = counts_below(H, [a], direction=-1.0)
    return int(hi[0] - lo[0])


def _bisect_chain(H: HamiltonianMatrix, k0: int, k1: int, bracket=None) -> np.ndarray:
    d, e, c = H.chain_arrays()
    nrm = H.norm_inf
    if bracket is None:
        lo_env, hi_env = H.gershgorin()
        lo, hi = float(lo_env.min()) - 1.0, float(hi_env.max()) + 1.0
    else:
        pad = 2 * ENDPOINT_SHIFT * max(nrm, 1.0)
        lo, hi = bracket[0] - pad, bracket[1] + pad
    tol = 4 * np.finfo(float).eps * max(nrm, 1.0)
    return _kernels.chain_bisect(d, e, float(c), lo, hi, k0, k1, tol, PIVOT_FLOOR * nrm)


def eigenvalues_by_rank(H: Matrix, k0: int, k1: int) -> np.ndarray:
    """Eigenvalues with 0-based global ranks ``k0 <= k < k1``."""
    n = H.n if isinstance(H, HamiltonianMatrix) else H.shape[0]
    k0, k1 = max(0, k0), min(n, k1)
    if k1 <= k0:
        return np.zeros(0)
    if isinstance(H, HamiltonianMatrix) and H.is_chain and (k1 - k0) <= WINDOW_FULL_FRACTION * n:
        return _bisect_chain(H, k0, k1)
    # wide rank ranges: a full eigenvalue-only solve is cheaper than selective bisection
    return eigen_full(H).eigenvalues[k0:k1]


def window_ranks(H: Matrix, J) -> tuple[int, int]:
    """Global rank range ``[k0, k1)`` of the eigenvalues inside closed ``J``."""
    a, b = map(float, J)
    k1, _ = counts_below(H, [b], direction=1.0)
    k0, _ = counts_below(H, [a], direction=-1.0)
    return int(k0[0]), int(k1[0])


def _inverse_iteration(H: HamiltonianMatrix, lams: np.ndarray, nrm: float):
    n = H.n
    S = H.sparse.tocsc()
    eye = sp.identity(n, format="csc")
    rng = np.random.Generator(np.random.PCG64(0x5EED))
    gap_tol = 1e-3 * max(nrm, 1.0)
    eps = np.finfo(float).eps
    vecs = np.empty((n, len(lams)))
    out = np.empty(len(lams))
    for i, lam in enumerate(lams):
        cluster = [j for j in range(i) if abs(lams[j] - lam) < gap_tol]
        # sigma is perturbed off lam so the factorisation is never exactly singular
        sigma = lam + 8 * eps * max(nrm, 1.0) * (1 + len(cluster))
        lu = spla.splu(S - sigma * eye)
        x = rng.standard_normal(n)
        for _ in range(4):
            x = lu.solve(x)
            for j in cluster:
                x -= (vecs[:, j] @ x) * vecs[:, j]
            x /= np.linalg.norm(x)
        vecs[:, i] = x
        out[i] = x @ (S @ x)
    return out, vecs


def eigenpairs_in_window(H: Matrix, J, want_vectors: bool = True) -> SpectralData:
    """Eigenpairs with eigenvalue in the closed window ``J``.

    Eigenvalues come from bisection on the inertia count, vectors from inverse
    iteration with reorthogonalisation inside clusters. Wide windows (more
    than 20% of the spectrum), non-chain lattices and any residual or
    orthogonality failure go through a full solve that is then filtered;
    ``fallback`` records that.
    """
    a, b = map(float, J)
    if a > b:
        raise ValueError("interval must satisfy a <= b")
    n = H.n if isinstance(H, HamiltonianMatrix) else H.shape[0]
    nrm = _norm(H)
    k0, k1 = window_ranks(H, (a, b))
    if k1 <= k0:
        return SpectralData(np.zeros(0), np.zeros((n, 0)) if want_vectors else None, 0.0, np.zeros(0, int))
    fast = isinstance(H, HamiltonianMatrix) and H.is_chain and (k1 - k0) <= WINDOW_FULL_FRACTION * n
    if fast:
        lams = _bisect_chain(H, k0, k1, (a, b))
        if not want_vectors:
            return SpectralData(lams, None, 4 * np.finfo(float).eps * nrm, np.arange(k0, k1))
        vals, vecs = _inverse_iteration(H, lams, nrm)
        res = residuals(H, vals, vecs)
        ortho = np.max(np.abs(vecs.T @ vecs - np.eye(len(vals))))
        order = np.argsort(vals, kind="stable")
        if res.max() <= RESIDUAL_TOL * nrm and ortho <= 1e-10 and np.all(np.abs(vals - lams) < 1e-8 * max(nrm, 1)):
            return SpectralData(vals[order], vecs[:, order], float(res.max()), np.arange(k0, k1))
        log.info("inverse iteration stagnated on window %s; full-solve fallback", (a, b))
    return _window_by_full_solve(H, k0, k1, want_vectors, fallback=fast)


def _window_by_full_solve(H, k0, k1, want_vectors, fallback):
    A = _dense(H)
    try:
        if want_vectors:
            w, v = sla.eigh(A, subset_by_index=(k0, k1 - 1))
        else:
            w, v = sla.eigh(A, eigvals_only=True, subset_by_index=(k0, k1 - 1)), None
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise EigenSolverError(f"eigensolver did not converge: {exc}", index=k0) from exc
    bound = float(np.max(residuals(H, w, v), initial=0.0)) if v is not None else 0.0
    return SpectralData(w, v, bound, np.arange(k0, k1), fallback=fallback)


def write_spectrum_csv(path, spec: SpectralData):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue"])
        for j, lam in zip(spec.indices, spec.eigenvalues):
            w.writerow([int(j), repr(float(lam))])
