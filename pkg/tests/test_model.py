import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from andersonlab.eig import eigen_full
from andersonlab.model import (
    DisorderError,
    DisorderSpec,
    LatticeError,
    ModelSpec,
    assemble_hamiltonian,
    build_box,
    sample_disorder,
    spectrum_bounds,
)


def test_smallest_torus():
    box = build_box(1, 1)
    assert (box.side, box.volume) == (3, 3)
    assert sorted(box.neighbors[0]) == [1, 2]


def test_2d_smallest_torus_has_four_distinct_neighbors():
    box = build_box(2, 1)
    assert box.volume == 9
    for row in box.neighbors:
        assert len(set(row)) == 4


def test_wraparound_neighbor():
    box = build_box(1, 500)
    assert box.volume == 1001
    assert box.neighbors[1000, 0] == 0


@pytest.mark.parametrize("d, L", [(0, 3), (1, 0), (-1, 2), (2, -4)])
def test_invalid_lattice(d, L):
    with pytest.raises(LatticeError, match="invalid lattice"):
        build_box(d, L)


def test_box_too_large():
    with pytest.raises(LatticeError, match="box too large"):
        build_box(8, 10**6)


@given(st.integers(1, 3), st.integers(1, 4), st.data())
def test_index_coords_bijection(d, L, data):
    box = build_box(d, L)
    i = data.draw(st.integers(0, box.volume - 1))
    assert box.index(box.coords(i)) == i
    c = box.all_coords
    assert np.array_equal(box.index(c), np.arange(box.volume))
    assert c.min() == -L and c.max() == L


def test_row_major_indexing():
    box = build_box(2, 1)
    # coordinates shifted to [0, M)^d; last axis varies fastest
    assert box.index([-1, -1]) == 0
    assert box.index([-1, 0]) == 1
    assert box.index([0, -1]) == 3


@given(st.integers(1, 3), st.integers(1, 5), st.data())
def test_torus_distance_is_bounded_metric(d, L, data):
    box = build_box(d, L)
    idx = st.integers(0, box.volume - 1)
    a, b, c = (data.draw(idx) for _ in range(3))
    dab = box.torus_distance(a, b)
    assert dab == box.torus_distance(b, a)
    assert (dab == 0) == (a == b)
    assert dab <= box.side // 2
    assert box.torus_distance(a, c) <= dab + box.torus_distance(b, c)


def test_sample_support_and_determinism():
    spec = DisorderSpec(coupling=5.0)
    box = build_box(1, 500)
    w1 = sample_disorder(spec, box, 7)
    w2 = sample_disorder(spec, box, 7)
    assert np.array_equal(w1.values, w2.values)
    assert w1.values.min() >= -2.5 and w1.values.max() <= 2.5
    assert not np.array_equal(w1.values, sample_disorder(spec, box, 8).values)


def test_sample_mean_clt():
    spec = DisorderSpec(coupling=5.0)
    box = build_box(1, 50_000)
    n = box.volume
    w = sample_disorder(spec, box, 2024).values
    assert abs(w.mean()) <= 4 * (5 / math.sqrt(12)) / math.sqrt(n)


def test_piecewise_density_sampling():
    spec = DisorderSpec(kind="piecewise", breakpoints=(0.0, 1.0, 3.0), weights=(0.5, 0.25))
    w = sample_disorder(spec, build_box(1, 20_000), 1).values
    assert w.min() >= 0 and w.max() <= 3
    # mass 1/2 on each piece
    assert abs(np.mean(w < 1) - 0.5) < 0.01


@pytest.mark.parametrize("kwargs", [
    {"kind": "uniform", "a": 1.0, "b": 1.0},
    {"kind": "uniform", "a": 0.0, "b": math.inf},
    {"kind": "piecewise", "breakpoints": (0.0, 1.0), "weights": (0.9,)},
    {"kind": "gaussian"},
    {"coupling": 0.0},
])
def test_invalid_disorder(kwargs):
    with pytest.raises(DisorderError):
        DisorderSpec(**kwargs)


def test_disorder_json_roundtrip():
    text = '{"kind":"uniform","a":-0.5,"b":0.5,"coupling":5.0}'
    spec = DisorderSpec.from_json(text)
    assert spec.coupling == 5.0
    assert json.loads(spec.to_json()) == json.loads(text)
    pw = DisorderSpec(kind="piecewise", breakpoints=(0.0, 0.5, 1.0), weights=(1.5, 0.5))
    assert DisorderSpec.from_dict(pw.to_dict()) == pw


def test_constant_mode_is_flagged():
    assert DisorderSpec(kind="constant", value=0.3).non_physical
    assert not DisorderSpec().non_physical


def test_triangle_matrix(triangle):
    A = triangle.to_dense()
    assert np.array_equal(A, np.ones((3, 3)) - np.eye(3))


def test_trace_equals_potential_sum():
    H = assemble_hamiltonian(build_box(1, 1), [5.0, 0.0, 0.0])
    A = H.to_dense()
    assert np.trace(A) == 5.0
    assert np.array_equal(A - np.diag(np.diag(A)), np.ones((3, 3)) - np.eye(3))


def test_2d_row_sums():
    H = assemble_hamiltonian(build_box(2, 1), np.zeros(9))
    A = H.to_dense()
    assert np.all(A.sum(axis=1) == 4)
    v = np.ones(9) / 3
    assert np.allclose(A @ v, 4 * v)


def test_length_mismatch():
    with pytest.raises(ValueError):
        assemble_hamiltonian(build_box(1, 2), np.zeros(4))


def test_simple_boundary_is_open_chain():
    A = assemble_hamiltonian(build_box(1, 2), np.zeros(5), "simple").to_dense()
    assert A[0, 4] == 0 and A[0, 1] == 1
    assert np.array_equal(A, np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1))


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32))
def test_hamiltonian_structure(d, L, seed):
    box = build_box(d, L)
    w = sample_disorder(DisorderSpec(coupling=3.0), box, seed)
    A = assemble_hamiltonian(box, w).to_dense()
    assert np.array_equal(A, A.T)
    off = A - np.diag(np.diag(A))
    assert np.all((off == 0) | (off == 1))
    assert np.all(off.sum(axis=1) == 2 * d)
    assert np.array_equal(np.diag(A), w.values)
    assert np.array_equal(assemble_hamiltonian(box, w).to_sparse().toarray(), A)


@pytest.mark.parametrize("spec, d, expected", [
    (DisorderSpec(coupling=10.0), 1, (-7.0, 7.0)),
    (DisorderSpec(a=0.0, b=1.0), 2, (-4.0, 5.0)),
    (DisorderSpec(kind="constant", value=0.0), 1, (-2.0, 2.0)),
])
def test_spectrum_bounds(spec, d, expected):
    assert spectrum_bounds(spec, d) == pytest.approx(expected)


@given(st.integers(1, 2), st.integers(1, 4), st.integers(0, 2**32),
       st.sampled_from(["periodic", "simple"]))
def test_envelope_trace_and_gershgorin(d, L, seed, boundary):
    model = ModelSpec(d, L, DisorderSpec(coupling=5.0), boundary)
    H = model.hamiltonian(seed)
    w = eigen_full(H).eigenvalues
    lo, hi = model.envelope()
    assert w.min() >= lo - 1e-12 and w.max() <= hi + 1e-12
    n = model.box.volume
    assert abs(w.sum() - H.diagonal.sum()) <= 1e-9 * n * max(1.0, np.abs(H.diagonal).max())
    glo, ghi = H.gershgorin()
    for lam in w:
        assert np.any((glo - 1e-12 <= lam) & (lam <= ghi + 1e-12))


@given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32), st.data())
def test_translation_covariance(d, L, seed, data):
    box = build_box(d, L)
    w = sample_disorder(DisorderSpec(coupling=2.0), box, seed).values
    shift = np.array(data.draw(st.lists(st.integers(0, box.side - 1), min_size=d, max_size=d)))
    c = box.all_coords
    perm = box.index(((c + L + shift) % box.side) - L)
    w2 = np.empty_like(w)
    w2[perm] = w
    A = assemble_hamiltonian(box, w).to_dense()
    B = assemble_hamiltonian(box, w2).to_dense()
    assert np.array_equal(B[np.ix_(perm, perm)], A)
    assert np.allclose(np.linalg.eigvalsh(A), np.linalg.eigvalsh(B), atol=1e-12)
