import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from andersonlab.dos import DosTable, estimate_dos
from andersonlab.model import DisorderSpec, ModelSpec, build_box
from andersonlab.spacings import (
    EmpiricalDistribution,
    InsufficientLevels,
    dls_experiment,
    exp_survival,
    g_limit,
    pooled_dls,
    spacing_sequence,
    sup_distance,
    survival_curve,
    uniform_level_sets,
    window_spacings,
    write_spacings_csv,
)


def piecewise_table(a, b, step=1e-4):
    """Density a on [0, 0.5], b on [0.5, 1], zero elsewhere on [-0.5, 1.5]."""
    E = np.round(np.arange(-0.5, 1.5 + step / 2, step), 12)
    nu = np.where((E >= 0) & (E < 0.5), a, 0.0) + np.where((E >= 0.5) & (E <= 1), b, 0.0)
    ids = np.concatenate([[0.0], np.cumsum((nu[1:] + nu[:-1]) / 2 * np.diff(E))])
    return DosTable(E, ids, nu, {"h_steps": 2})


def test_spacing_sequence_examples():
    assert list(spacing_sequence([0, 1, 3], 2)) == [2, 4]
    assert list(spacing_sequence([0, 1, 1, 3], 1)) == [1, 0, 2]
    with pytest.raises(InsufficientLevels, match="insufficient levels"):
        spacing_sequence([1.0], 1.0)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.floats(0.01, 100))
def test_spacing_linearity_and_sign(levels, c):
    lv = np.sort(levels)
    s = spacing_sequence(lv, c)
    assert len(s) == len(lv) - 1 and np.all(s >= 0)
    assert np.allclose(spacing_sequence(lv, 2 * c), 2 * s)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.floats(0, 12))
def test_survival_axioms(values, x):
    e = EmpiricalDistribution.from_values(values)
    assert e.survival(0.0) == 1.0
    assert e.survival(x) >= e.survival(x + 0.1)
    assert e.survival(max(values) + 1e-9) == 0.0
    assert e.survival_right(x) <= e.survival(x)


def test_single_sample_sup():
    assert sup_distance(EmpiricalDistribution.from_values([math.log(2)]), exp_survival) == pytest.approx(0.5)


def test_all_zero_sample_sup():
    e = EmpiricalDistribution.from_values(np.zeros(10))
    grid = np.concatenate([[0.0], np.geomspace(1e-12, 50, 5000)])
    dense = np.max(np.abs(e.survival(grid) - np.exp(-grid)))
    assert sup_distance(e, exp_survival) == pytest.approx(1.0)
    assert dense == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.floats(0, 5, allow_subnormal=False), min_size=1, max_size=25))
def test_sup_matches_dense_grid_oracle(values):
    e = EmpiricalDistribution.from_values(values)
    v = np.unique(values)
    probes = np.unique(np.concatenate([[0.0], v, v + 1e-12, v - 1e-12, np.linspace(0, 6, 2001)]))
    probes = probes[probes >= 0]
    dense = np.max(np.abs(e.survival(probes) - np.exp(-probes)))
    s = sup_distance(e, exp_survival)
    assert dense <= s + 1e-9
    assert s <= dense + 1e-9


def test_sup_between_empiricals_is_symmetric():
    a = EmpiricalDistribution.from_values([0.1, 0.5, 0.9])
    b = EmpiricalDistribution.from_values([0.2, 0.5])
    assert sup_distance(a, b) == pytest.approx(sup_distance(b, a))


def test_size_can_exceed_values():
    e = EmpiricalDistribution.from_values([1.0], size=2)
    assert e.survival(0.0) == 0.5
    with pytest.raises(ValueError):
        EmpiricalDistribution.from_values([1.0, 2.0], size=1)


def test_window_pairs_last_level_with_next_above():
    e = window_spacings([0.0, 0.1, 0.3, 0.7], (0.0, 0.3), 1.0)
    assert np.allclose(e.values, [0.1, 0.2, 0.4])
    assert e.size == 3
    assert window_spacings([0.0, 0.5], (0.4, 0.6), 1.0).size == 0


def test_g_constant_density_is_exponential():
    t = piecewise_table(1.0, 1.0)
    x = np.linspace(0, 5, 11)
    assert np.allclose(g_limit(t, (0.0, 1.0), x), np.exp(-x), atol=1e-6)
    assert g_limit(t, (0.2, 0.4), 0.0) == pytest.approx(1.0, abs=1e-9)
    # on a narrower interval nu_J = 1/|J|
    assert np.allclose(g_limit(t, (0.0, 0.5), x), np.exp(-x / 0.5), atol=1e-6)


def test_g_two_level_closed_form():
    a, b = 0.4, 1.6
    t = piecewise_table(a, b)
    m = 0.5 * a + 0.5 * b
    x = np.linspace(0, 6, 25)
    exact = 0.5 * (a / m) * np.exp(-a * x / m) + 0.5 * (b / m) * np.exp(-b * x / m)
    assert np.allclose(g_limit(t, (0.0, 1.0), x), exact, atol=1e-3)


def test_g_bounds_from_calibrated_table():
    t = estimate_dos(DisorderSpec(coupling=5.0), build_box(1, 200), R=20, master_seed=0)
    J = (-1.0, 1.0)
    x = np.linspace(0, 4, 41)
    g = g_limit(t, J, x)
    assert g[0] == pytest.approx(1.0, abs=1e-9)
    assert np.all(np.diff(g) <= 1e-15)
    sel = (t.energies >= J[0]) & (t.energies <= J[1])
    nuJ = t.density[sel] / np.trapezoid(t.density[sel], t.energies[sel])
    assert np.all(g >= np.exp(-x * nuJ.max()) - 1e-3)
    assert np.all(g <= np.exp(-x * nuJ.min()) + 1e-3)


def test_uniform_oracle_passes():
    # interior window: every level has its right neighbour inside [0, 1]
    n, R = 400, 100
    sets = uniform_level_sets(n, R, 3)
    emp, empty = pooled_dls(sets, (0.25, 0.75), float(n))
    assert empty == 0
    # 99% Kolmogorov bound for an i.i.d. sample of this size
    assert sup_distance(emp, exp_survival) <= 1.63 / math.sqrt(emp.size)


def test_normalization_modes_are_scalar_multiples(tmp_path):
    model = ModelSpec(1, 300, DisorderSpec(coupling=5.0), "simple")
    t = estimate_dos(model.disorder, model.box, R=30, master_seed=1, boundary="simple")
    e1, _, r1 = dls_experiment(model, t, 20, 5, normalization="density")
    e2, _, r2 = dls_experiment(model, t, 20, 5, normalization="interval")
    assert np.allclose(e2.values * r1.normalization / r2.normalization, e1.values)
    assert abs(r1.normalization / r2.normalization - 1) < 0.1
    write_spacings_csv(tmp_path / "s.csv", e1)
    assert (tmp_path / "s.csv").read_text().startswith("spacing\n")
    xs, se, sr = survival_curve(e1, exp_survival, points=11)
    assert se[0] == 1.0 and sr[0] == 1.0


def test_macro_mode_reference():
    model = ModelSpec(1, 300, DisorderSpec(coupling=5.0), "simple")
    t = estimate_dos(model.disorder, model.box, R=30, master_seed=1, boundary="simple")
    emp, ref, rep = dls_experiment(model, t, 10, 2, mode="macro", J=(-1.0, 1.0))
    assert rep.mode == "macro" and rep.window == (-1.0, 1.0)
    assert ref(0.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        dls_experiment(model, t, 2, 2, mode="macro")
