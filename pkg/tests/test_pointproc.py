import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from andersonlab.dos import estimate_dos
from andersonlab.model import DisorderSpec, ModelSpec, build_box
from andersonlab.pointproc import (
    AsymptoticWarning,
    RescaledConfiguration,
    ScaleSpec,
    admissible_window,
    concentration_experiment,
    count_distribution_test,
    empirical_pmf,
    independence_test,
    interval_counts,
    large_deviation_bound,
    levelstats_experiment,
    poisson_pmf_grid,
    poisson_reference,
    rescale_levels,
    truncation_limit,
    tv_distance,
    two_energy_experiment,
)


def config(points):
    return RescaledConfiguration(0.0, 1.0, 100, np.sort(np.asarray(points, dtype=float)))


def test_rescale_arithmetic():
    c = rescale_levels([0.1, 0.2], 0.1, 0.5, 100)
    assert np.allclose(c.points, [0.0, 5.0], atol=1e-12)
    with pytest.raises(ValueError, match="density nonpositive"):
        rescale_levels([0.1], 0.0, 0.0, 100)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=20), st.floats(-1, 1), st.floats(0.01, 10),
       st.integers(1, 10**6), st.floats(-1, 1))
def test_rescale_equivariance_and_inverse(levels, E0, nu0, vol, t):
    c = rescale_levels(levels, E0, nu0, vol)
    assert np.allclose(c.energies(), np.sort(levels), rtol=1e-12, atol=1e-12)
    shifted = rescale_levels(np.asarray(levels) + t, E0, nu0, vol)
    assert np.allclose(shifted.points, c.points + vol * nu0 * t, rtol=1e-9, atol=1e-6)


def test_interval_normalization_scales_points():
    levels = [0.01, 0.02, -0.03]
    a = rescale_levels(levels, 0.0, 0.15, 1000)
    b = rescale_levels(levels, 0.0, 0.12, 1000)
    assert np.allclose(b.points, a.points * (0.12 / 0.15))


def test_admissible_window():
    (lo, hi), (rlo, rhi) = admissible_window(0.0, 0.5, 10_000)
    assert hi - lo == pytest.approx(2e-2) and (rlo, rhi) == pytest.approx((-100, 100))
    with pytest.raises(ValueError, match="inadmissible exponent"):
        admissible_window(0.0, 1 / 3, 10_000)
    with pytest.raises(ValueError, match="inadmissible exponent"):
        ScaleSpec(0.4, 0.1, dim=2)
    _, (rlo, rhi) = admissible_window(0.0, 0.999999, 10_000)
    assert rhi == pytest.approx(1.0, abs=1e-4)


def test_interval_counts_examples():
    assert list(interval_counts(config([-0.5, 0.2, 3]), [(-1, 0), (0.1, 1)]).counts) == [1, 1]
    assert list(interval_counts(config([]), [(-1, 0), (0.1, 1)]).counts) == [0, 0]
    with pytest.raises(ValueError, match="intervals not disjoint"):
        interval_counts(config([0.0]), [(0, 2), (1, 3)])


@given(st.lists(st.floats(-5, 5).filter(lambda x: x != 1.0), max_size=30))
def test_count_additivity(pts):
    c = interval_counts(config(pts), [(0, 1), (1, 2)]).counts
    assert c.sum() == interval_counts(config(pts), [(0, 2)]).counts[0]


@given(st.lists(st.floats(-5, 5), max_size=30), st.floats(0.1, 10))
def test_density_scaling_maps_intervals(pts, c):
    base = config(pts)
    scaled = RescaledConfiguration(0.0, c, 100, base.points * c)
    iv = (-1.0, 2.0)
    assert (interval_counts(base, [iv]).counts[0]
            == interval_counts(scaled, [(c * iv[0], c * iv[1])]).counts[0])


def test_separation_and_range_warnings():
    with pytest.warns(AsymptoticWarning):
        interval_counts(config([0.0]), [(0, 1), (1, 2)], delta=0.5)
    with pytest.warns(AsymptoticWarning):
        interval_counts(config([0.0]), [(-50, 50)], beta=0.9)


def test_poisson_reference_values():
    assert poisson_reference([2.0], [0]) == pytest.approx(math.exp(-2), abs=1e-12)
    assert poisson_reference([1.0, 1.0], [1, 1]) == pytest.approx(math.exp(-2), abs=1e-12)
    assert sum(poisson_reference([3.7], [k]) for k in range(100)) == pytest.approx(1.0, abs=1e-12)
    assert poisson_reference([1.0, 1.0], [0, 0]) == pytest.approx(0.1353352832366127, abs=1e-12)


@given(st.floats(0.1, 20))
def test_truncated_pmf_normalized(m):
    K = truncation_limit(m)
    p = poisson_pmf_grid([m], [K])
    assert abs(p.sum() - 1) <= 1e-12
    assert p[-1] < 1e-4


@given(st.lists(st.integers(0, 12), min_size=1, max_size=40))
def test_tv_in_unit_interval(counts):
    K = truncation_limit(2.0)
    p = empirical_pmf(np.array(counts)[:, None], [K])
    tv = tv_distance(p, poisson_pmf_grid([2.0], [K]))
    assert 0 <= tv <= 1


def test_degenerate_zero_counts():
    rep = count_distribution_test(np.zeros((200, 1), int), [2.0], calibration_seed=None)
    assert rep.tv_joint == pytest.approx(1 - math.exp(-2), abs=1e-12)


def test_genuine_poisson_passes_calibration():
    rng = np.random.default_rng(0)
    samples = rng.poisson([2.0, 1.0], size=(2000, 2))
    rep = count_distribution_test(samples, [2.0, 1.0], calibration_seed=7)
    assert rep.tv_joint <= rep.threshold
    assert rep.threshold >= 0.02
    with pytest.raises(ValueError):
        count_distribution_test(samples[:50], [2.0, 1.0])


def test_independent_streams_pass():
    rng = np.random.default_rng(1)
    pairs = rng.poisson([2.0, 2.0], size=(2000, 2))
    rep = independence_test(pairs, [2.0, 2.0], calibration_seed=3)
    assert rep.tv_independence <= rep.threshold_independence
    assert rep.tv_poisson <= rep.threshold_poisson


def test_diagonal_law_independence_tv():
    # brute force: 1 - sum_k p_k^2 for the diagonal law of Poisson(2) against its product
    k = np.arange(60)
    p = np.exp(-2) * 2.0**k / special.factorial(k)
    brute = 0.5 * np.abs(np.diag(p) - np.outer(p, p)).sum()
    assert brute == pytest.approx(1 - np.exp(-4) * special.i0(4), abs=1e-12)
    rng = np.random.default_rng(2)
    x = rng.poisson(2.0, 200_000)
    rep = independence_test(np.column_stack([x, x]), [2.0, 2.0], calibration_seed=None)
    assert rep.tv_independence == pytest.approx(brute, abs=0.01)


def test_large_deviation_bound_value():
    assert large_deviation_bound(100, 0.5) == pytest.approx(math.exp(-20))


@pytest.fixture(scope="module")
def small_table():
    return estimate_dos(DisorderSpec(coupling=5.0), build_box(1, 200), R=150, master_seed=1, boundary="simple")


def test_levelstats_small(small_table):
    model = ModelSpec(1, 200, DisorderSpec(coupling=5.0), "simple")
    counts, rep, info = levelstats_experiment(model, small_table, 0.0, [(-1, 0), (0, 1)], 300, 4)
    assert counts.shape == (300, 2)
    assert abs(counts.mean() - 1) < 0.2
    assert rep.tv_joint <= max(0.1, rep.threshold)


def test_two_energy_same_window_is_diagonal(small_table):
    model = ModelSpec(1, 200, DisorderSpec(coupling=5.0), "simple")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pairs, rep, info = two_energy_experiment(model, small_table, 0.0, 0.0, (-1, 1), (-1, 1), 200, 1)
    assert np.array_equal(pairs[:, 0], pairs[:, 1])
    assert any("divergence" in w for w in rep.warnings)


def test_concentration_full_envelope(small_table):
    lo, hi = small_table.energies[0], small_table.energies[-1]
    models = [ModelSpec(1, L, DisorderSpec(coupling=5.0), "simple") for L in (50, 100)]
    rows, monotone = concentration_experiment(models, small_table, (lo, hi), 1.0, 20, 0)
    assert all(r["tail"] == 0 for r in rows) and monotone
    assert {"ci_low", "ci_high", "tail", "half_side"} <= set(rows[0])
