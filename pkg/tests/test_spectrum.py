import numpy as np
import pytest
from scipy import stats

from error_handler import DomainError, InsideSupportError
from schema import NoiseModel
from spectrum import (
    SpectralContext,
    TauMeasure,
    compute_p_minus,
    compute_S_plus,
    compute_spike_location,
    delta_on_grid,
    density_left_edge,
    empirical_context,
    left_edge,
    limiting_density,
    limiting_measure_for,
    p_minus_guaranteed,
    power_of_delta,
    solve_delta,
    solve_delta_blind,
    solve_delta_hat,
    solve_gamma,
    support_edge,
    weight_of_delta,
)
from weightfn import UnitWeight, WeightFunction

C = 0.2
SQRT_C = np.sqrt(C)


def _mp_density(x, c=C):
    a, b = (1 - np.sqrt(c)) ** 2, (1 + np.sqrt(c)) ** 2
    return np.sqrt(np.maximum((b - x) * (x - a), 0.0)) / (2 * np.pi * c * x)


# -----------------------------
# Closed forms for nu = delta_1
# -----------------------------
def test_gamma_for_dirac(weight):
    assert solve_gamma(TauMeasure.dirac(), weight) == pytest.approx(1.25, rel=1e-10)


def test_thresholds_for_dirac(dirac_ctx):
    assert compute_S_plus(dirac_ctx) == pytest.approx(1.2 * (1 + SQRT_C) ** 2 / (1.25 * 0.76), rel=1e-10)
    assert compute_S_plus(dirac_ctx) == pytest.approx(2.6456, abs=1e-4)
    assert support_edge(dirac_ctx) == pytest.approx((1 + SQRT_C) ** 2, rel=1e-9)
    assert left_edge(dirac_ctx) == pytest.approx((1 - SQRT_C) ** 2, rel=1e-7)
    assert compute_p_minus(dirac_ctx) == pytest.approx(SQRT_C, rel=1e-8)


def test_spike_location_power_and_weight(dirac_ctx):
    assert compute_spike_location(1.0, dirac_ctx) == pytest.approx(2.4, rel=1e-9)
    delta = solve_delta(2.4, dirac_ctx)
    assert delta == pytest.approx(-1.0 / 6.0, rel=1e-9)
    assert power_of_delta(delta, dirac_ctx) == pytest.approx(1.0, rel=1e-9)
    assert weight_of_delta(delta, dirac_ctx) == pytest.approx(1.5, rel=1e-9)


def test_delta_beyond_the_bulk(dirac_ctx):
    expected = (-3.2 + np.sqrt(7.04)) / 8
    assert solve_delta(4.0, dirac_ctx) == pytest.approx(expected, rel=1e-9)
    assert solve_delta(4.0, dirac_ctx, method="picard") == pytest.approx(expected, rel=1e-9)


def test_delta_left_of_the_bulk(dirac_ctx):
    expected = (0.7 - np.sqrt(0.41)) / 0.2
    assert solve_delta(0.1, dirac_ctx) == pytest.approx(expected, rel=1e-9)
    assert solve_delta(0.1, dirac_ctx, method="picard") == pytest.approx(expected, rel=1e-8)


def test_delta_solves_its_equation(dirac_ctx):
    xs = [2.2, 2.6, 3.0, 5.0, 20.0]
    for x, delta in zip(xs, delta_on_grid(xs, dirac_ctx)):
        assert delta < 0
        assert dirac_ctx.x_of_delta(delta) == pytest.approx(x, rel=1e-10)


def test_delta_inside_the_support(dirac_ctx):
    with pytest.raises(InsideSupportError) as info:
        solve_delta(1.0, dirac_ctx)
    assert info.value.x == 1.0
    with pytest.raises(DomainError):
        solve_delta(0.0, dirac_ctx)


def test_blind_delta_reaches_the_root_beyond_the_bulk(dirac_ctx):
    delta, converged = solve_delta_blind(4.0, dirac_ctx)
    assert converged
    assert delta == pytest.approx(solve_delta(4.0, dirac_ctx), rel=1e-10)


def test_no_spike_below_detectability(dirac_ctx):
    assert compute_spike_location(0.3, dirac_ctx) is None
    assert compute_spike_location(SQRT_C, dirac_ctx) is None


def test_guaranteed_threshold_maps_to_S_plus(dirac_ctx):
    guaranteed = p_minus_guaranteed(dirac_ctx)
    assert guaranteed > compute_p_minus(dirac_ctx)
    assert compute_spike_location(guaranteed, dirac_ctx) == pytest.approx(dirac_ctx.S_plus, rel=1e-7)


def test_weight_decreases_to_one_with_power(dirac_ctx):
    weights = [weight_of_delta(solve_delta(compute_spike_location(p, dirac_ctx), dirac_ctx), dirac_ctx) for p in (1.0, 3.0, 10.0, 100.0)]
    assert all(w1 > w2 for w1, w2 in zip(weights, weights[1:]))
    assert weights[-1] == pytest.approx(1.0, abs=0.01)


def test_unit_weight_classical_spike(unit_dirac_ctx):
    ctx = unit_dirac_ctx
    assert ctx.gamma == 1.0
    assert ctx.S_plus == ctx.support_edge
    assert ctx.p_minus == pytest.approx(SQRT_C, rel=1e-8)
    for p in (1.0, 2.0, 5.0):
        lam = compute_spike_location(p, ctx)
        assert lam == pytest.approx((1 + p) * (1 + C / p), rel=1e-9)
        w = weight_of_delta(solve_delta(lam, ctx), ctx)
        assert w == pytest.approx((1 + C / p) / (1 - C / p ** 2), rel=1e-9)


# -----------------------------
# Measures and contexts
# -----------------------------
def test_measure_validation():
    with pytest.raises(DomainError):
        TauMeasure("empirical", np.array([1.0, -1.0]), np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        TauMeasure("empirical", np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    with pytest.raises(DomainError):
        TauMeasure.student_t(2.0)


def test_student_measure_is_deterministic_and_normalized():
    a = TauMeasure.student_t(10.0, size=50000)
    b = TauMeasure.student_t(10.0, size=50000)
    np.testing.assert_array_equal(a.atoms, b.atoms)
    assert np.all(np.diff(a.atoms) > 0)
    assert a.mean() == pytest.approx(1.0, abs=0.01)


def test_student_quadrature_matches_the_law_quantiles():
    m = TauMeasure.student_t(100.0, size=1000)
    # the median atom sits between the two central quantiles of t^2 (beta - 2) / beta
    lo, hi = stats.t.ppf([0.7495, 0.7505], 100.0) ** 2 * 0.98
    assert lo <= np.median(m.atoms) <= hi


@pytest.mark.parametrize("beta", [10.0, 100.0])
def test_gamma_is_stable_across_quadrature_sizes(weight, beta):
    coarse = solve_gamma(TauMeasure.student_t(beta, size=20000), weight)
    fine = solve_gamma(TauMeasure.student_t(beta, size=400000), weight)
    assert coarse == pytest.approx(fine, rel=2e-3)


def test_reduced_measure_keeps_the_mean():
    m = TauMeasure.student_t(10.0, size=10000)
    r = m.reduced(100)
    assert r.size == 100
    assert r.mean() == pytest.approx(m.mean(), rel=1e-12)
    assert m.reduced(20000) is m


def test_limiting_measure_for_noise_models():
    assert limiting_measure_for(NoiseModel.gaussian()).kind == "dirac"
    assert limiting_measure_for(NoiseModel.outlier(1, 100.0)).kind == "dirac"
    assert limiting_measure_for(NoiseModel.student_t(100.0), size=1000).kind == "analytic"


def test_student_context_orders_its_thresholds(weight):
    ctx = SpectralContext.build(TauMeasure.student_t(100.0, size=20000), weight)
    assert 0 < ctx.left_edge < ctx.support_edge <= ctx.S_plus
    assert 0 < ctx.p_minus < ctx.p_minus_guaranteed
    assert ctx.summary()["S_plus"] == ctx.S_plus


def test_empirical_context_of_unit_taus_matches_dirac(dirac_ctx, weight):
    ctx = empirical_context(np.ones(50), 1.25, weight, 0.2)
    assert ctx.measure.kind == "empirical"
    assert ctx.support_edge == pytest.approx(dirac_ctx.support_edge, rel=1e-9)
    assert solve_delta_hat(3.0, np.ones(50), 1.25, weight, 0.2) == pytest.approx(solve_delta(3.0, dirac_ctx), rel=1e-9)


def test_delta_hat_needs_x_beyond_S_plus(weight):
    with pytest.raises(DomainError):
        solve_delta_hat(2.4, np.ones(50), 1.25, weight, 0.2)


# -----------------------------
# Density
# -----------------------------
def test_density_matches_marchenko_pastur(unit_dirac_ctx):
    grid = np.array([0.7, 1.0, 1.4])
    density = limiting_density(unit_dirac_ctx, grid, eps=1e-5)
    np.testing.assert_allclose(density, _mp_density(grid), atol=1e-3)


def test_robust_density_for_dirac_is_marchenko_pastur(dirac_ctx):
    # v(gamma) = 1, so the robust law reduces to the unit-variance one
    grid = np.array([0.8, 1.2])
    np.testing.assert_allclose(limiting_density(dirac_ctx, grid, eps=1e-5), _mp_density(grid), atol=1e-3)


def test_density_vanishes_outside_the_support(unit_dirac_ctx):
    density, unconverged = limiting_density(unit_dirac_ctx, np.array([3.0, 4.0]), eps=1e-5, return_flags=True)
    assert np.all(density < 1e-3)
    assert not unconverged.any()


def test_density_left_edge():
    grid = np.linspace(0, 1, 11)
    density = np.where(grid >= 0.3, 1.0, 0.0)
    assert density_left_edge(grid, density) == pytest.approx(0.3)
    assert np.isnan(density_left_edge(grid, np.zeros(11)))


def test_density_needs_positive_eps(unit_dirac_ctx):
    with pytest.raises(DomainError):
        limiting_density(unit_dirac_ctx, [1.0], eps=0.0)


@pytest.mark.slow
def test_student_thresholds_for_the_histogram_setting():
    ctx = SpectralContext.build(TauMeasure.student_t(100.0), WeightFunction(alpha=0.2, c=0.2))
    # a heavy-tail law pushes the bound S+ above the bulk edge
    assert ctx.S_plus > ctx.support_edge
    assert ctx.S_plus / ctx.support_edge < 1.5
