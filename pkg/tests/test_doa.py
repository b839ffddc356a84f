import numpy as np
import pytest

from datagen import synthesize
from doa import (
    angle_grid,
    assign_closest,
    blind_grid,
    eta_gmusic,
    eta_music,
    eta_population,
    eta_robust_gmusic,
    eta_robust_gmusic_emp,
    eta_robust_music,
    eta_weighted,
    extract_angles,
    extract_angles_windowed,
    golden_section_search,
    gmusic_report,
    localization_curves,
    moment_tau_hat,
    noise_subspace_tau_hat,
    sample_covariance_estimate,
    sweep_grid,
)
from error_handler import DomainError
from inference import build_report
from schema import METHODS, LocalizationCurve, NoiseModel, SourceConfig
from scatter import solve_fixed_point
from spectrum import SpectralContext, TauMeasure
from utils import deg2rad, trial_streams, write_csv
from weightfn import UnitWeight, WeightFunction

from conftest import two_sources

GRID = deg2rad(np.arange(-30.0, 50.0, 0.5))


def test_music_without_sources_is_one():
    _, Y, _ = two_sources()
    np.testing.assert_allclose(eta_music(GRID, Y, 0), 1.0, atol=1e-12)


def test_music_values_are_projections(weight):
    _, Y, _ = two_sources()
    for values in (eta_music(GRID, Y, 2), eta_robust_music(GRID, solve_fixed_point(Y, weight), 2)):
        assert np.all(values >= 0) and np.all(values <= 1)


def test_scalar_angle_gives_scalar():
    _, Y, _ = two_sources()
    assert isinstance(eta_music(0.1, Y, 2), float)


def test_music_needs_L_below_N():
    _, Y, _ = two_sources(N=8)
    with pytest.raises(DomainError):
        eta_music(GRID, Y, 8)


def test_music_consistent_when_samples_dominate():
    sources = SourceConfig.from_degrees([10.0], [10.0])
    Y, _ = synthesize(sources, NoiseModel.gaussian(), 20, 20000, trial_streams(21, 0))
    assert eta_music(deg2rad(10.0), Y, 1) < 0.01


def test_weighted_form_without_spikes_is_one():
    assert np.all(eta_weighted(GRID, np.eye(8, dtype=complex), [], []) == 1.0)


def test_weighted_form_on_population_eigenvectors():
    sources, _, truth = two_sources()
    A = truth.steering
    _, vectors = np.linalg.eigh(A @ A.conj().T)
    top = vectors[:, ::-1]
    np.testing.assert_allclose(
        eta_weighted(GRID, top, [0, 1], [1.0, 1.0]),
        eta_population(GRID, sources, 8, A),
        atol=1e-10,
    )


def test_population_function_vanishes_at_the_sources():
    sources, _, _ = two_sources()
    values = eta_population(np.asarray(sources.angles), sources, 8)
    np.testing.assert_allclose(values, 0.0, atol=1e-10)


def test_unit_weight_robust_gmusic_equals_gmusic():
    _, Y, _ = two_sources()
    unit = UnitWeight(c=0.2)
    est = solve_fixed_point(Y, unit)
    report = build_report(est, SpectralContext.build(TauMeasure.dirac(), unit), L=2)
    np.testing.assert_allclose(
        eta_robust_gmusic(GRID, est, report),
        eta_gmusic(GRID, Y, "known", TauMeasure.dirac(), L=2),
        atol=1e-10,
    )


def test_report_mode_must_match(weight, dirac_ctx):
    _, Y, _ = two_sources()
    est = solve_fixed_point(Y, weight)
    known = build_report(est, dirac_ctx, L=2)
    with pytest.raises(DomainError):
        eta_robust_gmusic_emp(GRID, est, known)
    empirical = build_report(est, SpectralContext.from_estimate(est, weight), L=2)
    with pytest.raises(DomainError):
        eta_robust_gmusic(GRID, est, empirical)


def test_gmusic_modes():
    _, Y, _ = two_sources()
    est, report = gmusic_report(Y, "empirical", L=2)
    assert report.mode == "empirical"
    assert report.indices == [0, 1]
    with pytest.raises(DomainError):
        gmusic_report(Y, "known")
    with pytest.raises(DomainError):
        gmusic_report(Y, "other", TauMeasure.dirac())


def test_moment_tau_hat():
    Y = np.array([[1.0, 2.0], [1.0, 0.0]], dtype=complex)
    np.testing.assert_allclose(moment_tau_hat(Y), [1.0, 2.0])
    assert np.all(moment_tau_hat(np.zeros((2, 3), dtype=complex)) == 1e-6)


def test_noise_subspace_tau_hat_drops_the_signal_directions():
    Y = np.array([[5.0, -7.0, 0.0], [1.0, 0.0, 2.0], [0.0, 3.0, 0.0]], dtype=complex)
    U = np.eye(3, dtype=complex)
    np.testing.assert_allclose(noise_subspace_tau_hat(Y, U, [0]), [0.5, 4.5, 2.0])
    np.testing.assert_allclose(noise_subspace_tau_hat(Y, U, []), moment_tau_hat(Y))
    with pytest.raises(DomainError):
        noise_subspace_tau_hat(Y, U, [0, 1, 2])


def test_noise_subspace_tau_hat_tracks_the_texture_at_high_power():
    _, Y, truth = two_sources(N=20, n=100, power_db=30.0, noise=NoiseModel.student_t(10.0), seed=41)
    est = sample_covariance_estimate(Y)
    taus = noise_subspace_tau_hat(Y, est.eigenvectors, [0, 1])
    assert np.corrcoef(np.log(taus), np.log(truth.taus))[0, 1] > 0.95
    assert np.median(taus / truth.taus) == pytest.approx(1.0, abs=0.15)
    # the raw snapshot energy is dominated by the sources
    assert np.median(moment_tau_hat(Y) / truth.taus) > 10


def test_empirical_gmusic_weights_track_the_known_ones_at_high_power():
    _, Y, _ = two_sources(N=20, n=100, power_db=30.0, seed=42)
    unit_ctx = SpectralContext.build(TauMeasure.dirac(), UnitWeight(c=0.2))
    _, known = gmusic_report(Y, "known", L=2, ctx=unit_ctx)
    _, empirical = gmusic_report(Y, "empirical", L=2)
    np.testing.assert_allclose(empirical.weights, known.weights, atol=0.02)
    np.testing.assert_allclose(empirical.powers, known.powers, rtol=0.1)


def test_empirical_robust_weights_track_the_known_ones_at_high_power(weight):
    _, Y, _ = two_sources(N=20, n=100, power_db=30.0, seed=43)
    est = solve_fixed_point(Y, weight)
    known = build_report(est, SpectralContext.build(TauMeasure.dirac(), weight), L=2)
    empirical = build_report(est, SpectralContext.from_estimate(est, weight), L=2)
    np.testing.assert_allclose(empirical.weights, known.weights, atol=0.02)
    np.testing.assert_allclose(empirical.powers, known.powers, rtol=0.1)


def test_sample_covariance_estimate_stops_early():
    _, Y, _ = two_sources()
    est = sample_covariance_estimate(Y)
    assert est.iterations == 2
    assert est.residual == 0.0


def test_localization_curves_share_the_grid(weight, dirac_ctx, unit_dirac_ctx):
    _, Y, _ = two_sources()
    curves, reports = localization_curves(Y, GRID, 2, weight, dirac_ctx, unit_dirac_ctx)
    assert list(curves) == list(METHODS)
    assert set(reports) == {"gmusic", "gmusic-emp", "robust-gmusic", "robust-gmusic-emp"}
    for curve in curves.values():
        assert curve.values.shape == GRID.shape
        assert np.all(np.isfinite(curve.values))
        assert curve.func is not None
        assert curve.func(float(GRID[3])) == pytest.approx(curve.values[3], abs=1e-12)


def test_localization_curves_need_known_contexts(weight):
    _, Y, _ = two_sources()
    with pytest.raises(DomainError):
        localization_curves(Y, GRID, 2, weight, methods=["robust-gmusic"])
    with pytest.raises(DomainError):
        localization_curves(Y, GRID, 2, weight, methods=["beamformer"])


def test_strong_sources_are_localized(weight, dirac_ctx, unit_dirac_ctx):
    sources, Y, _ = two_sources(N=8, n=40, power_db=20.0)
    curves, _ = localization_curves(Y, GRID, 2, weight, dirac_ctx, unit_dirac_ctx)
    for curve in curves.values():
        np.testing.assert_allclose(extract_angles(curve, 2), sources.angles, atol=deg2rad(2.0))


def test_curve_serializes_to_two_columns(tmp_path):
    curve = LocalizationCurve("music", GRID[:5], np.linspace(0, 1, 5))
    frame = curve.to_frame()
    assert list(frame.columns) == ["theta_deg", "value"]
    write_csv(str(tmp_path / "curve.csv"), frame)


# -----------------------------
# Angle extraction
# -----------------------------
def test_golden_section_search():
    a, b = golden_section_search(lambda x: (x - 2.0) ** 2, 1.0, 5.0, 1e-8)
    assert b - a <= 1e-8
    assert 0.5 * (a + b) == pytest.approx(2.0, abs=1e-7)


def test_golden_section_search_on_a_short_interval():
    assert golden_section_search(abs, -1e-9, 1e-9, 1e-7) == (-1e-9, 1e-9)


def test_v_shaped_minimum_is_refined():
    func = lambda t: abs(t - 0.1745)  # noqa: E731
    grid = np.linspace(0.0, 0.35, 71)
    curve = LocalizationCurve("music", grid, np.abs(grid - 0.1745), func=func)
    angles = extract_angles(curve, 1)
    assert angles[0] == pytest.approx(0.1745, abs=1e-6)
    assert curve.minima == angles


def test_two_dips_sorted():
    func = lambda t: min(abs(t - 0.25) + 0.01, abs(t - 0.1))  # noqa: E731
    grid = np.linspace(0.0, 0.35, 71)
    curve = LocalizationCurve("music", grid, np.array([func(t) for t in grid]))
    angles = extract_angles(curve, 2, func=func)
    np.testing.assert_allclose(angles, [0.1, 0.25], atol=1e-6)


def test_single_minimum_is_repeated():
    grid = np.linspace(-1.0, 1.0, 41)
    curve = LocalizationCurve("gmusic", grid, grid ** 2)
    assert extract_angles(curve, 2) == [grid[20], grid[20]]


def test_monotone_boundary_uses_the_global_minimum():
    grid = np.linspace(0.0, 1.0, 11)
    curve = LocalizationCurve("gmusic", grid, grid)
    assert extract_angles(curve, 1) == [0.0]


def test_extraction_is_invariant_to_monotone_rescaling():
    grid = np.linspace(0.0, 0.35, 71)
    values = np.minimum(np.abs(grid - 0.1) * 3, np.abs(grid - 0.27) + 0.02)
    a = extract_angles(LocalizationCurve("music", grid, values), 2)
    b = extract_angles(LocalizationCurve("music", grid, np.exp(5 * values) - 7), 2)
    assert a == b


def test_empty_grid():
    with pytest.raises(DomainError):
        extract_angles(LocalizationCurve("music", [], []), 1)
    with pytest.raises(DomainError):
        extract_angles(LocalizationCurve("music", [0.0, 1.0], [1.0, 0.0]), 0)


def test_windowed_extraction():
    grid = np.linspace(0.0, 0.35, 71)
    func = lambda t: min(abs(t - 0.1), abs(t - 0.25) + 0.01)  # noqa: E731
    curve = LocalizationCurve("music", grid, np.array([func(t) for t in grid]), func=func)
    angles = extract_angles_windowed(curve, [0.12, 0.24], 0.08)
    np.testing.assert_allclose(angles, [0.1, 0.25], atol=1e-6)
    with pytest.raises(DomainError):
        extract_angles_windowed(curve, [2.0], 0.01)


def test_assign_closest_breaks_ties_toward_the_smaller_angle():
    assert assign_closest([3.0, 1.0], 2.0) == 1.0
    assert assign_closest([0.5, 1.9], 2.0) == 1.9
    with pytest.raises(DomainError):
        assign_closest([], 0.0)


def test_grids():
    blind = blind_grid(0.5)
    assert blind.size == 360
    assert blind[0] == pytest.approx(-np.pi / 2)
    sweep = sweep_grid([10.0, 12.0], 5.0, 0.02)
    assert sweep.size == 501
    assert sweep[0] == pytest.approx(deg2rad(6.0))
    assert sweep[-1] == pytest.approx(deg2rad(16.0))
    assert np.all(np.diff(angle_grid(0.0, 1.0, 0.1)) > 0)
    with pytest.raises(DomainError):
        angle_grid(1.0, 0.0, 0.1)


@pytest.mark.slow
def test_robust_gmusic_beats_music_on_close_sources():
    w = WeightFunction(alpha=0.2, c=0.2)
    ctx = SpectralContext.build(TauMeasure.student_t(100.0, size=20000), w)
    sources = SourceConfig.from_degrees([10.0, 12.0], [15.0, 15.0])
    grid = deg2rad(np.arange(5.0, 17.0, 0.02))
    errors = {"music": 0.0, "robust-gmusic": 0.0}
    for trial in range(20):
        Y, _ = synthesize(sources, NoiseModel.student_t(100.0), 20, 100, trial_streams(23, trial))
        curves, _ = localization_curves(Y, grid, 2, w, robust_ctx=ctx, methods=list(errors))
        for method, curve in curves.items():
            estimate = assign_closest(extract_angles(curve, 2), sources.angles[0])
            errors[method] += (estimate - sources.angles[0]) ** 2
    assert errors["robust-gmusic"] < errors["music"]
