import numpy as np
import pytest

from datagen import synthesize
from error_handler import ConvergenceError, DomainError
from scatter import (
    build_equivalent_model,
    equivalence_gap,
    estimate_to_bytes,
    fixed_point_residual,
    gamma_hat,
    leave_one_out_quadratic_forms,
    sample_covariance,
    solve_fixed_point,
    tau_hat,
)
from schema import NoiseModel, SourceConfig
from spectrum import TauMeasure, solve_gamma
from utils import make_rng, trial_streams
from weightfn import UnitWeight, WeightFunction

from conftest import two_sources


def _student_data(N, n, seed, trial=0, beta=5.0):
    sources = SourceConfig.from_degrees([10.0, 12.0], [0.0, 0.0])
    return synthesize(sources, NoiseModel.student_t(beta), N, n, trial_streams(seed, trial))


def test_fixed_point_residual_below_tolerance(weight):
    for trial in range(10):
        N = 4 + 4 * (trial % 5)
        Y, _ = _student_data(N, 6 * N, seed=11, trial=trial)
        est = solve_fixed_point(Y, weight)
        assert est.residual <= 1e-9
        assert fixed_point_residual(est, Y, weight) <= 1e-8


def test_fixed_point_does_not_depend_on_start(weight):
    Y, _ = _student_data(12, 80, seed=12)
    a = solve_fixed_point(Y, weight, tol=1e-12, max_iter=2000)
    b = solve_fixed_point(Y, weight, tol=1e-12, max_iter=2000, start=5.0 * np.eye(12))
    scale = np.linalg.norm(a.matrix)
    assert np.linalg.norm(a.matrix - b.matrix) / scale <= 1e-8


def test_estimate_is_hermitian_positive_definite(weight):
    Y, _ = _student_data(10, 50, seed=13)
    est = solve_fixed_point(Y, weight)
    np.testing.assert_allclose(est.matrix, est.matrix.conj().T, atol=0.0)
    assert est.eigenvalues[-1] > 0
    assert np.all(np.diff(est.eigenvalues) <= 0)
    assert not est.matrix.flags.writeable


def test_unit_weight_gives_sample_covariance():
    _, Y, _ = two_sources(N=8, n=40)
    est = solve_fixed_point(Y, UnitWeight(c=0.2))
    np.testing.assert_allclose(est.matrix, sample_covariance(Y), atol=1e-12)


def test_leave_one_out_matches_direct_inverse(weight):
    Y, _ = _student_data(6, 40, seed=14)
    est = solve_fixed_point(Y, weight)
    data, (N, n) = Y.data, Y.data.shape
    q = leave_one_out_quadratic_forms(est, Y)
    np.testing.assert_allclose(q, est.quad_forms, rtol=1e-12)
    for i in range(5):
        y = data[:, i]
        C_i = est.matrix - est.weights[i] / n * np.outer(y, y.conj())
        direct = np.real(y.conj() @ np.linalg.solve(C_i, y)) / N
        assert q[i] == pytest.approx(direct, rel=1e-8)


def test_gamma_hat_and_tau_hat(weight):
    Y, _ = _student_data(8, 60, seed=15)
    est = solve_fixed_point(Y, weight)
    assert gamma_hat(est) == pytest.approx(np.mean(est.quad_forms))
    assert np.mean(tau_hat(est)) == pytest.approx(1.0)
    np.testing.assert_allclose(tau_hat(est) * gamma_hat(est), est.quad_forms)


def test_tau_hat_tracks_the_texture(weight):
    sources = SourceConfig()
    Y, truth = synthesize(sources, NoiseModel.student_t(5.0), 40, 400, trial_streams(16, 0))
    est = solve_fixed_point(Y, weight)
    corr = np.corrcoef(est.tau_hat, truth.taus)[0, 1]
    assert corr > 0.9


def test_more_antennas_than_samples(weight):
    Y = make_rng(1).standard_normal((10, 5)) + 0j
    with pytest.raises(DomainError):
        solve_fixed_point(Y, weight)


def test_zero_column(weight):
    Y = make_rng(2).standard_normal((3, 10)) + 0j
    Y[:, 4] = 0
    with pytest.raises(DomainError):
        solve_fixed_point(Y, weight)


def test_iteration_budget(weight):
    Y, _ = _student_data(8, 40, seed=17)
    with pytest.raises(ConvergenceError) as info:
        solve_fixed_point(Y, weight, max_iter=1)
    assert info.value.iterations == 1


def test_equivalent_model_reuses_the_realization(weight):
    sources = SourceConfig.from_degrees([10.0, 12.0], [0.0, 0.0])
    Y, truth = synthesize(sources, NoiseModel.student_t(100.0), 20, 100, trial_streams(18, 0))
    gamma = solve_gamma(TauMeasure.student_t(100.0, size=20000), weight)
    S = build_equivalent_model(truth.taus, sources, weight, gamma, truth=truth)
    assert S.shape == (20, 20)
    np.testing.assert_allclose(S, S.conj().T, atol=1e-14)
    rel, eig_gap = equivalence_gap(solve_fixed_point(Y, weight).matrix, S)
    assert 0 < rel < 1
    assert eig_gap >= 0


def test_equivalent_model_needs_a_source_of_randomness(weight):
    with pytest.raises(DomainError):
        build_equivalent_model(np.ones(10), SourceConfig(), weight, 1.25)


def test_equivalence_gap_of_identical_matrices():
    M = np.diag([3.0, 2.0, 1.0]).astype(complex)
    assert equivalence_gap(M, M) == (0.0, 0.0)


def test_estimate_serialization(weight):
    Y, _ = _student_data(4, 20, seed=19)
    payload = estimate_to_bytes(solve_fixed_point(Y, weight))
    assert payload[:4] == b"RSPK"
    assert len(payload) == 24 + 16 * 16


@pytest.mark.slow
def test_equivalence_gap_shrinks_with_dimension():
    sources = SourceConfig.from_degrees([10.0, 12.0], [0.0, 0.0])
    measure = TauMeasure.student_t(100.0)
    w = WeightFunction(alpha=0.2, c=0.2)
    gamma = solve_gamma(measure, w)
    wins = 0
    for trial in range(20):
        gaps = []
        for N in (50, 200):
            Y, truth = synthesize(sources, NoiseModel.student_t(100.0), N, 5 * N, trial_streams(20, trial))
            S = build_equivalent_model(truth.taus, sources, w, gamma, truth=truth)
            gaps.append(equivalence_gap(solve_fixed_point(Y, w).matrix, S)[0])
        wins += gaps[1] < gaps[0]
    assert wins >= 18
