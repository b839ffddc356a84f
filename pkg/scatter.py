# scatter.py
"""
Robust Scatter Estimation

Responsibilities:
- Solve Z = (1/n) sum_i u((1/N) y_i^* Z^{-1} y_i) y_i y_i^* by Picard iteration
- Compute the leave-one-out quadratic forms (1/N) y_i^* C_(i)^{-1} y_i by
  rank-one downdate, then gamma_hat and the per-sample tau_hat
- Build the asymptotically equivalent random matrix S_N (test oracle)
- Compare two Hermitian matrices in spectral norm
"""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

import config
from datagen import complex_gaussian, encode_rspk, signal_matrix
from error_handler import ConvergenceError, DomainError, NumericalError
from logger import get_logger
from schema import GroundTruth, ScatterEstimate, SnapshotMatrix, SourceConfig
from utils import eigh_descending, hermitize
from weightfn import WeightFunction

log = get_logger(__name__)


def _as_array(Y: Union[SnapshotMatrix, np.ndarray]) -> np.ndarray:
    return Y.data if isinstance(Y, SnapshotMatrix) else np.asarray(Y, dtype=complex)


def sample_covariance(Y: Union[SnapshotMatrix, np.ndarray]) -> np.ndarray:
    """(1/n) Y Y^*"""
    data = _as_array(Y)
    return hermitize(data @ data.conj().T / data.shape[1])


def _quadratic_forms(Z: np.ndarray, data: np.ndarray) -> np.ndarray:
    """(1/N) y_i^* Z^{-1} y_i for every column, via one Cholesky factor."""
    try:
        factor = cholesky(Z, lower=True, check_finite=False)
    except LinAlgError as e:
        raise NumericalError(f"scatter iterate is not positive definite: {e}")
    X = solve_triangular(factor, data, lower=True, check_finite=False)
    return np.sum(X.real ** 2 + X.imag ** 2, axis=0) / data.shape[0]


def _weighted_gram(data: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return hermitize((data * weights[None, :]) @ data.conj().T / data.shape[1])


def _downdate(q: np.ndarray, weights: np.ndarray, c_n: float, floor: float) -> Tuple[np.ndarray, int]:
    """
    C_(i)^{-1} y_i = C^{-1} y_i / (1 - (w_i / n) y_i^* C^{-1} y_i), hence
    q_loo_i = q_i / (1 - c_n w_i q_i).
    """
    denom = 1.0 - c_n * weights * q
    clipped = int(np.count_nonzero(denom <= floor))
    if clipped:
        log.warning(f"[scatter] {clipped} leave-one-out denominators clipped at {floor:g}")
        denom = np.maximum(denom, floor)
    return q / denom, clipped


# -----------------------------
# Fixed point
# -----------------------------
def solve_fixed_point(
    Y: Union[SnapshotMatrix, np.ndarray],
    w: WeightFunction,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    start: Optional[np.ndarray] = None,
) -> ScatterEstimate:
    """
    Maronna scatter estimate by Picard iteration Z_{k+1} = F(Z_k), Z_0 = I_N.

    The returned matrix is the last iterate Z_k whose relative Frobenius
    residual ||Z_k - F(Z_k)|| / ||Z_k|| is <= tol.

    Raises:
        DomainError: N > n or a zero column.
        ConvergenceError: tolerance not reached within max_iter sweeps.
        NumericalError: an iterate lost positive definiteness.
    """
    data = _as_array(Y)
    tol = config.get("fp_tol") if tol is None else tol
    max_iter = config.get("fp_max_iter") if max_iter is None else max_iter
    N, n = data.shape
    if N > n:
        raise DomainError(f"need N <= n for a nonsingular scatter matrix, got N={N}, n={n}")
    norms = np.linalg.norm(data, axis=0)
    if np.any(norms == 0):
        raise DomainError(f"snapshot column {int(np.argmin(norms))} is zero")
    c_n = N / n
    if not w.is_unit and c_n * w.phi_inf() >= 1.0:
        log.warning(f"[scatter] c_n * phi_inf = {c_n * w.phi_inf():.4f} >= 1, existence is not guaranteed")

    Z = np.eye(N, dtype=complex) if start is None else hermitize(np.asarray(start, dtype=complex))
    residual = float("inf")
    for iteration in range(1, max_iter + 1):
        q = _quadratic_forms(Z, data)
        weights = np.asarray(w.u_eval(q), dtype=float)
        F = _weighted_gram(data, weights)
        residual = float(np.linalg.norm(Z - F) / np.linalg.norm(Z))
        if residual <= tol:
            log.debug(f"[scatter] converged in {iteration} sweeps, residual={residual:.3e}")
            return _finalize(Z, data, q, weights, residual, iteration)
        Z = F

    raise ConvergenceError("fixed-point iteration did not converge", residual=residual, iterations=max_iter)


def _finalize(
    Z: np.ndarray,
    data: np.ndarray,
    q: np.ndarray,
    weights: np.ndarray,
    residual: float,
    iterations: int,
) -> ScatterEstimate:
    N, n = data.shape
    eigenvalues, eigenvectors = eigh_descending(Z)
    if eigenvalues[-1] <= 0:
        raise NumericalError(f"scatter estimate has non-positive eigenvalue {eigenvalues[-1]:.3e}")
    q_loo, clipped = _downdate(q, weights, N / n, config.get("downdate_floor"))
    gamma = float(np.mean(q_loo))
    for arr in (Z, eigenvalues, eigenvectors, weights, q_loo):
        arr.setflags(write=False)
    tau = q_loo / gamma
    tau.setflags(write=False)
    return ScatterEstimate(
        matrix=Z,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        weights=weights,
        quad_forms=q_loo,
        gamma_hat=gamma,
        tau_hat=tau,
        residual=residual,
        iterations=iterations,
        n_antennas=N,
        n_samples=n,
        clipped=clipped,
    )


def fixed_point_residual(est: ScatterEstimate, Y: Union[SnapshotMatrix, np.ndarray], w: WeightFunction) -> float:
    """||Z - F(Z)||_F / ||Z||_F for a given estimate."""
    data = _as_array(Y)
    q = _quadratic_forms(est.matrix, data)
    F = _weighted_gram(data, np.asarray(w.u_eval(q), dtype=float))
    return float(np.linalg.norm(est.matrix - F) / np.linalg.norm(est.matrix))


# -----------------------------
# Leave-one-out statistics
# -----------------------------
def leave_one_out_quadratic_forms(est: ScatterEstimate, Y: Union[SnapshotMatrix, np.ndarray]) -> np.ndarray:
    """
    q_i = (1/N) y_i^* C_(i)^{-1} y_i with C_(i) = C_N - (1/n) w_i y_i y_i^*,
    using the weights stored with the estimate.
    """
    data = _as_array(Y)
    q = _quadratic_forms(np.asarray(est.matrix), data)
    q_loo, _ = _downdate(q, np.asarray(est.weights), data.shape[0] / data.shape[1], config.get("downdate_floor"))
    return q_loo


def gamma_hat(est: ScatterEstimate) -> float:
    """gamma_hat_n = (1/n) sum_i q_i"""
    return est.gamma_hat


def tau_hat(est: ScatterEstimate) -> np.ndarray:
    """tau_hat_i = q_i / gamma_hat_n"""
    return est.tau_hat


# -----------------------------
# Equivalent model
# -----------------------------
def build_equivalent_model(
    taus,
    sources: SourceConfig,
    w: WeightFunction,
    gamma: float,
    rng: Optional[np.random.Generator] = None,
    N: Optional[int] = None,
    truth: Optional[GroundTruth] = None,
) -> np.ndarray:
    """
    S_N = (1/n) sum_i v_c(tau_i gamma) A_i wbar_i wbar_i^* A_i^*,
    A_i wbar_i = sum_l sqrt(p_l) a_l s_li + sqrt(tau_i) g_i.

    With `truth` the symbols, channels and Gaussian draws of that
    realization are reused (paired comparison with C_N); otherwise fresh
    ones are drawn from `rng`. `w` must carry the limiting ratio c.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0, got {gamma}")
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0):
        raise DomainError("taus must be positive")
    n = taus.size

    if truth is not None:
        A, S, G = truth.steering, truth.symbols, truth.gaussians
    else:
        if rng is None or N is None:
            raise DomainError("without ground truth, both rng and N are required")
        A = signal_matrix(sources, N, rng)
        S = complex_gaussian(rng, (sources.L, n))
        G = complex_gaussian(rng, (N, n))

    X = A @ S + G * np.sqrt(taus)[None, :]
    v = np.asarray(w.v_eval(taus * gamma), dtype=float)
    return _weighted_gram(X, v)


def equivalence_gap(C: np.ndarray, S: np.ndarray) -> Tuple[float, float]:
    """
    (||C - S|| / ||S||, max_i |lambda_i(C) - lambda_i(S)|) in spectral norm.
    """
    rel = float(np.linalg.norm(C - S, 2) / np.linalg.norm(S, 2))
    eig_c = np.linalg.eigvalsh(hermitize(C))
    eig_s = np.linalg.eigvalsh(hermitize(S))
    return rel, float(np.max(np.abs(eig_c - eig_s)))


def estimate_to_bytes(est: ScatterEstimate) -> bytes:
    """The scatter matrix C_N in the RSPK1 container."""
    return encode_rspk(np.asarray(est.matrix))


def save_estimate(path: str, est: ScatterEstimate) -> None:
    """Write C_N as an N x N RSPK1 file; read_rspk loads it back."""
    with open(path, "wb") as f:
        f.write(estimate_to_bytes(est))
    log.info(f"[scatter] wrote {est.n_antennas}x{est.n_antennas} estimate to {path}")
