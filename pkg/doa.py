# doa.py
"""
Direction-of-Arrival Estimation

Responsibilities:
- Evaluate the six localization functions on an angle grid: MUSIC and
  robust MUSIC (noise-subspace projections), G-MUSIC and robust G-MUSIC
  (weighted signal-eigenvector corrections), each G-MUSIC flavour in a
  known-law and an empirical variant
- Provide the noiseless localization function of the true sources
- Extract source angles from a curve: deepest local minima refined by
  golden-section search, or argmin inside windows around given centers
- Build the angle grids used by the experiments
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from datagen import steering_matrix
from error_handler import DomainError
from inference import build_report, population_projector
from logger import get_logger
from schema import METHODS, LocalizationCurve, ScatterEstimate, SnapshotMatrix, SourceConfig, SpikeReport
from scatter import solve_fixed_point
from spectrum import SpectralContext, TauMeasure
from utils import deg2rad
from weightfn import UnitWeight, WeightFunction

log = get_logger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

INVPHI = (math.sqrt(5) - 1) / 2  # 1 / phi
INVPHI2 = (3 - math.sqrt(5)) / 2  # 1 / phi^2


def _spacing(d: Optional[float]) -> float:
    return config.get("spacing_d") if d is None else d


def _shape_like(values: np.ndarray, theta: ArrayLike):
    return float(values[0]) if np.ndim(theta) == 0 else values


def _projection_energy(theta: ArrayLike, vectors: np.ndarray, d: Optional[float]) -> np.ndarray:
    """sum_k |a(theta)^* u_k|^2 over the columns u_k of `vectors`."""
    A = steering_matrix(theta, vectors.shape[0], _spacing(d))
    P = vectors.conj().T @ A
    return np.sum(P.real ** 2 + P.imag ** 2, axis=0)


# -----------------------------
# MUSIC
# -----------------------------
def _noise_subspace_function(theta: ArrayLike, eigenvectors: np.ndarray, L: int, d: Optional[float]):
    N = eigenvectors.shape[0]
    if not 0 <= L < N:
        raise DomainError(f"need 0 <= L < N, got L={L}, N={N}")
    values = np.clip(_projection_energy(theta, eigenvectors[:, L:], d), 0.0, 1.0)
    return _shape_like(values, theta)


def sample_covariance_estimate(Y: Union[SnapshotMatrix, np.ndarray]) -> ScatterEstimate:
    """
    (1/n) Y Y^* packaged as a ScatterEstimate: with u = 1 the fixed-point
    map is constant and the iteration stops on its second sweep.
    """
    data = Y.data if isinstance(Y, SnapshotMatrix) else np.asarray(Y, dtype=complex)
    N, n = data.shape
    return solve_fixed_point(data, UnitWeight(c=N / n))


def eta_music(theta: ArrayLike, Y: Union[SnapshotMatrix, np.ndarray, ScatterEstimate], L: int, d: Optional[float] = None):
    """
    a(theta)^* Pi a(theta), Pi the projector onto the N - L smallest
    eigenvectors of (1/n) Y Y^*. A precomputed sample-covariance
    estimate may be passed in place of Y.
    """
    est = Y if isinstance(Y, ScatterEstimate) else sample_covariance_estimate(Y)
    return _noise_subspace_function(theta, est.eigenvectors, L, d)


def eta_robust_music(theta: ArrayLike, est: ScatterEstimate, L: int, d: Optional[float] = None):
    """Same projection with the eigenvectors of the robust scatter estimate."""
    return _noise_subspace_function(theta, est.eigenvectors, L, d)


# -----------------------------
# G-MUSIC family
# -----------------------------
def eta_weighted(
    theta: ArrayLike,
    eigenvectors: np.ndarray,
    indices: Sequence[int],
    weights: Sequence[float],
    d: Optional[float] = None,
):
    """1 - sum_k w_k |a(theta)^* u_k|^2 over the given eigenvector indices."""
    indices = list(indices)
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(indices):
        raise DomainError(f"{weights.size} weights for {len(indices)} eigenvectors")
    if not indices:
        return _shape_like(np.ones(np.atleast_1d(theta).size), theta)
    A = steering_matrix(theta, eigenvectors.shape[0], _spacing(d))
    P = eigenvectors[:, indices].conj().T @ A
    values = 1.0 - weights @ (P.real ** 2 + P.imag ** 2)
    return _shape_like(values, theta)


def _eta_from_report(theta, est: ScatterEstimate, report: SpikeReport, mode: str, d: Optional[float]):
    if report.mode != mode:
        raise DomainError(f"expected a {mode} spike report, got a {report.mode} one")
    return eta_weighted(theta, est.eigenvectors, report.indices, report.weights, d)


def eta_robust_gmusic(theta: ArrayLike, est: ScatterEstimate, report: SpikeReport, d: Optional[float] = None):
    """1 - sum_k w_k |a^* u_k|^2 with weights computed against the known law."""
    return _eta_from_report(theta, est, report, "known", d)


def eta_robust_gmusic_emp(theta: ArrayLike, est: ScatterEstimate, report: SpikeReport, d: Optional[float] = None):
    """As eta_robust_gmusic with weights computed from tau_hat and gamma_hat."""
    return _eta_from_report(theta, est, report, "empirical", d)


def moment_tau_hat(Y: Union[SnapshotMatrix, np.ndarray]) -> np.ndarray:
    """tau_hat_i = max(1e-6, ||y_i||^2 / N)."""
    data = Y.data if isinstance(Y, SnapshotMatrix) else np.asarray(Y, dtype=complex)
    energy = np.sum(data.real ** 2 + data.imag ** 2, axis=0) / data.shape[0]
    return np.maximum(energy, 1e-6)


def noise_subspace_tau_hat(Y: Union[SnapshotMatrix, np.ndarray], eigenvectors: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    """
    tau_hat_i = max(1e-6, ||Pi y_i||^2 / (N - k)), Pi the projector off the
    k signal eigenvectors `indices`. The source symbols drop out, so the
    estimate does not degrade as the source power grows.
    """
    data = Y.data if isinstance(Y, SnapshotMatrix) else np.asarray(Y, dtype=complex)
    N = data.shape[0]
    indices = list(indices)
    if len(indices) >= N:
        raise DomainError(f"{len(indices)} signal directions leave no noise subspace in dimension {N}")
    if indices:
        U = eigenvectors[:, indices]
        data = data - U @ (U.conj().T @ data)
    energy = np.sum(data.real ** 2 + data.imag ** 2, axis=0) / (N - len(indices))
    return np.maximum(energy, 1e-6)


def gmusic_report(
    Y: Union[SnapshotMatrix, np.ndarray],
    mode: str,
    measure: Optional[TauMeasure] = None,
    L: Optional[int] = None,
    est: Optional[ScatterEstimate] = None,
    ctx: Optional[SpectralContext] = None,
) -> Tuple[ScatterEstimate, SpikeReport]:
    """
    Sample-covariance eigenpairs and their spike report under v = 1.

    mode="known" integrates against `measure` (or reuses a prebuilt unit
    weight `ctx`); mode="empirical" builds tau_hat in two passes: the
    moment estimate detects the spikes, then the energy off the detected
    eigenvectors gives the tau_hat behind the final weights.
    """
    est = sample_covariance_estimate(Y) if est is None else est
    c_n = est.aspect_ratio
    unit = UnitWeight(c=c_n)
    if mode == "known":
        if ctx is None:
            if measure is None:
                raise DomainError("known-law G-MUSIC needs the texture law")
            ctx = SpectralContext.build(measure, unit)
        return est, build_report(est, ctx, L=L)
    if mode != "empirical":
        raise DomainError(f"unknown G-MUSIC mode '{mode}'")

    def context(taus, label):
        return SpectralContext.build(TauMeasure.empirical(taus, label, check_mean=False), unit, gamma=1.0)

    first = build_report(est, context(moment_tau_hat(Y), "tau_moment"), L=L)
    if not len(first):
        return est, first
    taus = noise_subspace_tau_hat(Y, est.eigenvectors, first.indices)
    return est, build_report(est, context(taus, "tau_noise"), L=L)


def eta_gmusic(
    theta: ArrayLike,
    Y: Union[SnapshotMatrix, np.ndarray],
    mode: str,
    measure: Optional[TauMeasure] = None,
    L: Optional[int] = None,
    d: Optional[float] = None,
):
    """
    G-MUSIC: the weighted form with eigenpairs of (1/n) Y Y^* and weights
    computed with v = 1 (see gmusic_report for the two modes).
    """
    est, report = gmusic_report(Y, mode, measure, L)
    return eta_weighted(theta, est.eigenvectors, report.indices, report.weights, d)


def eta_population(
    theta: ArrayLike,
    sources: SourceConfig,
    N: int,
    A: Optional[np.ndarray] = None,
    d: Optional[float] = None,
):
    """1 - a(theta)^* Pi a(theta), Pi the projector onto the true signal space."""
    rank = int(np.count_nonzero(np.asarray(sources.powers) > 0))
    if rank == 0:
        return _shape_like(np.ones(np.atleast_1d(theta).size), theta)
    Pi = population_projector(sources, N, range(rank), A)
    S = steering_matrix(theta, N, _spacing(d))
    values = 1.0 - np.real(np.sum(S.conj() * (Pi @ S), axis=0))
    return _shape_like(values, theta)


# -----------------------------
# All curves for one realization
# -----------------------------
def localization_curves(
    Y: Union[SnapshotMatrix, np.ndarray],
    grid: np.ndarray,
    L: int,
    w: WeightFunction,
    robust_ctx: Optional[SpectralContext] = None,
    unit_ctx: Optional[SpectralContext] = None,
    methods: Sequence[str] = METHODS,
    d: Optional[float] = None,
    est: Optional[ScatterEstimate] = None,
) -> Tuple[Dict[str, LocalizationCurve], Dict[str, SpikeReport]]:
    """
    Evaluate the requested methods on `grid` with the number of sources
    forced to L. `robust_ctx` and `unit_ctx` are the known-law contexts
    for the robust and the unit weight; they are built once per sweep by
    the caller.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise DomainError(f"unknown method(s) {unknown}")
    grid = np.asarray(grid, dtype=float)
    needs_robust = any(m.startswith("robust") for m in methods)
    needs_scm = any(not m.startswith("robust") for m in methods)

    robust = (est if est is not None else solve_fixed_point(Y, w)) if needs_robust else None
    scm = sample_covariance_estimate(Y) if needs_scm else None

    curves: Dict[str, LocalizationCurve] = {}
    reports: Dict[str, SpikeReport] = {}
    for method in methods:
        if method == "music":
            values = eta_music(grid, scm, L, d)
        elif method == "robust-music":
            values = eta_robust_music(grid, robust, L, d)
        elif method == "gmusic":
            if unit_ctx is None:
                raise DomainError("gmusic needs a known-law unit-weight context")
            _, reports[method] = gmusic_report(Y, "known", L=L, est=scm, ctx=unit_ctx)
            values = eta_weighted(grid, scm.eigenvectors, reports[method].indices, reports[method].weights, d)
        elif method == "gmusic-emp":
            _, reports[method] = gmusic_report(Y, "empirical", L=L, est=scm)
            values = eta_weighted(grid, scm.eigenvectors, reports[method].indices, reports[method].weights, d)
        elif method == "robust-gmusic":
            if robust_ctx is None:
                raise DomainError("robust-gmusic needs a known-law context")
            reports[method] = build_report(robust, robust_ctx, L=L)
            values = eta_robust_gmusic(grid, robust, reports[method], d)
        else:
            reports[method] = build_report(robust, SpectralContext.from_estimate(robust, w), L=L)
            values = eta_robust_gmusic_emp(grid, robust, reports[method], d)
        source = robust if method.startswith("robust") else scm
        curves[method] = LocalizationCurve(
            method=method,
            grid=grid,
            values=values,
            func=curve_function(method, source, L, reports.get(method), d),
        )
    return curves, reports


def curve_function(
    method: str,
    est: ScatterEstimate,
    L: int,
    report: Optional[SpikeReport] = None,
    d: Optional[float] = None,
) -> Callable[[float], float]:
    """Scalar theta -> value for one method, used to refine minima off the grid."""
    if method in ("music", "robust-music"):
        return lambda t: _noise_subspace_function(t, est.eigenvectors, L, d)
    if report is None:
        raise DomainError(f"{method} needs its spike report")
    return lambda t: eta_weighted(t, est.eigenvectors, report.indices, report.weights, d)


# -----------------------------
# Angle extraction
# -----------------------------
def golden_section_search(f: Callable[[float], float], a: float, b: float, tol: float = 1e-7) -> Tuple[float, float]:
    """
    Golden-section search for a function with a single local minimum in
    [a, b]. Returns a bracket [c, d] with d - c <= tol; every iteration
    reuses one of the two previous evaluations.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        return a, b

    # required steps to reach tol
    n = int(math.ceil(math.log(tol / h) / math.log(INVPHI)))

    c = a + INVPHI2 * h
    d = a + INVPHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(n - 1):
        if yc < yd:
            b, d, yd = d, c, yc
            h = INVPHI * h
            c = a + INVPHI2 * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h = INVPHI * h
            d = a + INVPHI * h
            yd = f(d)
    return (a, d) if yc < yd else (c, b)


def _refine(func: Optional[Callable[[float], float]], grid: np.ndarray, i: int, lo: float, hi: float, tol: float) -> float:
    if func is None or grid.size < 2:
        return float(grid[i])
    left = max(lo, float(grid[max(i - 1, 0)]))
    right = min(hi, float(grid[min(i + 1, grid.size - 1)]))
    a, b = golden_section_search(func, left, right, tol)
    return 0.5 * (a + b)


def local_minima(values: np.ndarray) -> np.ndarray:
    """Interior indices i with v[i-1] > v[i] <= v[i+1]."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return np.zeros(0, dtype=int)
    inner = (v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:])
    return np.flatnonzero(inner) + 1


def extract_angles(
    curve: LocalizationCurve,
    n_sources: int,
    func: Optional[Callable[[float], float]] = None,
    tol: Optional[float] = None,
) -> List[float]:
    """
    The n_sources deepest local minima, each refined by golden-section
    search inside its bracketing grid cells, sorted increasingly.

    Without interior minima the global argmin is used; when fewer minima
    than sources exist the deepest one is repeated.
    """
    if n_sources < 1:
        raise DomainError(f"n_sources must be >= 1, got {n_sources}")
    grid, values = curve.grid, curve.values
    if grid.size == 0:
        raise DomainError(f"empty grid for {curve.method}")
    tol = config.get("refine_tol") if tol is None else tol
    func = curve.func if func is None else func

    candidates = local_minima(values)
    if candidates.size == 0:
        candidates = np.array([int(np.argmin(values))])
    deepest = candidates[np.argsort(values[candidates], kind="stable")][:n_sources]
    angles = [_refine(func, grid, int(i), -np.inf, np.inf, tol) for i in deepest]
    if len(angles) < n_sources:
        log.debug(f"[doa] {curve.method}: {len(angles)} minima for {n_sources} sources")
        angles += [angles[0]] * (n_sources - len(angles))
    curve.minima = sorted(angles)
    return curve.minima


def extract_angles_windowed(
    curve: LocalizationCurve,
    centers: Sequence[float],
    kappa: float,
    func: Optional[Callable[[float], float]] = None,
    tol: Optional[float] = None,
) -> List[float]:
    """
    argmin of the curve inside each window [theta_j - kappa/2, theta_j + kappa/2].
    """
    if not kappa > 0:
        raise DomainError(f"window width must be > 0, got {kappa}")
    tol = config.get("refine_tol") if tol is None else tol
    func = curve.func if func is None else func
    angles = []
    for center in centers:
        lo, hi = center - kappa / 2.0, center + kappa / 2.0
        inside = np.flatnonzero((curve.grid >= lo) & (curve.grid <= hi))
        if inside.size == 0:
            raise DomainError(f"no grid point within {kappa:g} rad around {center:.6g}")
        i = int(inside[np.argmin(curve.values[inside])])
        angles.append(_refine(func, curve.grid, i, lo, hi, tol))
    return angles


def assign_closest(estimates: Sequence[float], theta: float) -> float:
    """Estimate closest to theta; ties go to the smaller angle."""
    if not len(estimates):
        raise DomainError("no angle estimates to assign")
    return min(sorted(estimates), key=lambda t: abs(t - theta))


# -----------------------------
# Grids
# -----------------------------
def angle_grid(start_deg: float, stop_deg: float, step_deg: Optional[float] = None, endpoint: bool = False) -> np.ndarray:
    """Uniform grid in radians from start_deg to stop_deg (stop excluded unless endpoint)."""
    step_deg = config.get("grid_step_deg") if step_deg is None else step_deg
    if not step_deg > 0:
        raise DomainError(f"grid step must be > 0, got {step_deg}")
    if not stop_deg > start_deg:
        raise DomainError(f"empty angle range [{start_deg}, {stop_deg}]")
    count = int(round((stop_deg - start_deg) / step_deg)) + (1 if endpoint else 0)
    return deg2rad(start_deg + step_deg * np.arange(count))


def sweep_grid(angles_deg: Sequence[float], window_deg: Optional[float] = None, step_deg: Optional[float] = None) -> np.ndarray:
    """[center - window, center + window] around the mean source angle."""
    window_deg = config.get("window_deg") if window_deg is None else window_deg
    center = float(np.mean(angles_deg)) if len(angles_deg) else 0.0
    return angle_grid(center - window_deg, center + window_deg, step_deg, endpoint=True)


def blind_grid(step_deg: Optional[float] = None) -> np.ndarray:
    """[-90, 90) degrees; sin is injective there so every angle is identifiable."""
    return angle_grid(-90.0, 90.0, step_deg)
