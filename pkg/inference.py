# inference.py
"""
Spike Inference

Responsibilities:
- Detect isolated eigenvalues of the scatter estimate above S+ (1 + margin)
- Estimate source powers and eigenvector weights w_k, either against the
  known limiting law nu or against the empirical tau_hat ("empirical" mode)
- Estimate bilinear forms a^* Pi_group b from weighted eigenvector projections
- Assemble SpikeReport tables, including the forced-L mode used by the
  localization sweeps
"""

from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

import config
from datagen import signal_matrix
from error_handler import DomainError, ValidityError
from logger import get_logger
from schema import ScatterEstimate, SourceConfig, Spike, SpikeReport
from spectrum import (
    SpectralContext,
    power_of_delta,
    solve_delta,
    solve_delta_blind,
    weight_of_delta,
)
from utils import eigh_descending, write_csv
from weightfn import WeightFunction

log = get_logger(__name__)


def _mode_of(ctx: SpectralContext) -> str:
    return "empirical" if ctx.measure.kind == "empirical" else "known"


def _delta_beyond_edge(lambda_hat: float, ctx: SpectralContext) -> float:
    if not lambda_hat > ctx.support_edge:
        raise DomainError(
            f"eigenvalue {lambda_hat:.6g} is not beyond the bulk edge {ctx.support_edge:.6g}"
        )
    return solve_delta(lambda_hat, ctx)


# -----------------------------
# Detection
# -----------------------------
def detection_threshold(ctx: SpectralContext, margin: Optional[float] = None) -> float:
    margin = config.get("detection_margin") if margin is None else margin
    return ctx.S_plus * (1.0 + margin)


def detect_spikes(
    est: ScatterEstimate,
    ctx: SpectralContext,
    L_max: Optional[int] = None,
    margin: Optional[float] = None,
) -> SpikeReport:
    """
    Indices k < L_max with lambda_hat_k > S+ (1 + margin). Powers and
    weights are left unset (nan); see build_report.
    """
    threshold = detection_threshold(ctx, margin)
    L_max = est.n_antennas - 1 if L_max is None else min(L_max, est.n_antennas - 1)
    detected = [
        Spike(index=k, eigenvalue=float(lam), power=float("nan"), weight=float("nan"))
        for k, lam in enumerate(est.eigenvalues[:L_max])
        if lam > threshold
    ]
    log.debug(f"[inference] {len(detected)} eigenvalues above {threshold:.6g}")
    return SpikeReport(detected=detected, threshold_used=threshold, mode=_mode_of(ctx))


# -----------------------------
# Power estimation
# -----------------------------
def estimate_power_known(lambda_hat: float, ctx: SpectralContext) -> float:
    """
    -c (delta(lambda) int v_c(t gamma) / (1 + delta(lambda) t v_c(t gamma)) nu(dt))^-1

    Raises:
        DomainError: lambda_hat at or below the bulk edge S+_mu.
    """
    return power_of_delta(_delta_beyond_edge(lambda_hat, ctx), ctx)


def estimate_power_empirical(
    lambda_hat: float,
    est: ScatterEstimate,
    w: WeightFunction,
    ctx: Optional[SpectralContext] = None,
) -> float:
    """
    Same functional with tau_hat, gamma_hat and c_n in place of nu, gamma and c.
    Pass `ctx` to reuse an empirical context across eigenvalues.
    """
    ctx = SpectralContext.from_estimate(est, w) if ctx is None else ctx
    return estimate_power_known(lambda_hat, ctx)


# -----------------------------
# Eigenvector weights
# -----------------------------
def eigenvector_weight_known(lambda_hat: float, ctx: SpectralContext) -> float:
    """
    Raises:
        DomainError: lambda_hat at or below the bulk edge.
        ValidityError: non-positive denominator.
    """
    return weight_of_delta(_delta_beyond_edge(lambda_hat, ctx), ctx)


def eigenvector_weight_empirical(
    lambda_hat: float,
    est: ScatterEstimate,
    w: WeightFunction,
    ctx: Optional[SpectralContext] = None,
) -> float:
    ctx = SpectralContext.from_estimate(est, w) if ctx is None else ctx
    return eigenvector_weight_known(lambda_hat, ctx)


# -----------------------------
# Bilinear forms
# -----------------------------
def bilinear_form_estimate(
    a: np.ndarray,
    b: np.ndarray,
    group: Sequence[int],
    est: Union[ScatterEstimate, np.ndarray],
    weights: Union[Sequence[float], Dict[int, float]],
) -> complex:
    """
    sum_{k in group} w_k (a^* u_k)(u_k^* b), u_k the eigenvectors of the estimate.

    `weights` is aligned with `group` or maps eigenvalue index to weight.
    """
    group = list(group)
    if not group:
        raise DomainError("bilinear form needs a nonempty eigenvalue group")
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    for name, vec in (("a", a), ("b", b)):
        if abs(np.linalg.norm(vec) - 1.0) > 1e-8:
            raise DomainError(f"{name} must have unit norm, got {np.linalg.norm(vec):.6g}")
    if isinstance(weights, dict):
        w = np.array([weights[k] for k in group], dtype=float)
    else:
        w = np.asarray(weights, dtype=float)
        if w.size != len(group):
            raise DomainError(f"{w.size} weights for a group of {len(group)}")
    U = (est.eigenvectors if isinstance(est, ScatterEstimate) else np.asarray(est))[:, group]
    return complex(np.sum(w * (a.conj() @ U) * (U.conj().T @ b)))


def population_projector(sources: SourceConfig, N: int, group: Iterable[int], A: Optional[np.ndarray] = None) -> np.ndarray:
    """
    sum_{k in group} u_k u_k^*, u_k the k-th eigenvector of A A^* (0-based).
    """
    A = signal_matrix(sources, N) if A is None else A
    _, vectors = eigh_descending(A @ A.conj().T)
    U = vectors[:, list(group)]
    return U @ U.conj().T


def groups_from_labels(labels: Sequence[float], L: int) -> List[List[int]]:
    """
    Index groups from per-source labels (equal label = equal power);
    no labels means every source is its own group.
    """
    if not labels:
        return [[k] for k in range(L)]
    groups: Dict[float, List[int]] = {}
    for k, label in enumerate(labels):
        groups.setdefault(label, []).append(k)
    return list(groups.values())


# -----------------------------
# Reports
# -----------------------------
def _estimate_spike(k: int, lam: float, ctx: SpectralContext, threshold: float) -> Spike:
    flags: List[str] = []
    if lam > ctx.support_edge:
        delta = solve_delta(lam, ctx)
        if lam <= threshold:
            flags.append("below_threshold")
    else:
        delta, converged = solve_delta_blind(lam, ctx)
        flags.append("blind_delta")
        if not converged:
            flags.append("not_converged")

    with np.errstate(all="ignore"):
        power = power_of_delta(delta, ctx) if np.isfinite(delta) and delta != 0 else float("nan")
        try:
            weight = weight_of_delta(delta, ctx) if np.isfinite(delta) else float("nan")
        except ValidityError:
            weight = float("nan")
    if not (np.isfinite(weight) and weight > 0):
        weight = 1.0
        flags.append("weight_fallback")
    if not (np.isfinite(power) and power > 0):
        power = float("nan")
        flags.append("power_invalid")
    return Spike(index=k, eigenvalue=float(lam), power=power, weight=weight, flags=flags)


def build_report(
    est: ScatterEstimate,
    ctx: SpectralContext,
    L: Optional[int] = None,
    L_max: Optional[int] = None,
    margin: Optional[float] = None,
) -> SpikeReport:
    """
    Detected spikes with power and weight estimates.

    With `L` the first L eigenvalues are used whether or not they clear
    the threshold; eigenvalues inside the bulk then get delta from the
    blind fixed-point iteration and are flagged.
    """
    threshold = detection_threshold(ctx, margin)
    if L is None:
        indices = [s.index for s in detect_spikes(est, ctx, L_max, margin).detected]
    else:
        if not 0 <= L < est.n_antennas:
            raise DomainError(f"need 0 <= L < N, got L={L}, N={est.n_antennas}")
        indices = list(range(L))

    spikes = [_estimate_spike(k, float(est.eigenvalues[k]), ctx, threshold) for k in indices]
    flags = sorted({flag for s in spikes for flag in s.flags})
    if L is not None:
        flags.insert(0, "forced")
    report = SpikeReport(detected=spikes, threshold_used=threshold, mode=_mode_of(ctx), flags=flags)
    if report.flags:
        log.debug(f"[inference] report flags: {report.flags}")
    return report


def write_report_csv(path: str, report: SpikeReport, comment: Optional[str] = None) -> None:
    write_csv(path, report.to_frame(), comment)
