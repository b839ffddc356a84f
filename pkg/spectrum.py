# spectrum.py
"""
Deterministic Spectral Equations

Responsibilities:
- Represent the limiting texture law nu (Dirac, quantile quadrature,
  empirical sample set) and integrate against it
- Solve the gamma equation, the real delta(x) equation (bisection and
  Picard) and its empirical counterpart delta_hat(x)
- Compute the support edges S-_mu, S+_mu, the bound S+, the detectability
  threshold p- and the spike locations Lambda_j
- Evaluate the limiting eigenvalue density of the robust scatter matrix

Writing s_t = t v_c(t gamma), the delta equation is equivalent to
    x(delta) = -c / delta + int s_t / (1 + delta s_t) nu(dt),
which is convex on (-1/max s_t, 0). Its minimum there is S+_mu and
delta(x) for x > S+_mu is the root on the increasing branch.
"""

from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import brentq

import config
from error_handler import (
    BracketError,
    ConvergenceError,
    DomainError,
    InsideSupportError,
    ValidityError,
)
from logger import get_logger
from schema import NoiseModel, ScatterEstimate
from weightfn import WeightFunction

log = get_logger(__name__)

RTOL = 4 * np.finfo(float).eps


# -----------------------------
# Texture measures
# -----------------------------
def _student_ppf(beta: float, levels: np.ndarray) -> np.ndarray:
    return stats.f.ppf(levels, 1.0, beta) * (beta - 2.0) / beta


@dataclass(frozen=True, eq=False)
class TauMeasure:
    """
    Discrete representation of nu: atoms with nonnegative masses summing to 1.

    dirac: exact; analytic: M quantile atoms of a known law; empirical: a
    sample set (e.g. the tau_hat of one realization).
    """
    kind: str
    atoms: np.ndarray
    masses: np.ndarray
    label: str = ""

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).ravel()
        masses = np.asarray(self.masses, dtype=float).ravel()
        if atoms.size == 0 or atoms.shape != masses.shape:
            raise DomainError("a measure needs at least one atom and one mass per atom")
        if np.any(atoms <= 0) or not np.all(np.isfinite(atoms)):
            raise DomainError("measure atoms must be finite and positive")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-9:
            raise DomainError("measure masses must be nonnegative and sum to 1")
        atoms.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def dirac(cls, t0: float = 1.0) -> "TauMeasure":
        return cls("dirac", np.array([t0]), np.array([1.0]), label=f"dirac({t0:g})")

    @classmethod
    def empirical(cls, values, label: str = "empirical", check_mean: bool = True) -> "TauMeasure":
        values = np.asarray(values, dtype=float).ravel()
        measure = cls("empirical", values, np.full(values.size, 1.0 / values.size), label=label)
        if check_mean:
            measure._check_mean()
        return measure

    @classmethod
    def analytic(
        cls,
        ppf: Callable[[np.ndarray], np.ndarray],
        size: Optional[int] = None,
        label: str = "analytic",
    ) -> "TauMeasure":
        """
        Midpoint quantile quadrature of a tau law: M equal-mass atoms at
        ppf((k - 1/2) / M).
        """
        size = config.get("quadrature_size") if size is None else int(size)
        if size < 1:
            raise DomainError(f"quadrature size must be >= 1, got {size}")
        levels = (np.arange(size) + 0.5) / size
        atoms = np.asarray(ppf(levels), dtype=float)
        measure = cls("analytic", atoms, np.full(size, 1.0 / size), label=label)
        measure._check_mean()
        return measure

    @classmethod
    def student_t(cls, beta: float, size: Optional[int] = None) -> "TauMeasure":
        """t^2 (beta - 2) / beta for t ~ Student-t(beta), i.e. a scaled F(1, beta) law."""
        if not beta > 2:
            raise DomainError(f"Student-t texture requires beta > 2, got {beta}")
        return cls.analytic(partial(_student_ppf, float(beta)), size, label=f"student(beta={beta:g})")

    def _check_mean(self) -> None:
        mean = self.mean()
        if abs(mean - 1.0) > 0.01:
            log.warning(f"[spectrum] {self.label} has mean {mean:.4f}, not 1")

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]):
        """int f d nu, with f vectorized over the atoms."""
        return np.dot(self.masses, f(self.atoms))

    def mean(self) -> float:
        return float(np.dot(self.masses, self.atoms))

    @property
    def tau_max(self) -> float:
        return float(self.atoms.max())

    @property
    def size(self) -> int:
        return self.atoms.size

    def reduced(self, size: int) -> "TauMeasure":
        """
        Coarsen to at most `size` atoms by merging equal-mass quantile
        blocks (mass-weighted block means); the mean is preserved.
        """
        if self.size <= size:
            return self
        order = np.argsort(self.atoms)
        atoms, masses = [], []
        for block in np.array_split(order, size):
            m = self.masses[block].sum()
            if m > 0:
                atoms.append(np.dot(self.masses[block], self.atoms[block]) / m)
                masses.append(m)
        masses = np.asarray(masses)
        return TauMeasure(self.kind, np.asarray(atoms), masses / masses.sum(), label=f"{self.label}[{len(atoms)}]")


def limiting_measure_for(noise: NoiseModel, size: Optional[int] = None) -> TauMeasure:
    """
    nu for a noise model: the chi-square texture concentrates at 1, a
    finite number of outliers carries no limiting mass.
    """
    if noise.kind == "student":
        return TauMeasure.student_t(noise.beta, size)
    return TauMeasure.dirac(1.0)


# -----------------------------
# Kernel of the delta equation
# -----------------------------
def _x_of_delta(delta, s: np.ndarray, m: np.ndarray, c: float):
    return -c / delta + np.dot(m, s / (1.0 + delta * s))


def _dx_of_delta(delta, s: np.ndarray, m: np.ndarray, c: float):
    r = s / (1.0 + delta * s)
    return c / (delta * delta) - np.dot(m, r * r)


def _picard_map(delta, x, s: np.ndarray, m: np.ndarray, c: float):
    return c / (-x + np.dot(m, s / (1.0 + delta * s)))


def _right_edge(s: np.ndarray, m: np.ndarray, c: float) -> Tuple[float, float]:
    """(delta*, S+_mu): minimizer and minimum of x(delta) on (-1/max s, 0)."""
    s_max = float(s.max())
    lo = None
    for k in range(1, 17):
        d = -(1.0 - 10.0 ** (-k)) / s_max
        if _dx_of_delta(d, s, m, c) < 0:
            lo = d
            break
    if lo is None:
        raise BracketError("x(delta) has no interior minimum on the negative branch")
    hi = 0.5 * lo
    while _dx_of_delta(hi, s, m, c) <= 0:
        hi *= 0.5
    delta_star = brentq(_dx_of_delta, lo, hi, args=(s, m, c), xtol=1e-300, rtol=RTOL)
    return delta_star, float(_x_of_delta(delta_star, s, m, c))


def _left_edge(s: np.ndarray, m: np.ndarray, c: float) -> Tuple[float, float]:
    """
    (delta_left, S-_mu): first local maximum of x(delta) on (0, inf).
    """
    scale = float(np.sqrt(c / np.dot(m, s * s)))
    grid = np.geomspace(1e-6 * scale, 1e12 * scale, 120)
    prev = grid[0]
    for d in grid[1:]:
        if _dx_of_delta(d, s, m, c) <= 0:
            root = brentq(_dx_of_delta, prev, d, args=(s, m, c), xtol=1e-300, rtol=RTOL)
            return root, max(0.0, float(_x_of_delta(root, s, m, c)))
        prev = d
    return float("inf"), 0.0


def s_plus_formula(w: WeightFunction, c: float, gamma: float) -> float:
    """S+ = phi_inf (1 + sqrt c)^2 / (gamma (1 - c phi_inf))"""
    phi_inf = w.phi_inf()
    return phi_inf * (1.0 + np.sqrt(c)) ** 2 / (gamma * (1.0 - c * phi_inf))


# -----------------------------
# gamma
# -----------------------------
def solve_gamma(measure: TauMeasure, w: WeightFunction, c: Optional[float] = None) -> float:
    """
    Unique gamma > 0 with 1 = int psi_c(t gamma) / (1 + c psi_c(t gamma)) nu(dt).

    Raises:
        BracketError: no sign change on [1e-12, 1e12].
    """
    if c is not None and c != w.c:
        w = w.with_c(c)
    c = w.c

    def excess(gamma: float) -> float:
        psi = np.asarray(w.psi_eval(measure.atoms * gamma))
        return float(np.dot(measure.masses, psi / (1.0 + c * psi))) - 1.0

    lo, hi = 1e-12, 1e12
    f_lo, f_hi = excess(lo), excess(hi)
    if not (f_lo < 0 < f_hi):
        raise BracketError(
            f"gamma equation has no root in [{lo:g}, {hi:g}] for {measure.label}, c={c:g} "
            f"(excess {f_lo:.3g} .. {f_hi:.3g})"
        )
    gamma = brentq(excess, lo, hi, xtol=1e-300, rtol=RTOL)
    log.debug(f"[spectrum] gamma={gamma:.12g} for {measure.label}, c={c:g}")
    return gamma


# -----------------------------
# Spectral context
# -----------------------------
@dataclass(frozen=True, eq=False)
class SpectralContext:
    """
    Everything the estimators need for one (nu, u, c) triple.

    The empirical variant uses nu = tau_hat, c = c_n and gamma = gamma_hat,
    so every estimator has a single code path.
    """
    measure: TauMeasure
    weightfn: WeightFunction
    c: float
    gamma: float
    S_plus: float
    support_edge: float
    left_edge: float
    delta_edge: float
    delta_left: float
    p_minus: float
    p_minus_guaranteed: float
    v: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)

    @classmethod
    def build(
        cls,
        measure: TauMeasure,
        w: WeightFunction,
        c: Optional[float] = None,
        gamma: Optional[float] = None,
    ) -> "SpectralContext":
        if c is not None and c != w.c:
            w = w.with_c(c)
        c = w.c
        if gamma is None:
            # v is constant for the unit weight, gamma drops out
            gamma = 1.0 if w.is_unit else solve_gamma(measure, w)
        if not gamma > 0:
            raise DomainError(f"gamma must be > 0, got {gamma}")

        v = np.asarray(w.v_eval(measure.atoms * gamma), dtype=float).reshape(measure.atoms.shape)
        s = measure.atoms * v
        m = measure.masses
        delta_edge, edge = _right_edge(s, m, c)
        delta_left, left = _left_edge(s, m, c)
        S_plus = edge if w.is_unit else s_plus_formula(w, c, gamma)

        p_minus = _power(delta_edge, v, s, m, c)
        ctx = cls(
            measure=measure, weightfn=w, c=c, gamma=gamma, S_plus=S_plus,
            support_edge=edge, left_edge=left, delta_edge=delta_edge, delta_left=delta_left,
            p_minus=p_minus, p_minus_guaranteed=p_minus, v=v, s=s,
        )
        x_guard = max(S_plus, edge * (1.0 + config.get("edge_offset")))
        guaranteed = _power(solve_delta(x_guard, ctx), v, s, m, c)
        ctx = replace(ctx, p_minus_guaranteed=guaranteed)
        log.debug(
            f"[spectrum] context {measure.label}: gamma={gamma:.6g} S+={S_plus:.6g} "
            f"S+_mu={edge:.6g} S-_mu={left:.6g} p-={p_minus:.6g}"
        )
        return ctx

    @classmethod
    def from_estimate(cls, est: ScatterEstimate, w: WeightFunction) -> "SpectralContext":
        """Empirical context: nu_n = tau_hat, c_n = N/n, gamma = gamma_hat."""
        return cls.build(
            TauMeasure.empirical(est.tau_hat, label="tau_hat"),
            w,
            c=est.aspect_ratio,
            gamma=est.gamma_hat,
        )

    @property
    def masses(self) -> np.ndarray:
        return self.measure.masses

    def with_measure(self, measure: TauMeasure) -> "SpectralContext":
        """Same gamma, u and c on another measure (e.g. a reduced one)."""
        return SpectralContext.build(measure, self.weightfn, gamma=self.gamma)

    def x_of_delta(self, delta):
        return _x_of_delta(delta, self.s, self.masses, self.c)

    def summary(self) -> dict:
        return {
            "measure": self.measure.label,
            "alpha": self.weightfn.alpha,
            "c": self.c,
            "gamma": self.gamma,
            "S_plus": self.S_plus,
            "S_mu_plus": self.support_edge,
            "S_mu_minus": self.left_edge,
            "p_minus": self.p_minus,
            "p_minus_guaranteed": self.p_minus_guaranteed,
        }


def empirical_context(
    tau_hats, gamma_hat: float, w: WeightFunction, c_n: float, check_mean: bool = True
) -> SpectralContext:
    measure = TauMeasure.empirical(tau_hats, label="tau_hat", check_mean=check_mean)
    return SpectralContext.build(measure, w, c=c_n, gamma=gamma_hat)


# -----------------------------
# delta(x)
# -----------------------------
def solve_delta(x: float, ctx: SpectralContext, method: str = "bisection") -> float:
    """
    Real delta(x) for x > S+_mu (negative root) or 0 < x < S-_mu (positive root).

    method="picard" iterates delta <- c / (-x + int s / (1 + delta s)) instead;
    both land on the same root.

    Raises:
        DomainError: x <= 0.
        InsideSupportError: x in [S-_mu, S+_mu].
    """
    if not x > 0:
        raise DomainError(f"delta(x) is defined for x > 0, got {x}")
    s, m, c = ctx.s, ctx.masses, ctx.c
    if x > ctx.support_edge:
        if method == "picard":
            delta, ok, it = _picard_real(x, -c / x, s, m, c, config.get("delta_max_iter"))
            if not ok:
                raise ConvergenceError(f"delta Picard iteration at x={x:.6g}", iterations=it)
            return delta
        hi = max(0.5 * ctx.delta_edge, -c / (2.0 * x))
        while _x_of_delta(hi, s, m, c) <= x:
            hi *= 0.5
        return brentq(lambda d: _x_of_delta(d, s, m, c) - x, ctx.delta_edge, hi, xtol=1e-300, rtol=RTOL)
    if x < ctx.left_edge:
        if method == "picard":
            delta, ok, it = _picard_real(x, 0.0, s, m, c, config.get("delta_max_iter"))
            if not ok:
                raise ConvergenceError(f"delta Picard iteration at x={x:.6g}", iterations=it)
            return delta
        lo = 0.5 * ctx.delta_left
        while _x_of_delta(lo, s, m, c) >= x:
            lo *= 0.5
        return brentq(lambda d: _x_of_delta(d, s, m, c) - x, lo, ctx.delta_left, xtol=1e-300, rtol=RTOL)
    raise InsideSupportError(x)


def _picard_real(x: float, start: float, s, m, c, max_iter: int, tol: float = 1e-14) -> Tuple[float, bool, int]:
    delta = start
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for it in range(1, max_iter + 1):
            nxt = float(_picard_map(delta, x, s, m, c))
            if not np.isfinite(nxt):
                return nxt, False, it
            if abs(nxt - delta) <= tol * abs(nxt):
                return nxt, True, it
            delta = nxt
    return delta, False, max_iter


def solve_delta_blind(x: float, ctx: SpectralContext, max_iter: Optional[int] = None) -> Tuple[float, bool]:
    """
    Fixed-point iteration run until convergence or the iteration budget,
    whatever the position of x; returns (last iterate, converged).
    """
    max_iter = config.get("delta_max_iter") if max_iter is None else max_iter
    delta, ok, it = _picard_real(x, -ctx.c / x, ctx.s, ctx.masses, ctx.c, max_iter)
    if not ok:
        log.debug(f"[spectrum] blind delta at x={x:.6g} stopped after {it} iterations")
    return delta, ok


def solve_delta_hat(x: float, tau_hats, gamma_hat: float, w: WeightFunction, c_n: float) -> float:
    """
    Negative root delta_hat(x) of the empirical equation (sum over tau_hat).

    Raises:
        DomainError: x <= S+_hat.
    """
    ctx = empirical_context(tau_hats, gamma_hat, w, c_n)
    if not x > ctx.S_plus:
        raise DomainError(f"delta_hat needs x > S+_hat = {ctx.S_plus:.6g}, got {x}")
    return solve_delta(x, ctx)


# -----------------------------
# Thresholds and spike locations
# -----------------------------
def _power(delta: float, v, s, m, c) -> float:
    return float(-c / (delta * np.dot(m, v / (1.0 + delta * s))))


def power_of_delta(delta: float, ctx: SpectralContext) -> float:
    """-c (delta int v / (1 + delta s) nu)^-1"""
    return _power(delta, ctx.v, ctx.s, ctx.masses, ctx.c)


def weight_of_delta(delta: float, ctx: SpectralContext) -> float:
    """
    int v / (1 + delta s)^2 / [ int v / (1 + delta s) (1 - (1/c) int (delta s)^2 / (1 + delta s)^2) ]

    Raises:
        ValidityError: the bracketed factor is not positive.
    """
    m = ctx.masses
    denom = 1.0 + delta * ctx.s
    a1 = np.dot(m, ctx.v / denom)
    a2 = np.dot(m, ctx.v / (denom * denom))
    correction = 1.0 - np.dot(m, (delta * ctx.s / denom) ** 2) / ctx.c
    if not correction > 0 or not a1 > 0:
        raise ValidityError(f"eigenvector weight past validity (correction={correction:.3e}, delta={delta:.6g})")
    return float(a2 / (a1 * correction))


def compute_S_plus(ctx: SpectralContext) -> float:
    return ctx.S_plus


def compute_p_minus(ctx: SpectralContext) -> float:
    """Limit of the power functional as x decreases to the bulk edge."""
    return ctx.p_minus


def p_minus_guaranteed(ctx: SpectralContext) -> float:
    """Power whose spike sits at S+, the conservative detection bound."""
    return ctx.p_minus_guaranteed


def compute_spike_location(p: float, ctx: SpectralContext) -> Optional[float]:
    """
    Lambda with power_of_delta(delta(Lambda)) = p, or None if p <= p-.
    """
    if not p > ctx.p_minus:
        return None
    v, s, m, c = ctx.v, ctx.s, ctx.masses, ctx.c
    hi = 0.5 * ctx.delta_edge
    while _power(hi, v, s, m, c) <= p:
        hi *= 0.5
    delta = brentq(lambda d: _power(d, v, s, m, c) - p, ctx.delta_edge, hi, xtol=1e-300, rtol=RTOL)
    return float(_x_of_delta(delta, s, m, c))


def support_edge(ctx: SpectralContext) -> float:
    """
    S+_mu: the smallest x beyond which 1 - (delta^2/c) int s^2 / (1 + delta s)^2 > 0,
    i.e. the minimum of x(delta) on the negative branch.
    """
    return ctx.support_edge


def left_edge(ctx: SpectralContext) -> float:
    """S-_mu: the maximum of x(delta) on the positive branch."""
    return ctx.left_edge


# -----------------------------
# Limiting density
# -----------------------------
def _complex_delta(z: complex, start: complex, s, m, c, damping: float, max_iter: int, tol: float = 1e-12):
    delta = start
    for it in range(1, max_iter + 1):
        nxt = (1.0 - damping) * delta + damping * c / (-z + np.dot(m, s / (1.0 + delta * s)))
        if abs(nxt - delta) <= tol * abs(nxt):
            return nxt, True
        delta = nxt
    return delta, False


def limiting_density(
    ctx: SpectralContext,
    grid,
    eps: Optional[float] = None,
    atoms: Optional[int] = None,
    return_flags: bool = False,
):
    """
    Density of mu on `grid`: Im(m_mu(x + i eps)) / pi with m_mu = delta / c.

    delta(z) is found by damped Picard iteration, warm-started from the
    neighbouring grid point (sweeping from the right). Points that do not
    converge keep their last iterate and are flagged.
    """
    eps = config.get("density_eps") if eps is None else eps
    if not eps > 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    damping = config.get("density_damping")
    max_iter = config.get("density_max_iter")
    atoms = config.get("density_atoms") if atoms is None else atoms

    measure = ctx.measure.reduced(atoms)
    s = measure.atoms * np.asarray(ctx.weightfn.v_eval(measure.atoms * ctx.gamma), dtype=float)
    m, c = measure.masses, ctx.c

    grid = np.asarray(grid, dtype=float)
    density = np.zeros(grid.size)
    unconverged = np.zeros(grid.size, dtype=bool)
    delta = None
    for idx in np.argsort(grid)[::-1]:
        z = complex(grid[idx], eps)
        start = -c / z if delta is None or delta.imag < 0 else delta
        delta, ok = _complex_delta(z, start, s, m, c, damping, max_iter)
        unconverged[idx] = not ok
        # m_mu = (delta + (1 - c) / z) / c; for x > 0 the (1 - c) / z term adds only O(eps) to Im
        density[idx] = max(0.0, delta.imag) / (c * np.pi)
    if unconverged.any():
        log.warning(f"[spectrum] density: {int(unconverged.sum())} of {grid.size} grid points did not converge")
    return (density, unconverged) if return_flags else density


def density_left_edge(grid, density, floor: float = 1e-6) -> float:
    """Leftmost grid point where the density exceeds `floor` (display only)."""
    grid = np.asarray(grid, dtype=float)
    above = np.flatnonzero(np.asarray(density) > floor)
    return float(grid[above[0]]) if above.size else float("nan")


def delta_on_grid(xs, ctx: SpectralContext) -> List[float]:
    """delta(x) on a list of points beyond the bulk."""
    return [solve_delta(float(x), ctx) for x in xs]
