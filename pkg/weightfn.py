# weightfn.py
"""
Robust Weight Functions

Responsibilities:
- Evaluate the weight u(x) = (1 + alpha) / (alpha + x) and phi(x) = x u(x)
- Evaluate g(x) = x / (1 - c phi(x)), its inverse, v = u o g^-1 and psi(y) = y v(y)
- Expose the limits phi_inf and psi_inf
- Provide the unit-weight hook (u = v = 1) that turns every robust
  quantity back into its sample-covariance counterpart

The aspect ratio `c` is a constructor argument: pass c_n = N/n for
finite-sample quantities and the limit c for the deterministic ones.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
from scipy.optimize import brentq

from error_handler import DomainError


def _check_nonnegative(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must be >= 0")
    return arr


def _scalar_or_array(arr: np.ndarray):
    return float(arr) if arr.ndim == 0 else arr


# -----------------------------
# Weight function
# -----------------------------
@dataclass(frozen=True)
class WeightFunction:
    """
    u(x) = (1 + alpha) / (alpha + x) together with its derived functions.

    All methods accept scalars or numpy arrays.
    """
    alpha: float = 0.2
    c: float = 0.2

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not self.c > 0:
            raise DomainError(f"c must be > 0, got {self.c}")
        if self.c * self.phi_inf() >= 1.0:
            raise DomainError(
                f"c * phi_inf = {self.c * self.phi_inf():.6g} must be < 1 (c={self.c}, alpha={self.alpha})"
            )

    # u and phi
    def u_eval(self, x):
        arr = _check_nonnegative(x)
        return _scalar_or_array((1.0 + self.alpha) / (self.alpha + arr))

    def phi_eval(self, x):
        arr = _check_nonnegative(x)
        return _scalar_or_array(arr * (1.0 + self.alpha) / (self.alpha + arr))

    def phi_inf(self) -> float:
        return 1.0 + self.alpha

    # g and its inverse
    def g_eval(self, x):
        arr = _check_nonnegative(x)
        return _scalar_or_array(arr / (1.0 - self.c * np.asarray(self.phi_eval(arr))))

    def g_inverse(self, y):
        """
        Closed-form inverse of g.

        With k = 1 - c(1 + alpha), y = x(alpha + x) / (alpha + kx) gives
        x^2 + (alpha - ky) x - alpha y = 0; the positive root is taken in
        the cancellation-free form.
        """
        arr = _check_nonnegative(y, "y")
        k = 1.0 - self.c * (1.0 + self.alpha)
        b = k * arr - self.alpha
        disc = np.sqrt(b * b + 4.0 * self.alpha * arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            small = 2.0 * self.alpha * arr / (disc - b)
        x = np.where(b >= 0, 0.5 * (b + disc), small)
        x = np.where(arr == 0, 0.0, x)
        return _scalar_or_array(x)

    def g_inverse_bisect(self, y: float, tol: float = 1e-14) -> float:
        """
        Monotone-bisection inverse of g; valid for any increasing g.
        """
        y = float(_check_nonnegative(y, "y"))
        if y == 0.0:
            return 0.0
        hi = max(1.0, y)
        while self.g_eval(hi) < y:
            hi *= 2.0
        return brentq(lambda x: self.g_eval(x) - y, 0.0, hi, xtol=tol * max(1.0, y), rtol=4 * np.finfo(float).eps)

    # v and psi
    def v_eval(self, y):
        return self.u_eval(self.g_inverse(y))

    def psi_eval(self, y):
        arr = _check_nonnegative(y, "y")
        return _scalar_or_array(arr * np.asarray(self.v_eval(arr)))

    def psi_inf(self) -> float:
        phi_inf = self.phi_inf()
        return phi_inf / (1.0 - self.c * phi_inf)

    # misc
    def with_c(self, c: float) -> "WeightFunction":
        """Same u, different aspect ratio (e.g. c_n instead of c)."""
        return type(self)(alpha=self.alpha, c=c)

    @property
    def is_unit(self) -> bool:
        return False

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "maronna", "alpha": self.alpha, "c": self.c}


@dataclass(frozen=True)
class UnitWeight(WeightFunction):
    """
    u = v = 1: the robust estimator collapses to the sample covariance
    and robust G-MUSIC to G-MUSIC.

    phi is unbounded here, so the c * phi_inf < 1 constraint is dropped.
    """
    alpha: float = float("inf")
    c: float = 0.2

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"c must be > 0, got {self.c}")

    def u_eval(self, x):
        arr = _check_nonnegative(x)
        return _scalar_or_array(np.ones_like(arr))

    def phi_eval(self, x):
        return _scalar_or_array(_check_nonnegative(x))

    def phi_inf(self) -> float:
        return float("inf")

    def g_eval(self, x):
        return _scalar_or_array(_check_nonnegative(x))

    def g_inverse(self, y):
        return _scalar_or_array(_check_nonnegative(y, "y"))

    def v_eval(self, y):
        arr = _check_nonnegative(y, "y")
        return _scalar_or_array(np.ones_like(arr))

    def psi_inf(self) -> float:
        return float("inf")

    def with_c(self, c: float) -> "UnitWeight":
        return UnitWeight(c=c)

    @property
    def is_unit(self) -> bool:
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "unit", "c": self.c}
