# schema.py
"""
Schema Definitions

Responsibilities:
- Define the dataclasses passed between modules: source/noise configurations,
  snapshot matrices, scatter estimates, spike reports, localization curves
  and experiment configurations
- Validate invariants at construction time
- Provide dictionary / DataFrame views for serialization
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

import config
from error_handler import ConfigError, DomainError
from utils import db_to_linear, deg2rad


# -----------------------------
# Data model
# -----------------------------
@dataclass(frozen=True)
class SourceConfig:
    """
    L sources: angles (radians), powers p_1 >= ... >= p_L, array spacing d.

    kind="ula" uses steering vectors a(theta); kind="random" draws i.i.d.
    CN(0, I_N/N) channels instead (angles are then only labels).
    """
    angles: Tuple[float, ...] = ()
    powers: Tuple[float, ...] = ()
    spacing_d: float = 0.5
    kind: str = "ula"

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if len(self.angles) != len(self.powers):
            raise DomainError(f"{len(self.powers)} powers for {len(self.angles)} angles")
        if len(set(self.angles)) != len(self.angles):
            raise DomainError("source angles must be pairwise distinct")
        if any(p < 0 for p in self.powers):
            raise DomainError("source powers must be nonnegative")
        if any(p2 > p1 for p1, p2 in zip(self.powers, self.powers[1:])):
            raise DomainError("source powers must be sorted non-increasing")
        if not self.spacing_d > 0:
            raise DomainError(f"spacing d must be > 0, got {self.spacing_d}")
        if self.kind not in ("ula", "random"):
            raise DomainError(f"unknown source kind '{self.kind}'")

    @property
    def L(self) -> int:
        return len(self.angles)

    @classmethod
    def from_degrees(cls, angles_deg, powers_db, spacing_d: float = 0.5, kind: str = "ula") -> "SourceConfig":
        return cls(
            angles=tuple(np.atleast_1d(deg2rad(np.asarray(angles_deg, dtype=float)))),
            powers=tuple(np.atleast_1d(db_to_linear(powers_db))),
            spacing_d=spacing_d,
            kind=kind,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class NoiseModel:
    """
    Law of the impulsive texture tau_i.

    kind: "gaussian" (2N tau ~ chi2_2N), "student" (tau = t^2 (beta-2)/beta),
    "outlier" (tau = 1 except the last `count` samples, equal to `value`).
    """
    kind: str = "gaussian"
    beta: Optional[float] = None
    count: Optional[int] = None
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind == "student":
            if self.beta is None or not self.beta > 2:
                raise DomainError(f"Student-t texture requires beta > 2, got {self.beta}")
        elif self.kind == "outlier":
            if self.count is None or self.count < 1:
                raise DomainError(f"outlier count must be a positive integer, got {self.count}")
            if self.value is None or not self.value > 0:
                raise DomainError(f"outlier value must be > 0, got {self.value}")
        elif self.kind != "gaussian":
            raise DomainError(f"unknown noise model '{self.kind}'")

    @classmethod
    def gaussian(cls) -> "NoiseModel":
        return cls("gaussian")

    @classmethod
    def student_t(cls, beta: float) -> "NoiseModel":
        return cls("student", beta=beta)

    @classmethod
    def outlier(cls, count: int = 1, value: float = 100.0) -> "NoiseModel":
        return cls("outlier", count=count, value=value)

    def label(self) -> str:
        if self.kind == "student":
            return f"student(beta={self.beta:g})"
        if self.kind == "outlier":
            return f"outlier(count={self.count}, value={self.value:g})"
        return "gaussian"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SnapshotMatrix:
    """
    Complex N x n observation matrix Y = [y_1, ..., y_n].
    """
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DomainError(f"snapshot matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DomainError(f"snapshot matrix must be at least 1 x 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DomainError("snapshot matrix has non-finite entries")
        self.data = np.ascontiguousarray(data, dtype=complex)

    @property
    def n_antennas(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def aspect_ratio(self) -> float:
        return self.n_antennas / self.n_samples


@dataclass
class GroundTruth:
    """
    Everything drawn by the generator for one realization.

    `gaussians` holds the standard complex Gaussian columns g_i with
    w_i = sqrt(N) g_i / ||g_i||; the equivalent model reuses them.
    """
    taus: np.ndarray
    angles: Tuple[float, ...]
    powers: Tuple[float, ...]
    steering: np.ndarray
    symbols: np.ndarray
    gaussians: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "taus": self.taus.tolist(),
            "angles": list(self.angles),
            "powers": list(self.powers),
        }


@dataclass
class ScatterEstimate:
    """
    Robust scatter estimate C_N and its leave-one-out statistics.
    """
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray
    quad_forms: np.ndarray
    gamma_hat: float
    tau_hat: np.ndarray
    residual: float
    iterations: int
    n_antennas: int
    n_samples: int
    clipped: int = 0

    @property
    def aspect_ratio(self) -> float:
        return self.n_antennas / self.n_samples

    def summary(self) -> Dict[str, Any]:
        return {
            "N": self.n_antennas,
            "n": self.n_samples,
            "residual": self.residual,
            "iterations": self.iterations,
            "gamma_hat": self.gamma_hat,
            "lambda_max": float(self.eigenvalues[0]),
            "lambda_min": float(self.eigenvalues[-1]),
            "clipped_downdates": self.clipped,
        }


@dataclass
class Spike:
    index: int
    eigenvalue: float
    power: float
    weight: float
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SpikeReport:
    """
    Isolated eigenvalues with their power and eigenvector-weight estimates.

    mode: "known" (integrals against nu) or "empirical" (sums over tau_hat).
    """
    detected: List[Spike]
    threshold_used: float
    mode: str
    flags: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.detected)

    @property
    def indices(self) -> List[int]:
        return [s.index for s in self.detected]

    @property
    def weights(self) -> List[float]:
        return [s.weight for s in self.detected]

    @property
    def powers(self) -> List[float]:
        return [s.power for s in self.detected]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "k": s.index + 1,
                "lambda_hat": s.eigenvalue,
                "p_hat": s.power,
                "w": s.weight,
                "flags": "|".join(s.flags),
            }
            for s in self.detected
        ]
        return pd.DataFrame(rows, columns=["k", "lambda_hat", "p_hat", "w", "flags"])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "detected": [s.to_dict() for s in self.detected],
            "threshold_used": self.threshold_used,
            "mode": self.mode,
            "flags": list(self.flags),
        }


METHODS: Tuple[str, ...] = (
    "music",
    "robust-music",
    "gmusic",
    "gmusic-emp",
    "robust-gmusic",
    "robust-gmusic-emp",
)


@dataclass
class LocalizationCurve:
    """
    One localization function sampled on an increasing angle grid (radians).
    """
    method: str
    grid: np.ndarray
    values: np.ndarray
    minima: List[float] = field(default_factory=list)
    func: Optional[Callable[[float], float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise DomainError(f"grid/values shape mismatch {self.grid.shape} vs {self.values.shape}")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise DomainError("localization grid must be strictly increasing")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"theta_deg": np.rad2deg(self.grid), "value": self.values})


# -----------------------------
# Experiment configuration
# -----------------------------
SCENARIOS = ("spectrum-histogram", "localization-oneshot", "mse-sweep", "estimate")

SCENARIO_ALIASES = {
    "spectrum": "spectrum-histogram",
    "oneshot": "localization-oneshot",
    "mse": "mse-sweep",
    "estimate": "estimate",
}


@dataclass
class ExperimentConfig:
    """
    Merged configuration for one CLI run (file values + flag overrides).
    """
    scenario: str
    N: int
    n: int
    angles_deg: List[float]
    powers_db: List[float]
    noise: NoiseModel
    alpha: float
    trials: int
    seed: int
    workers: int
    out: str
    methods: List[str]
    power_sweep_db: List[float]
    spacing_d: float
    symbols: str
    grid_start_deg: Optional[float]
    grid_stop_deg: Optional[float]
    grid_step_deg: float
    input: Optional[str] = None
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.angles_deg)

    @property
    def powers(self) -> np.ndarray:
        return np.atleast_1d(db_to_linear(self.powers_db)) if self.powers_db else np.zeros(0)

    def sources(self, powers_db: Optional[List[float]] = None) -> SourceConfig:
        return SourceConfig.from_degrees(
            self.angles_deg,
            self.powers_db if powers_db is None else powers_db,
            spacing_d=self.spacing_d,
        )

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ExperimentConfig":
        errors = config.validate(values)
        if values.get("scenario") == "estimate":
            # N and n come from the input file
            errors.pop("n", None)
            errors.pop("N", None)
            errors.pop("angles_deg", None)
        if errors:
            detail = "; ".join(f"{k}: {v}" for k, v in sorted(errors.items()))
            raise ConfigError(f"invalid configuration: {detail}")

        scenario = SCENARIO_ALIASES.get(values["scenario"], values["scenario"])
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario '{values['scenario']}'", key="scenario")
        methods = list(values["method"])
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method(s) {unknown}; choose from {list(METHODS)}", key="method")

        kind = values["noise"]
        if kind == "student":
            noise = NoiseModel.student_t(values["beta"])
        elif kind == "outlier":
            noise = NoiseModel.outlier(values["outlier_count"], values["outlier_value"])
        else:
            noise = NoiseModel.gaussian()

        return cls(
            scenario=scenario,
            N=int(values["N"]),
            n=int(values["n"]),
            angles_deg=[float(a) for a in values["angles_deg"]],
            powers_db=[float(p) for p in values["powers_db"]],
            noise=noise,
            alpha=float(values["alpha"]),
            trials=int(values["trials"]),
            seed=int(values["seed"]),
            workers=int(values["workers"]),
            out=str(values["out"]),
            methods=methods,
            power_sweep_db=[float(p) for p in values["power_sweep_db"]],
            spacing_d=float(values["spacing_d"]),
            symbols=values["symbols"],
            grid_start_deg=values.get("grid_start_deg"),
            grid_stop_deg=values.get("grid_stop_deg"),
            grid_step_deg=float(values["grid_step_deg"]),
            input=values.get("input"),
            raw=dict(values),
        )

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.raw)
