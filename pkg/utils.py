# utils.py
"""
Utility Module

Responsibilities:
- Angle and power unit conversions
- Reproducible per-trial random streams
- Hashing of configurations for output provenance
- Small Hermitian-matrix helpers
- CSV output with a provenance comment line
"""

import hashlib
import json
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd


# -----------------------------
# Unit helpers
# -----------------------------
def deg2rad(values):
    """Degrees to radians (scalars or arrays)."""
    return np.deg2rad(values)


def rad2deg(values):
    """Radians to degrees (scalars or arrays)."""
    return np.rad2deg(values)


def db_to_linear(db) -> Any:
    """p = 10^(dB/10)."""
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


# -----------------------------
# Random streams
# -----------------------------
STREAM_ROLES: Dict[str, int] = {
    "tau": 1,
    "symbols": 2,
    "noise": 3,
    "model": 4,
    "misc": 9,
}


def make_rng(seed: int, trial: int = 0, role: str = "misc") -> np.random.Generator:
    """
    Counter-based generator keyed by (seed, trial, stream role).

    Streams depend only on their key, so trial results do not depend on
    the order or process in which trials execute.
    """
    if role not in STREAM_ROLES:
        raise KeyError(f"unknown random stream role '{role}'")
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(trial), STREAM_ROLES[role]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def trial_streams(seed: int, trial: int, roles: Iterable[str] = ("tau", "symbols", "noise")) -> Dict[str, np.random.Generator]:
    """One generator per role for a given trial."""
    return {role: make_rng(seed, trial, role) for role in roles}


# -----------------------------
# Provenance
# -----------------------------
def config_hash(values: Dict[str, Any]) -> str:
    """
    Short stable hash of a configuration dictionary.
    """
    payload = json.dumps(values, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# -----------------------------
# Matrix helpers
# -----------------------------
def hermitize(matrix: np.ndarray) -> np.ndarray:
    """Symmetrize away rounding: (M + M^H) / 2."""
    return 0.5 * (matrix + matrix.conj().T)


def eigh_descending(matrix: np.ndarray):
    """
    Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
    """
    values, vectors = np.linalg.eigh(hermitize(matrix))
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


# -----------------------------
# CSV output
# -----------------------------
def write_csv(path: str, frame: pd.DataFrame, comment: Optional[str] = None) -> None:
    """
    Write a DataFrame with an optional leading `# comment` line.
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        frame.to_csv(f, index=False, float_format="%.10g")


def read_csv(path: str) -> pd.DataFrame:
    """Read a CSV written by write_csv."""
    return pd.read_csv(path, comment="#")
