# datagen.py
"""
Snapshot Generator

Responsibilities:
- Build uniform-linear-array steering vectors a(theta) and random channels
- Draw impulsive textures tau_i (Gaussian, Student-t, single outliers)
- Synthesize y_i = sum_l sqrt(p_l) a_l s_li + sqrt(tau_i) w_i
- Read and write snapshot files (RSPK1 binary container and CSV)
"""

import struct
from typing import Dict, Mapping, Tuple, Union

import numpy as np
import pandas as pd

from error_handler import DomainError, FormatError
from logger import get_logger
from schema import GroundTruth, NoiseModel, SnapshotMatrix, SourceConfig

log = get_logger(__name__)

RngLike = Union[np.random.Generator, Mapping[str, np.random.Generator]]


# -----------------------------
# Array response
# -----------------------------
def steering_vector(theta: float, N: int, d: float = 0.5) -> np.ndarray:
    """
    a(theta) = N^{-1/2} [exp(2 pi i d j sin theta)]_{j=0..N-1}
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if not d > 0:
        raise DomainError(f"spacing d must be > 0, got {d}")
    j = np.arange(N)
    return np.exp(2j * np.pi * d * j * np.sin(theta)) / np.sqrt(N)


def steering_matrix(thetas, N: int, d: float = 0.5) -> np.ndarray:
    """
    Columns a(theta_k) for every theta in `thetas`; shape (N, len(thetas)).
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if not d > 0:
        raise DomainError(f"spacing d must be > 0, got {d}")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    j = np.arange(N)[:, None]
    return np.exp(2j * np.pi * d * j * np.sin(thetas)[None, :]) / np.sqrt(N)


def random_channels(L: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """
    L i.i.d. CN(0, I_N / N) channel vectors (columns).
    """
    return complex_gaussian(rng, (N, L)) / np.sqrt(N)


def signal_matrix(sources: SourceConfig, N: int, rng: np.random.Generator = None) -> np.ndarray:
    """
    A = [sqrt(p_1) a_1, ..., sqrt(p_L) a_L]
    """
    if sources.L == 0:
        return np.zeros((N, 0), dtype=complex)
    if sources.kind == "random":
        if rng is None:
            raise DomainError("random channels need a random generator")
        vectors = random_channels(sources.L, N, rng)
    else:
        vectors = steering_matrix(sources.angles, N, sources.spacing_d)
    return vectors * np.sqrt(np.asarray(sources.powers))[None, :]


# -----------------------------
# Random laws
# -----------------------------
def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circular complex Gaussian entries (unit variance)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_symbols(L: int, n: int, rng: np.random.Generator, law: str = "gaussian") -> np.ndarray:
    """
    Source symbols s_li with zero mean and unit variance.
    """
    if law == "gaussian":
        return complex_gaussian(rng, (L, n))
    if law == "qpsk":
        re = rng.integers(0, 2, size=(L, n)) * 2 - 1
        im = rng.integers(0, 2, size=(L, n)) * 2 - 1
        return (re + 1j * im) / np.sqrt(2.0)
    raise DomainError(f"unknown symbol law '{law}'")


def sample_tau(model: NoiseModel, n: int, rng: np.random.Generator, n_antennas: int = None) -> np.ndarray:
    """
    Draw tau_1..tau_n.

    gaussian: 2N tau ~ chi2 with 2N degrees of freedom (needs n_antennas);
    student:  tau = t^2 (beta - 2) / beta, t ~ Student-t(beta);
    outlier:  tau = 1 except the last `count` entries, equal to `value`.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if model.kind == "gaussian":
        if n_antennas is None or n_antennas < 1:
            raise DomainError("Gaussian texture needs the number of antennas N")
        return rng.chisquare(2 * n_antennas, size=n) / (2.0 * n_antennas)
    if model.kind == "student":
        beta = model.beta
        t = rng.standard_t(beta, size=n)
        return t * t * (beta - 2.0) / beta
    if model.kind == "outlier":
        if model.count >= n:
            raise DomainError(f"outlier count {model.count} must be < n={n}")
        taus = np.ones(n)
        taus[n - model.count:] = model.value
        return taus
    raise DomainError(f"unknown noise model '{model.kind}'")


def _streams(rng: RngLike) -> Dict[str, np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        return {"tau": rng, "symbols": rng, "noise": rng}
    return {role: rng[role] for role in ("tau", "symbols", "noise")}


# -----------------------------
# Synthesis
# -----------------------------
def synthesize(
    sources: SourceConfig,
    noise: NoiseModel,
    N: int,
    n: int,
    rng: RngLike,
    symbols: str = "gaussian",
) -> Tuple[SnapshotMatrix, GroundTruth]:
    """
    Draw one realization of Y (N x n) and its ground truth.

    `rng` is either a single Generator or a mapping with "tau", "symbols"
    and "noise" streams.
    """
    if N < 1 or n < 1:
        raise DomainError(f"need N >= 1 and n >= 1, got N={N}, n={n}")
    if N < sources.L:
        raise DomainError(f"need N >= L, got N={N}, L={sources.L}")

    streams = _streams(rng)
    taus = sample_tau(noise, n, streams["tau"], n_antennas=N)
    A = signal_matrix(sources, N, streams["symbols"])
    S = draw_symbols(sources.L, n, streams["symbols"], symbols)
    G = complex_gaussian(streams["noise"], (N, n))

    W = np.sqrt(N) * G / np.linalg.norm(G, axis=0, keepdims=True)
    Y = A @ S + W * np.sqrt(taus)[None, :]

    truth = GroundTruth(
        taus=taus,
        angles=sources.angles,
        powers=sources.powers,
        steering=A,
        symbols=S,
        gaussians=G,
    )
    log.debug(f"[datagen] synthesized N={N} n={n} L={sources.L} noise={noise.label()}")
    return SnapshotMatrix(Y), truth


# -----------------------------
# RSPK1 container
# -----------------------------
MAGIC = b"RSPK"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")


def encode_rspk(matrix: np.ndarray) -> bytes:
    """
    Magic, u32 version, u64 rows, u64 cols, then column-major (re, im)
    little-endian float64 pairs.
    """
    matrix = np.asarray(matrix, dtype=complex)
    rows, cols = matrix.shape
    body = np.ascontiguousarray(matrix.T).astype("<c16").tobytes()
    return HEADER.pack(MAGIC, VERSION, rows, cols) + body


def decode_rspk(payload: bytes) -> np.ndarray:
    if len(payload) < HEADER.size:
        raise FormatError("truncated RSPK1 header", offset=len(payload), expected=HEADER.size)
    magic, version, rows, cols = HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported RSPK version {version}", offset=4)
    if rows < 1 or cols < 1:
        raise FormatError(f"empty matrix {rows} x {cols}", offset=8)
    expected = HEADER.size + 16 * rows * cols
    if len(payload) < expected:
        raise FormatError("truncated RSPK1 body", offset=len(payload), expected=expected)
    if len(payload) > expected:
        raise FormatError("trailing bytes after RSPK1 body", offset=expected, expected=expected)
    flat = np.frombuffer(payload, dtype="<c16", count=rows * cols, offset=HEADER.size)
    return flat.reshape(cols, rows).T.astype(complex)


def write_rspk(path: str, matrix: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_rspk(matrix))


def read_rspk(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_rspk(f.read())


# -----------------------------
# CSV alternative
# -----------------------------
def write_snapshots_csv(path: str, Y: SnapshotMatrix) -> None:
    """
    One snapshot y_i per line; columns re_0, im_0, ..., re_{N-1}, im_{N-1}.
    """
    data = Y.data
    columns = {}
    for j in range(Y.n_antennas):
        columns[f"re_{j}"] = data[j].real
        columns[f"im_{j}"] = data[j].imag
    pd.DataFrame(columns).to_csv(path, index=False, float_format="%.17g")


def read_snapshots_csv(path: str) -> SnapshotMatrix:
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot parse snapshot CSV '{path}': {e}")
    N = frame.shape[1] // 2
    expected = [name for j in range(N) for name in (f"re_{j}", f"im_{j}")]
    if frame.shape[1] % 2 or list(frame.columns) != expected:
        raise FormatError(f"snapshot CSV header must be {expected[:4]}..., got {list(frame.columns)[:4]}...")
    values = frame.to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        bad_row = int(np.argwhere(~np.isfinite(values))[0][0])
        raise FormatError(f"non-numeric or non-finite entry in snapshot CSV row {bad_row + 2}")
    data = (values[:, 0::2] + 1j * values[:, 1::2]).T
    return SnapshotMatrix(data)


def write_snapshots(path: str, Y: SnapshotMatrix) -> None:
    if str(path).lower().endswith(".csv"):
        write_snapshots_csv(path, Y)
    else:
        write_rspk(path, Y.data)


def read_snapshots(path: str) -> SnapshotMatrix:
    """Read an RSPK1 or CSV snapshot file (chosen by extension)."""
    if str(path).lower().endswith(".csv"):
        return read_snapshots_csv(path)
    try:
        return SnapshotMatrix(read_rspk(path))
    except OSError as e:
        raise FormatError(f"cannot read snapshot file '{path}': {e}")
