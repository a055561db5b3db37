"""DFT codebooks and exhaustive beam sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .mimo import ArrayConfig


@dataclass(frozen=True, eq=False)
class Codebook:
    """Rows of ``vectors`` are the codewords, shape (M, N)."""

    vectors: np.ndarray
    side: str = "transmitter"

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.complex128)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"codebook must be a non-empty (M, N) array, got shape {v.shape}")
        if self.side not in ("transmitter", "receiver"):
            raise DomainError(f"unknown codebook side {self.side!r}")
        norms = np.linalg.norm(v, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise DomainError("codewords must have unit norm")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.size

    def __getitem__(self, m: int) -> np.ndarray:
        return self.vectors[m]


def dft_codebook(n_antennas: int, n_codewords: int, side: str = "transmitter") -> Codebook:
    """Codeword m, entry n = exp(-2j*pi*n*m/M) / sqrt(N)."""
    if n_antennas < 1:
        raise DomainError("n_antennas must be >= 1")
    if n_codewords < n_antennas:
        raise DomainError(
            f"n_codewords={n_codewords} < n_antennas={n_antennas}: undersampled grid not supported"
        )
    m = np.arange(n_codewords)[:, None]
    n = np.arange(n_antennas)[None, :]
    F = np.exp(-2j * math.pi * m * n / n_codewords) / math.sqrt(n_antennas)
    return Codebook(F, side)


def single_antenna_codebook(side: str = "receiver") -> Codebook:
    return Codebook(np.ones((1, 1), dtype=np.complex128), side)


@dataclass(frozen=True)
class SweepResult:
    gains: np.ndarray  # (M_t, M_r) table of |w_q^H H f_p|
    best_pair: tuple[int, int]
    best_flat: int

    @property
    def best_gain(self) -> float:
        return float(self.gains[self.best_pair])


def sweep(H: np.ndarray, ct: Codebook, cr: Codebook) -> SweepResult:
    """Evaluate every (precoder, combiner) pair and pick the strongest.

    Ties resolve to the lowest flat index ``p * M_r + q``.
    """
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2:
        raise ShapeError("H must be a matrix")
    n_rx, n_tx = H.shape
    if ct.n_antennas != n_tx or cr.n_antennas != n_rx:
        raise ShapeError(
            f"H is {n_rx}x{n_tx}; codebooks have {ct.n_antennas} tx and {cr.n_antennas} rx antennas"
        )
    # (M_r, n_rx) @ (n_rx, n_tx) @ (n_tx, M_t) -> (M_r, M_t)
    y = cr.vectors.conj() @ H @ ct.vectors.T
    gains = np.abs(y).T
    flat = int(np.argmax(gains))  # first maximum in row-major order
    m_r = gains.shape[1]
    return SweepResult(gains, (flat // m_r, flat % m_r), flat)


def beam_broadside_angle(m: int, cfg: ArrayConfig, n_codewords: int) -> float:
    """Azimuth (el=0) at which a ULA steering vector aligns with codeword m."""
    if not (0 <= m < n_codewords):
        raise DomainError(f"codeword index {m} outside [0, {n_codewords})")
    omega = m / n_codewords
    omega = (omega + 0.5) % 1.0 - 0.5
    sin_az = omega / cfg.spacing_ratio
    if abs(sin_az) > 1.0 + 1e-15:
        raise DomainError(
            f"codeword {m} maps to sin(az)={sin_az}, not reachable with d/lambda={cfg.spacing_ratio}"
        )
    return math.asin(max(-1.0, min(1.0, sin_az)))


def beam_index_for_frequency(omega: float, cfg: ArrayConfig, n_codewords: int) -> int:
    """Nearest codeword for spatial frequency ``omega`` (= sin(az)cos(el))."""
    x = cfg.spacing_ratio * omega * n_codewords
    return int(math.floor(x + 0.5)) % n_codewords
