"""Narrowband geometric MIMO channel primitives for uniform linear arrays.

Vectors and matrices are plain ``numpy`` complex128 arrays. A channel matrix
has shape ``(n_rx, n_tx)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class ArrayConfig:
    n_elements: int
    spacing_ratio: float = 0.5  # d / lambda

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise DomainError(f"n_elements must be a positive integer, got {self.n_elements}")
        if not (self.spacing_ratio > 0 and math.isfinite(self.spacing_ratio)):
            raise DomainError(f"spacing_ratio must be positive, got {self.spacing_ratio}")


@dataclass(frozen=True)
class RayPath:
    """One propagation path. Angles in radians, delay in seconds."""

    gain: complex
    aod_az: float
    aod_el: float
    aoa_az: float
    aoa_el: float
    delay: float = 0.0

    def __post_init__(self):
        g = complex(self.gain)
        if not (math.isfinite(g.real) and math.isfinite(g.imag)):
            raise DomainError("ray gain must be finite")
        for name in ("aod_az", "aoa_az"):
            _check_angle(getattr(self, name), math.pi, name)
        for name in ("aod_el", "aoa_el"):
            _check_angle(getattr(self, name), HALF_PI, name)

    def scaled(self, c: complex) -> "RayPath":
        return RayPath(self.gain * c, self.aod_az, self.aod_el, self.aoa_az, self.aoa_el, self.delay)


def _check_angle(value: float, bound: float, name: str) -> None:
    if not math.isfinite(value):
        raise DomainError(f"{name} is not finite: {value}")
    # small slack for angles produced by atan2/asin round-off
    if abs(value) > bound + 1e-12:
        raise DomainError(f"{name}={value} outside [-{bound}, {bound}]")


def spatial_frequency(az: float, el: float) -> float:
    """Effective ULA spatial frequency sin(az)*cos(el)."""
    return math.sin(az) * math.cos(el)


def steering_vector(az: float, el: float, cfg: ArrayConfig) -> np.ndarray:
    """Unnormalized ULA response; entry n is exp(-2j*pi*(d/lambda)*Omega*n)."""
    if not (math.isfinite(az) and math.isfinite(el)):
        raise DomainError(f"non-finite angle: az={az}, el={el}")
    _check_angle(az, math.pi, "az")
    _check_angle(el, HALF_PI, "el")
    omega = spatial_frequency(az, el)
    n = np.arange(cfg.n_elements)
    return np.exp(-2j * math.pi * cfg.spacing_ratio * omega * n)


def build_channel(rays: Sequence[RayPath], tx: ArrayConfig, rx: ArrayConfig) -> np.ndarray:
    """H = sum_l gain_l * a_r(aoa_l) a_t(aod_l)^H, shape (n_rx, n_tx)."""
    if len(rays) == 0:
        raise DomainError("cannot build a channel from an empty ray list")
    H = np.zeros((rx.n_elements, tx.n_elements), dtype=np.complex128)
    for ray in rays:
        a_r = steering_vector(ray.aoa_az, ray.aoa_el, rx)
        a_t = steering_vector(ray.aod_az, ray.aod_el, tx)
        H += complex(ray.gain) * np.outer(a_r, a_t.conj())
    return H


def ar1_step(H: np.ndarray, rho: float, noise_seed: int) -> np.ndarray:
    """First-order autoregressive evolution H' = rho*H + sqrt(1-rho^2)*W.

    W has i.i.d. circularly-symmetric complex Gaussian entries of unit
    variance drawn from ``numpy.random.default_rng(noise_seed)``.
    """
    if not (0.0 <= rho <= 1.0):
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    H = np.asarray(H, dtype=np.complex128)
    rng = np.random.default_rng(noise_seed)
    W = (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)) / math.sqrt(2.0)
    if rho == 1.0:
        return H.copy()
    return rho * H + math.sqrt(1.0 - rho * rho) * W


def received_gain(H: np.ndarray, f: np.ndarray, w: np.ndarray) -> complex:
    """Beamformed scalar w^H H f."""
    H = np.asarray(H)
    f = np.asarray(f)
    w = np.asarray(w)
    if H.ndim != 2 or f.ndim != 1 or w.ndim != 1:
        raise ShapeError("expected a matrix and two vectors")
    n_rx, n_tx = H.shape
    if f.shape[0] != n_tx or w.shape[0] != n_rx:
        raise ShapeError(f"H is {n_rx}x{n_tx} but len(f)={f.shape[0]}, len(w)={w.shape[0]}")
    return complex(np.vdot(w, H @ f))


def channel_rank(H: np.ndarray, tol: float = 1e-9) -> int:
    s = np.linalg.svd(np.asarray(H), compute_uv=False)
    return int(np.sum(s > tol))


def scale_rays(rays: Iterable[RayPath], c: complex) -> list[RayPath]:
    return [r.scaled(c) for r in rays]
