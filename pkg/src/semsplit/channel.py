"""Base-station to vehicle channel: Rayleigh fading scaled by distance path loss.

Channels are stored as ``complex128`` arrays, i.e. pairs of float64 (real, imag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import make_rng

__all__ = [
    "PathLossParams",
    "ChannelSet",
    "dbm_to_watts",
    "watts_to_dbm",
    "path_loss_gain",
    "noise_power",
    "draw_channels",
]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class PathLossParams:
    """Large-scale propagation and noise parameters.

    Defaults follow the vehicular setup: -30 dB gain at 1 m, exponent 3.4,
    10 MHz of bandwidth and a -174 dBm/Hz noise floor.
    """

    epsilon0: float = 1e-3
    d0: float = 1.0
    alpha: float = 3.4
    bandwidth: float = 10e6
    noise_psd_dbm_hz: float = -174.0
    noise_power_linear: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("epsilon0", "d0", "alpha", "bandwidth"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not math.isfinite(self.noise_psd_dbm_hz):
            raise ValueError("noise_psd_dbm_hz must be finite")
        sigma2 = dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth))
        object.__setattr__(self, "noise_power_linear", sigma2)


@dataclass(frozen=True)
class ChannelSet:
    """Per-user channel vectors ``h_k`` (shape ``(K, N_t)``) and their distances."""

    per_user: np.ndarray
    distances: tuple[float, ...]
    seed: int | None = None

    def __post_init__(self):
        h = np.asarray(self.per_user, dtype=np.complex128)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise ValueError(f"per_user must have shape (K, N_t), got {h.shape}")
        if len(self.distances) != h.shape[0]:
            raise ValueError("one distance per user is required")
        if any(d <= 0 for d in self.distances):
            raise ValueError("distances must be positive")
        object.__setattr__(self, "per_user", h)
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))

    @property
    def n_users(self) -> int:
        return self.per_user.shape[0]

    @property
    def n_t(self) -> int:
        return self.per_user.shape[1]


def path_loss_gain(d: float, p: PathLossParams) -> float:
    """Linear power gain ``epsilon0 * (d / d0) ** -alpha``."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d!r}")
    return p.epsilon0 * (d / p.d0) ** (-p.alpha)


def noise_power(p: PathLossParams) -> float:
    """Noise power in watts over the full band."""
    return p.noise_power_linear


def draw_channels(distances, n_t: int, p: PathLossParams, seed=None, rng=None) -> ChannelSet:
    """Draw one block-fading realisation for every user.

    Small-scale fading is CN(0, 1) per antenna (real and imaginary parts each
    with variance 1/2). Either ``seed`` or an existing generator ``rng`` is used;
    passing a seed makes the result a pure function of the inputs.
    """
    distances = [float(d) for d in distances]
    if not distances:
        raise ValueError("at least one user distance is required")
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    if rng is None:
        rng = make_rng(seed)
    scale = np.sqrt([path_loss_gain(d, p) for d in distances])
    g = rng.standard_normal((len(distances), n_t, 2)) * math.sqrt(0.5)
    h = scale[:, None] * (g[..., 0] + 1j * g[..., 1])
    return ChannelSet(per_user=h, distances=tuple(distances), seed=seed)
