"""Common/private superposition precoding and per-user SINRs.

Symbols have unit power, so all transmit power lives in the beamformers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet

__all__ = [
    "BeamformerSet",
    "SinrReport",
    "total_power",
    "common_sinr",
    "private_sinr",
    "sinr_report",
    "received_signal_terms",
    "transmit_signal",
]


@dataclass(frozen=True)
class BeamformerSet:
    """Common precoder ``w_c`` (length ``N_t``) and private precoders (``K x N_t``)."""

    common: np.ndarray
    private: np.ndarray

    def __post_init__(self):
        wc = np.asarray(self.common, dtype=np.complex128)
        wp = np.asarray(self.private, dtype=np.complex128)
        if wc.ndim != 1:
            raise ValueError("common precoder must be a vector")
        if wp.ndim != 2 or wp.shape[1] != wc.shape[0] or wp.shape[0] < 1:
            raise ValueError(f"private precoders must have shape (K, {wc.shape[0]}), got {wp.shape}")
        object.__setattr__(self, "common", wc)
        object.__setattr__(self, "private", wp)

    @property
    def n_users(self) -> int:
        return self.private.shape[0]

    @property
    def n_t(self) -> int:
        return self.common.shape[0]

    def scaled(self, c: float) -> "BeamformerSet":
        return BeamformerSet(self.common * c, self.private * c)


@dataclass(frozen=True)
class SinrReport:
    common_sinr: np.ndarray
    private_sinr: np.ndarray

    def in_db(self):
        return 10 * np.log10(self.common_sinr), 10 * np.log10(self.private_sinr)


def total_power(b: BeamformerSet) -> float:
    return float(np.sum(np.abs(b.common) ** 2) + np.sum(np.abs(b.private) ** 2))


def _check(h: ChannelSet, b: BeamformerSet):
    if h.n_users != b.n_users or h.n_t != b.n_t:
        raise ValueError(
            f"dimension mismatch: channels (K={h.n_users}, N_t={h.n_t}) vs "
            f"beamformers (K={b.n_users}, N_t={b.n_t})"
        )


def _gains(h: ChannelSet, b: BeamformerSet):
    # |h_k^H w_c|^2 per user and |h_k^H w_j|^2 as a (K, K) matrix [k, j]
    hc = h.per_user.conj()
    g_common = np.abs(hc @ b.common) ** 2
    g_private = np.abs(hc @ b.private.T) ** 2
    return g_common, g_private


def common_sinr(h: ChannelSet, b: BeamformerSet, sigma2: float) -> np.ndarray:
    """SINR of the common stream; every private stream (including user k's) is noise."""
    _check(h, b)
    g_common, g_private = _gains(h, b)
    return g_common / (g_private.sum(axis=1) + sigma2)


def private_sinr(h: ChannelSet, b: BeamformerSet, sigma2: float) -> np.ndarray:
    """SINR of user k's private stream after the common stream has been removed."""
    _check(h, b)
    _, g_private = _gains(h, b)
    desired = np.diag(g_private).copy()
    off_diag = ~np.eye(h.n_users, dtype=bool)
    interference = np.where(off_diag, g_private, 0.0).sum(axis=1)
    return desired / (interference + sigma2)


def sinr_report(h: ChannelSet, b: BeamformerSet, sigma2: float) -> SinrReport:
    return SinrReport(common_sinr(h, b, sigma2), private_sinr(h, b, sigma2))


def transmit_signal(b: BeamformerSet, s_common: complex, s_private) -> np.ndarray:
    """Superposition ``x = sum_k w_k s_k + w_c s_c``."""
    return b.private.T @ np.asarray(s_private, dtype=np.complex128) + b.common * s_common


def received_signal_terms(h_k, b: BeamformerSet, k: int, s_common: complex, s_private):
    """Split the noiseless received sample of user ``k`` into its three parts.

    Returns ``(desired, interference, common)``: the user's own private stream,
    the multi-user interference from the other private streams, and the common
    stream. Their sum equals ``h_k^H x``.
    """
    h_k = np.asarray(h_k, dtype=np.complex128)
    s_private = np.asarray(s_private, dtype=np.complex128)
    per_stream = (h_k.conj() @ b.private.T) * s_private
    desired = per_stream[k]
    interference = per_stream.sum() - desired
    common = (h_k.conj() @ b.common) * s_common
    return complex(desired), complex(interference), complex(common)
