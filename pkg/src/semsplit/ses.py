"""Semantic efficiency score: CLIP-part + (1 - LPIPS-part), in [0, 2].

The neural scorers are out of reach here, so the formula layer works on
supplied embeddings / feature stacks, and a closed-form surrogate maps the
fraction of semantics that reached each user to a score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol, Sequence

import numpy as np

from .semcodec import MapGeometry, SemanticBudget, SemanticMap, binary_cell_success, onehot_cell_success

__all__ = [
    "SesScore",
    "SurrogateParams",
    "FeatureLayer",
    "SesEvaluator",
    "SurrogateEvaluator",
    "clip_score",
    "lpips_score",
    "surrogate_ses",
    "delivered_fractions",
    "MapStats",
]


@dataclass(frozen=True)
class SesScore:
    clip_part: float
    lpips_part: float

    @property
    def total(self) -> float:
        return self.clip_part + (1.0 - self.lpips_part)


@dataclass(frozen=True)
class SurrogateParams:
    w_img: float = 0.6
    w_txt: float = 0.4
    clip_floor: float = 0.5
    lpips_max: float = 0.8
    lpips_min: float = 0.1
    decay_b: float = 3.0

    def __post_init__(self):
        if self.w_img < 0 or self.w_txt < 0 or not math.isclose(self.w_img + self.w_txt, 1.0):
            raise ValueError("w_img and w_txt must be non-negative and sum to 1")
        if not 0 <= self.clip_floor <= 1:
            raise ValueError("clip_floor must lie in [0, 1]")
        if not 0 <= self.lpips_min < self.lpips_max <= 1:
            raise ValueError("need 0 <= lpips_min < lpips_max <= 1")
        if not self.decay_b > 0:
            raise ValueError("decay_b must be positive")


@dataclass(frozen=True)
class FeatureLayer:
    """One layer of paired feature maps ``(H, W, channels)`` and channel weights."""

    y: np.ndarray
    y_hat: np.ndarray
    weights: np.ndarray


def clip_score(a, b) -> float:
    """Cosine similarity rescaled from [-1, 1] to [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("embeddings must have non-zero norm")
    cos = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return (cos + 1.0) / 2.0


def lpips_score(layers: Sequence[FeatureLayer]) -> float:
    """Sum over layers of the spatial mean of ``||w * (y - y_hat)||^2``."""
    total = 0.0
    for layer in layers:
        y = np.asarray(layer.y, dtype=float)
        y_hat = np.asarray(layer.y_hat, dtype=float)
        w = np.asarray(layer.weights, dtype=float)
        if y.shape != y_hat.shape or y.ndim != 3 or w.shape != (y.shape[2],):
            raise ValueError("feature maps must be (H, W, C) with matching shapes and C weights")
        if np.any(w < 0):
            raise ValueError("layer weights must be non-negative")
        h, wd = y.shape[:2]
        total += float(np.sum((w * (y - y_hat)) ** 2)) / (h * wd)
    return total


def surrogate_ses(rho_c: float, rho_p: float, p: SurrogateParams) -> SesScore:
    """Closed-form score from delivered common/private fractions."""
    for name, rho in (("rho_c", rho_c), ("rho_p", rho_p)):
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"{name}={rho!r} outside [0, 1]")
    mix = p.w_img * rho_c + p.w_txt * rho_p
    clip_part = p.clip_floor + (1.0 - p.clip_floor) * mix
    lpips_part = p.lpips_min + (p.lpips_max - p.lpips_min) * math.exp(-p.decay_b * mix)
    return SesScore(clip_part, lpips_part)


@dataclass(frozen=True)
class MapStats:
    """Per-tile class histogram of the shared map, used for expected cell success."""

    tile_counts: np.ndarray  # (m_max, C) integer class counts per tile
    geometry: MapGeometry

    @classmethod
    def from_map(cls, smap: SemanticMap, m_max: int) -> "MapStats":
        geometry = smap.geometry(m_max)
        tiles = smap.cells.reshape(m_max, geometry.cells_per_tile)
        counts = np.stack([np.bincount(t, minlength=smap.n_classes) for t in tiles])
        return cls(counts.astype(float), geometry)

    @cached_property
    def prefix_counts(self) -> np.ndarray:
        """Class counts of the first ``n`` tiles, row ``n`` for ``n = 0..m_max``."""
        zero = np.zeros((1, self.tile_counts.shape[1]))
        return np.concatenate([zero, np.cumsum(self.tile_counts, axis=0)])


def _expected_map_fraction(n_c: int, ber, stats: MapStats, codec: str) -> np.ndarray:
    """Expected share of all map cells delivered intact, one entry per BER."""
    ber = np.asarray(ber, dtype=float)
    if n_c == 0:
        return np.zeros(ber.shape)
    c = stats.geometry.n_classes
    success = onehot_cell_success(ber, c) if codec == "onehot" else binary_cell_success(ber, c)
    return success @ stats.prefix_counts[n_c] / stats.geometry.n_cells


def delivered_fractions(
    budget: SemanticBudget,
    ber_c,
    ber_p,
    stats: MapStats,
    avg_word_len,
    codec: str = "onehot",
):
    """Expected delivered common/private fractions for every user.

    ``rho_c`` is the share of map cells (out of the whole map) that arrive
    correctly; ``rho_p`` the share of prompt words (out of ``n_max``) whose
    8-bit characters all arrive intact. ``ber_c`` and ``ber_p`` are per-user.
    """
    ber_c = np.broadcast_to(np.asarray(ber_c, dtype=float), (len(budget.n_p),))
    ber_p = np.broadcast_to(np.asarray(ber_p, dtype=float), (len(budget.n_p),))
    avg_word_len = np.broadcast_to(np.asarray(avg_word_len, dtype=float), (len(budget.n_p),))
    rho_c = _expected_map_fraction(budget.n_c, ber_c, stats, codec)
    n_p = np.asarray(budget.n_p, dtype=float)
    rho_p = (n_p / budget.n_max) * (1.0 - ber_p) ** (8.0 * avg_word_len)
    return np.clip(rho_c, 0.0, 1.0), np.clip(rho_p, 0.0, 1.0)


class SesEvaluator(Protocol):
    def __call__(self, rho_c: float, rho_p: float) -> SesScore: ...


@dataclass(frozen=True)
class SurrogateEvaluator:
    params: SurrogateParams = SurrogateParams()

    def __call__(self, rho_c: float, rho_p: float) -> SesScore:
        return surrogate_ses(float(rho_c), float(rho_p), self.params)
