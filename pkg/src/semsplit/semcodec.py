"""Bit-level codecs for the common semantic map and the private text prompts.

The common payload is a class-label map split into ``m_max`` equal tiles
(contiguous row-major chunks of cells); each transmitted tile is sent either
one-hot (``C`` bits per cell) or as plain binary labels (``ceil(log2 C)`` bits
per cell, the segmentation-map baseline). The private payload is a prompt whose
units are words, sent as 8-bit ASCII.

Bitstreams are 1-D ``uint8`` arrays holding 0/1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import erfc

from .rng import make_rng

__all__ = [
    "ABSENT",
    "SemanticMap",
    "MapGeometry",
    "SemanticBudget",
    "Modulation",
    "BitChannelModel",
    "TextUnit",
    "onehot_encode",
    "onehot_decode",
    "label_binary_encode",
    "label_binary_decode",
    "onehot_cell_success",
    "binary_cell_success",
    "cell_success_probability",
    "text_encode",
    "text_decode",
    "ber_from_sinr",
    "transmit_bits",
    "levenshtein",
    "spell_correct",
    "load_dictionary",
    "synthetic_map",
]

ABSENT = -1
PLACEHOLDER = "?"


class ConfigurationError(ValueError):
    pass


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class SemanticMap:
    """Grid of class labels in ``[0, n_classes)``; ``ABSENT`` marks untransmitted cells."""

    cells: np.ndarray
    n_classes: int

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.ndim != 2 or min(cells.shape) < 1:
            raise ValueError(f"cells must be a non-empty 2-D grid, got shape {cells.shape}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if cells.size and (cells.max() >= self.n_classes or cells.min() < ABSENT):
            raise ValueError("labels must lie in [0, n_classes) or be ABSENT")
        object.__setattr__(self, "cells", cells)

    @property
    def grid_h(self) -> int:
        return self.cells.shape[0]

    @property
    def grid_w(self) -> int:
        return self.cells.shape[1]

    def geometry(self, m_max: int) -> "MapGeometry":
        return MapGeometry(self.grid_h, self.grid_w, self.n_classes, m_max)


@dataclass(frozen=True)
class MapGeometry:
    grid_h: int
    grid_w: int
    n_classes: int
    m_max: int

    def __post_init__(self):
        if min(self.grid_h, self.grid_w) < 1 or self.n_classes < 2 or self.m_max < 1:
            raise ConfigurationError(f"invalid map geometry {self}")
        if (self.grid_h * self.grid_w) % self.m_max:
            raise ConfigurationError(
                f"{self.grid_h}x{self.grid_w} grid cannot be split into {self.m_max} equal tiles"
            )

    @property
    def n_cells(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def cells_per_tile(self) -> int:
        return self.n_cells // self.m_max

    @property
    def label_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.n_classes)))

    def onehot_length(self, units: int) -> int:
        return units * self.cells_per_tile * self.n_classes

    def binary_length(self, units: int) -> int:
        return units * self.cells_per_tile * self.label_bits


@dataclass(frozen=True)
class SemanticBudget:
    """Common units ``n_c`` (map tiles) and per-user private units ``n_p`` (words)."""

    n_c: int
    n_p: tuple[int, ...]
    m_max: int
    n_max: int

    def __post_init__(self):
        object.__setattr__(self, "n_p", tuple(int(n) for n in self.n_p))
        if not 0 <= self.n_c <= self.m_max:
            raise ValueError(f"n_c={self.n_c} outside [0, {self.m_max}]")
        if any(not 0 <= n <= self.n_max for n in self.n_p):
            raise ValueError(f"n_p={self.n_p} outside [0, {self.n_max}]")


class Modulation(str, Enum):
    QPSK = "qpsk"


@dataclass(frozen=True)
class BitChannelModel:
    sinr: float
    modulation: Modulation = Modulation.QPSK

    @property
    def ber(self) -> float:
        return float(ber_from_sinr(self.sinr, self.modulation))


@dataclass(frozen=True)
class TextUnit:
    text: str

    @property
    def words(self) -> list[str]:
        return self.text.split()


# --------------------------------------------------------------------------- map


def _tiles(cells: np.ndarray, geometry: MapGeometry, units: int) -> np.ndarray:
    if not 0 <= units <= geometry.m_max:
        raise ValueError(f"budget_units={units} outside [0, {geometry.m_max}]")
    return cells.reshape(-1)[: units * geometry.cells_per_tile]


def onehot_encode(smap: SemanticMap, budget_units: int, m_max: int) -> np.ndarray:
    """One-hot bits for the first ``budget_units`` tiles, ``C`` bits per cell."""
    geometry = smap.geometry(m_max)
    labels = _tiles(smap.cells, geometry, budget_units)
    if np.any(labels == ABSENT):
        raise ValueError("cannot encode absent cells")
    bits = np.zeros((labels.size, smap.n_classes), dtype=np.uint8)
    bits[np.arange(labels.size), labels] = 1
    return bits.reshape(-1)


def _units_from_length(n_bits: int, per_tile: int, geometry: MapGeometry) -> int:
    units, rem = divmod(n_bits, per_tile)
    if rem or units > geometry.m_max:
        raise DecodeError(f"bitstream of length {n_bits} does not match the map geometry")
    return units


def _assemble(labels: np.ndarray, geometry: MapGeometry) -> SemanticMap:
    flat = np.full(geometry.n_cells, ABSENT, dtype=np.int64)
    flat[: labels.size] = labels
    return SemanticMap(flat.reshape(geometry.grid_h, geometry.grid_w), geometry.n_classes)


def onehot_decode(bits, geometry: MapGeometry) -> SemanticMap:
    """Argmax decoding; ties go to the lowest class index, all-zero cells to class 0."""
    bits = np.asarray(bits, dtype=np.uint8)
    c = geometry.n_classes
    _units_from_length(bits.size, geometry.cells_per_tile * c, geometry)
    labels = np.argmax(bits.reshape(-1, c), axis=1) if bits.size else np.empty(0, np.int64)
    return _assemble(labels, geometry)


def label_binary_encode(smap: SemanticMap, budget_units: int, m_max: int) -> np.ndarray:
    """Segmentation-map baseline: ``ceil(log2 C)`` bits per cell, MSB first."""
    geometry = smap.geometry(m_max)
    labels = _tiles(smap.cells, geometry, budget_units)
    if np.any(labels == ABSENT):
        raise ValueError("cannot encode absent cells")
    b = geometry.label_bits
    shifts = np.arange(b - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def label_binary_decode(bits, geometry: MapGeometry) -> SemanticMap:
    """Read label indices directly; indices outside ``[0, C)`` decode to class 0."""
    bits = np.asarray(bits, dtype=np.uint8)
    b = geometry.label_bits
    _units_from_length(bits.size, geometry.cells_per_tile * b, geometry)
    weights = 1 << np.arange(b - 1, -1, -1)
    labels = bits.reshape(-1, b).astype(np.int64) @ weights
    labels[labels >= geometry.n_classes] = 0
    return _assemble(labels, geometry)


def onehot_cell_success(p, n_classes: int) -> np.ndarray:
    """Probability that a one-hot cell of each true class decodes correctly.

    Class ``c`` survives when its own bit survives and no lower-index bit is
    flipped on (higher-index flips only create ties it wins). Class 0 also
    survives when every bit ends up zero. An array of flip rates gives one row
    per rate.
    """
    p = np.asarray(p, dtype=float)[..., None]
    q = 1.0 - p
    success = q ** (np.arange(n_classes) + 1)
    success[..., 0] += (p * q ** (n_classes - 1))[..., 0]
    return success


@lru_cache(maxsize=None)
def _binary_success_table(n_classes: int) -> np.ndarray:
    """``table[c, k]``: flip patterns with ``k`` flips that still decode to class ``c``."""
    b = max(1, math.ceil(math.log2(n_classes)))
    table = np.zeros((n_classes, b + 1))
    for true in range(n_classes):
        for flips in itertools.product((0, 1), repeat=b):
            received = true ^ int("".join(map(str, flips)), 2)
            decoded = received if received < n_classes else 0
            if decoded == true:
                table[true, sum(flips)] += 1
    return table


def binary_cell_success(p, n_classes: int) -> np.ndarray:
    """Per-class success probability for binary labels, by enumerating flip patterns."""
    table = _binary_success_table(n_classes)
    b = table.shape[1] - 1
    p = np.asarray(p, dtype=float)[..., None]
    k = np.arange(b + 1)
    return (p**k * (1.0 - p) ** (b - k)) @ table.T


def cell_success_probability(p: float, n_classes: int, class_weights=None, codec: str = "onehot") -> float:
    """Average cell success probability under a class distribution (uniform by default)."""
    per_class = onehot_cell_success(p, n_classes) if codec == "onehot" else binary_cell_success(p, n_classes)
    if class_weights is None:
        return float(per_class.mean())
    w = np.asarray(class_weights, dtype=float)
    return float(per_class @ (w / w.sum()))


def synthetic_map(geometry: MapGeometry, seed=0, n_regions: int = 48, decay: float = 0.6) -> SemanticMap:
    """Seeded piecewise-constant road-scene stand-in.

    Cells are assigned to the nearest of ``n_regions`` random sites; site classes
    are drawn with probabilities proportional to ``decay ** c``. Labels are then
    renumbered by descending frequency, the usual convention for segmentation
    palettes (background/road first), so class 0 is the most common.
    """
    rng = make_rng(seed, "map")
    c = geometry.n_classes
    prior = decay ** np.arange(c)
    sites = rng.random((n_regions, 2)) * [geometry.grid_h, geometry.grid_w]
    site_class = rng.choice(c, size=n_regions, p=prior / prior.sum())
    yy, xx = np.mgrid[0 : geometry.grid_h, 0 : geometry.grid_w]
    d2 = (yy[..., None] + 0.5 - sites[:, 0]) ** 2 + (xx[..., None] + 0.5 - sites[:, 1]) ** 2
    labels = site_class[np.argmin(d2, axis=-1)]
    counts = np.bincount(labels.reshape(-1), minlength=c)
    order = np.argsort(-counts, kind="stable")
    relabel = np.empty(c, dtype=np.int64)
    relabel[order] = np.arange(c)
    return SemanticMap(relabel[labels], c)


# -------------------------------------------------------------------------- text


def _printable(code: int) -> bool:
    return 0x20 <= code <= 0x7E


def text_encode(t: TextUnit, budget_units: int) -> np.ndarray:
    """8-bit ASCII (MSB first) of the first ``budget_units`` words, no separators.

    Word boundaries travel as framing, see :func:`word_lengths`.
    """
    words = t.words[:budget_units]
    if budget_units > 0 and not words:
        raise ValueError("text must be non-empty when budget_units > 0")
    data = "".join(words).encode("ascii", errors="replace")
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def word_lengths(t: TextUnit, budget_units: int) -> list[int]:
    return [len(w) for w in t.words[:budget_units]]


def text_decode(bits, lengths=None) -> TextUnit:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise DecodeError("text bitstream length must be a multiple of 8")
    codes = np.packbits(bits) if bits.size else np.empty(0, np.uint8)
    chars = "".join(chr(c) if _printable(c) else PLACEHOLDER for c in codes.tolist())
    if lengths is None:
        return TextUnit(chars)
    if sum(lengths) != len(chars):
        raise DecodeError("word lengths do not match the bitstream")
    words, pos = [], 0
    for n in lengths:
        words.append(chars[pos : pos + n])
        pos += n
    return TextUnit(" ".join(words))


# ---------------------------------------------------------------- bit channel


def ber_from_sinr(sinr, modulation: Modulation = Modulation.QPSK):
    """Gray-coded QPSK bit error rate ``Q(sqrt(sinr))``, clamped to ``[0, 0.5]``."""
    if Modulation(modulation) is not Modulation.QPSK:
        raise ValueError(f"unsupported modulation {modulation!r}")
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("sinr must be non-negative")
    ber = np.clip(0.5 * erfc(np.sqrt(s) / math.sqrt(2.0)), 0.0, 0.5)
    return float(ber) if ber.ndim == 0 else ber


def transmit_bits(bits, ber: float, seed=None, rng=None) -> np.ndarray:
    """Binary symmetric channel: flip each bit independently with probability ``ber``."""
    if not 0.0 <= ber <= 0.5:
        raise ValueError(f"ber must lie in [0, 0.5], got {ber!r}")
    bits = np.asarray(bits, dtype=np.uint8)
    if rng is None:
        rng = make_rng(seed, "transport")
    flips = rng.random(bits.size) < ber
    return bits ^ flips.astype(np.uint8)


# ----------------------------------------------------------- spell correction


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def spell_correct(t: TextUnit, dictionary, max_distance: int = 2) -> TextUnit:
    """Replace out-of-dictionary words by the closest entry (first one on ties)."""
    dictionary = list(dictionary)
    if not dictionary:
        raise ValueError("dictionary must not be empty")
    known = set(dictionary)
    out = []
    for word in t.words:
        if word in known:
            out.append(word)
            continue
        best, best_d = word, max_distance + 1
        for candidate in dictionary:
            if abs(len(candidate) - len(word)) >= best_d:
                continue
            d = levenshtein(word, candidate)
            if d < best_d:
                best, best_d = candidate, d
        out.append(best)
    return TextUnit(" ".join(out))


def load_dictionary(path=None) -> list[str]:
    """One lowercase word per line; the bundled list is used when ``path`` is None."""
    if path is None:
        text = resources.files("semsplit").joinpath("data/dictionary.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    words = [w.strip() for w in text.splitlines() if w.strip()]
    if len(set(words)) != len(words):
        raise ValueError("dictionary contains duplicate words")
    return words

