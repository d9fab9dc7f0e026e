"""Within-response token masks: entropy partitions, controls and quadrants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._validation import check_fraction, check_vector
from .exceptions import DegenerateError, InputError, PartitionError

QUADRANTS = ("LP-LA", "HP-LA", "LP-HA", "HP-HA")
_POS_TOL = 1e-12


@dataclass
class TokenMask:
    """Binary per-token inclusion flags for one response."""

    mask: np.ndarray
    fraction: float
    rule: str
    resampled: int = 0

    @property
    def k(self) -> int:
        return int(self.mask.sum())

    @property
    def positions(self) -> list[int]:
        """Selected positions, 1-indexed."""
        return [int(i) + 1 for i in np.flatnonzero(self.mask)]

    def weights(self) -> np.ndarray:
        return self.mask.astype(np.float64)


def budget(T: int, fraction: float) -> int:
    """``max(1, round(fraction * T))`` with halves rounded up."""
    return max(1, int(math.floor(fraction * T + 0.5)))


def _ranked(scores: np.ndarray, fraction: float) -> tuple[np.ndarray, int]:
    T = scores.size
    k = budget(T, fraction)
    if 2 * k > T:
        raise PartitionError(f"response of length {T} too short for two {k}-token groups")
    # stable ascending sort: ties resolve to the earlier position ranking lower
    return np.argsort(scores, kind="stable"), k


def _mask_from(idx: np.ndarray, T: int, fraction: float, rule: str) -> TokenMask:
    m = np.zeros(T, dtype=bool)
    m[idx] = True
    return TokenMask(m, fraction, rule)


def score_mask(scores, end: Literal["low", "high"], fraction: float = 0.2,
               rule: str | None = None) -> TokenMask:
    """Bottom or top ``k`` tokens of a per-token score, ``k = budget(T, fraction)``."""
    s = check_vector(scores, name="scores")
    check_fraction(fraction, closed_right=True)
    order, k = _ranked(s, fraction)
    if end == "low":
        idx = order[:k]
    elif end == "high":
        idx = order[-k:]
    else:
        raise InputError(f"end must be 'low' or 'high', got {end!r}")
    return _mask_from(idx, s.size, fraction, rule or f"score-{end}")


def entropy_partition(entropies, fraction: float = 0.2) -> tuple[TokenMask, TokenMask]:
    """Anchor (lowest-entropy) and explorer (highest-entropy) masks of one response."""
    anchor = score_mask(entropies, "low", fraction, rule="anchor")
    explorer = score_mask(entropies, "high", fraction, rule="explorer")
    return anchor, explorer


def random_mask(T: int, p: float, rng: np.random.Generator) -> TokenMask:
    """Independent Bernoulli(p) flags; an empty draw is redrawn once."""
    if T < 1:
        raise InputError("T must be positive")
    check_fraction(p, name="p")
    m = rng.random(T) < p
    resampled = 0
    if not m.any():
        m = rng.random(T) < p
        resampled = 1
    return TokenMask(m, p, "random", resampled)


def position_mask(T: int, region: Literal["front", "back"], fraction: float = 0.2) -> TokenMask:
    """Front: ``t/T <= fraction``; back: ``t/T > 1 - fraction`` (``t`` 1-indexed)."""
    if T < 1:
        raise InputError("T must be positive")
    check_fraction(fraction, closed_right=True)
    rel = np.arange(1, T + 1) / T
    if region == "front":
        m = rel <= fraction + _POS_TOL
    elif region == "back":
        m = rel > 1.0 - fraction + _POS_TOL
    else:
        raise InputError(f"region must be 'front' or 'back', got {region!r}")
    return TokenMask(m, fraction, region)


def quadrant_assign(h_pred, h_attn) -> np.ndarray:
    """Label each token by within-response median splits; values at the median count as low."""
    hp = check_vector(h_pred, name="h_pred", min_len=2)
    ha = check_vector(h_attn, name="h_attn", min_len=2)
    if hp.shape != ha.shape:
        raise InputError("h_pred and h_attn must have equal length")
    high_p = hp > np.median(hp)
    high_a = ha > np.median(ha)
    labels = np.empty(hp.size, dtype=object)
    labels[:] = "LP-LA"
    labels[high_p & ~high_a] = "HP-LA"
    labels[~high_p & high_a] = "LP-HA"
    labels[high_p & high_a] = "HP-HA"
    return labels


def quadrant_counts(labels) -> dict[str, int]:
    labels = list(labels)
    return {q: labels.count(q) for q in QUADRANTS}


def pearson(xs, ys) -> float:
    x = check_vector(xs, name="xs", min_len=2)
    y = check_vector(ys, name="ys", min_len=2)
    if x.shape != y.shape:
        raise InputError("xs and ys must have equal length")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = xc @ xc, yc @ yc
    if sxx == 0 or syy == 0:
        raise DegenerateError("correlation undefined for a constant series")
    return float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))
