"""Attention-entropy variants, prediction entropy and decision-entropy alignment.

All entropies are in nats. Probabilities below ``ZERO_PROB`` count as exact
zeros (``0 log 0 = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ._validation import PROB_ATOL, check_probability_row
from .exceptions import AlignmentError, DegenerateError, InputError

ZERO_PROB = 1e-12
DEFAULT_TOPK = 256
DEFAULT_FIXED_K = 256

Variant = Literal["raw", "norm", "topk", "fixed"]
VARIANTS = ("raw", "norm", "topk", "fixed")


def _entropy(p: np.ndarray) -> float:
    nz = p[p > ZERO_PROB]
    return float(-(nz * np.log(nz)).sum()) + 0.0


def _renormalized_entropy(sub: np.ndarray, what: str) -> float:
    mass = sub.sum()
    if not mass > 0:
        raise DegenerateError(f"{what} has zero attention mass")
    return _entropy(sub / mass)


def raw_entropy(row) -> float:
    return _entropy(check_probability_row(row))


def normalized_entropy(row) -> float:
    """Raw entropy divided by ``log N``; zero for a single visible position."""
    p = check_probability_row(row)
    if p.size == 1:
        return 0.0
    return _entropy(p) / math.log(p.size)


def topk_entropy(row, k: int = DEFAULT_TOPK) -> float:
    """Entropy of the renormalized ``k`` largest weights."""
    if k < 1:
        raise InputError("k must be at least 1")
    p = check_probability_row(row)
    if k >= p.size:
        return _entropy(p)
    top = np.sort(p)[::-1][:k]
    return _renormalized_entropy(top, f"top-{k} restriction")


def fixed_position_entropy(row, K: int = DEFAULT_FIXED_K) -> float:
    """Entropy of the renormalized restriction to the first ``K`` visible positions."""
    if K < 1:
        raise InputError("K must be at least 1")
    p = check_probability_row(row)
    if K >= p.size:
        return _entropy(p)
    return _renormalized_entropy(p[:K], f"first-{K} restriction")


def prediction_entropy(next_token_distribution) -> float:
    return _entropy(check_probability_row(next_token_distribution, name="next-token distribution"))


def attention_entropy(row, variant: Variant = "norm", k: int = DEFAULT_TOPK,
                      K: int = DEFAULT_FIXED_K) -> float:
    if variant == "raw":
        return raw_entropy(row)
    if variant == "norm":
        return normalized_entropy(row)
    if variant == "topk":
        return topk_entropy(row, k)
    if variant == "fixed":
        return fixed_position_entropy(row, K)
    raise InputError(f"unknown entropy variant {variant!r}")


def decision_positions(prompt_len: int, response_len: int) -> np.ndarray:
    """Input positions whose outputs predict response tokens ``1..response_len``."""
    if prompt_len < 1 or response_len < 1:
        raise AlignmentError("need prompt_len >= 1 and response_len >= 1")
    return np.arange(prompt_len - 1, prompt_len + response_len - 1)


def decision_entropies(capture, prompt_len: int, response_len: int, variant: Variant = "norm",
                       *, layer: int | None = None, k: int = DEFAULT_TOPK,
                       K: int = DEFAULT_FIXED_K) -> np.ndarray:
    """Entropy of the attention row that generated each response token.

    Response token ``t`` (1-indexed) is scored from the row at position
    ``prompt_len + t - 2``, so the first response token uses the prompt-final row.
    """
    positions = decision_positions(prompt_len, response_len)
    if capture.length < positions[-1] + 1:
        raise AlignmentError(
            f"capture covers {capture.length} positions, need {positions[-1] + 1}"
        )
    return np.array([attention_entropy(capture.row(t, layer), variant, k, K) for t in positions])


def _batch_row_entropy(rows: np.ndarray) -> np.ndarray:
    safe = np.where(rows > ZERO_PROB, rows, 1.0)
    return -(np.where(rows > ZERO_PROB, rows * np.log(safe), 0.0)).sum(axis=-1) + 0.0


def row_entropies(rows, variant: Variant = "raw") -> np.ndarray:
    """Raw or normalized entropy of each row of a 2-D stack of distributions."""
    P = np.asarray(rows, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] == 0:
        raise InputError("rows must be a non-empty 2-D array")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise InputError("rows must be finite and non-negative")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_ATOL):
        raise InputError("every row must sum to 1")
    h = _batch_row_entropy(P)
    if variant == "raw":
        return h
    if variant == "norm":
        return h / math.log(P.shape[1]) if P.shape[1] > 1 else np.zeros(P.shape[0])
    raise InputError(f"row_entropies supports 'raw' and 'norm', got {variant!r}")


@dataclass
class EntropyRecord:
    """Per-response-token entropy variants for one response."""

    h_raw: np.ndarray
    h_norm: np.ndarray
    h_topk: np.ndarray
    h_fix: np.ndarray
    h_pred: np.ndarray
    n_visible: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(h_raw=self.h_raw, h_norm=self.h_norm, h_topk=self.h_topk,
                    h_fix=self.h_fix, h_pred=self.h_pred, n_visible=self.n_visible)


def entropy_record(capture, prompt_len: int, response_len: int, h_pred=None, *,
                   layer: int | None = None, k: int = DEFAULT_TOPK,
                   K: int = DEFAULT_FIXED_K) -> EntropyRecord:
    """All attention-entropy variants for a response in one vectorized pass."""
    positions = decision_positions(prompt_len, response_len)
    if capture.length < positions[-1] + 1:
        raise AlignmentError(
            f"capture covers {capture.length} positions, need {positions[-1] + 1}"
        )
    layer = capture.probe_layer if layer is None else layer
    mat = capture.layers[layer][positions]          # (T, L); causal zeros beyond t
    n_vis = positions + 1
    h_raw = _batch_row_entropy(mat)
    log_n = np.log(n_vis)
    h_norm = np.divide(h_raw, log_n, out=np.zeros_like(h_raw), where=n_vis > 1)

    top = -np.sort(-mat, axis=1)[:, :k]
    h_topk = _batch_row_entropy(top / top.sum(axis=1, keepdims=True))
    fixed = mat[:, :K]
    h_fix = _batch_row_entropy(fixed / fixed.sum(axis=1, keepdims=True))
    if h_pred is None:
        h_pred = np.full(response_len, np.nan)
    return EntropyRecord(h_raw, h_norm, h_topk, h_fix, np.asarray(h_pred, dtype=np.float64), n_vis)
