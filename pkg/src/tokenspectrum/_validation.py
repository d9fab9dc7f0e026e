"""Input validation helpers in the style of ``sklearn.utils.validation``."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import InputError

PROB_ATOL = 1e-6


def check_vector(x, *, name="x", min_len=1, finite=True) -> np.ndarray:
    try:
        arr = check_array(
            np.asarray(x, dtype=np.float64).reshape(-1),
            ensure_2d=False,
            dtype=np.float64,
            ensure_all_finite=finite,
            ensure_min_samples=0,
        )
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc
    if arr.shape[0] < min_len:
        raise InputError(f"{name} must have at least {min_len} entries, got {arr.shape[0]}")
    return arr


def check_probability_row(row, *, name="row", atol=PROB_ATOL) -> np.ndarray:
    """Return ``row`` as a float64 vector after checking it is a distribution."""
    arr = check_vector(row, name=name)
    if np.any(arr < 0):
        raise InputError(f"{name} has negative entries")
    total = arr.sum()
    if abs(total - 1.0) > atol:
        raise InputError(f"{name} sums to {total!r}, expected 1")
    return arr


def check_tokens(tokens, vocab_size: int, max_len: int | None = None) -> np.ndarray:
    arr = np.asarray(tokens)
    if arr.ndim != 1:
        raise InputError(f"token sequence must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InputError("token sequence is empty")
    if not np.issubdtype(arr.dtype, np.integer):
        raise InputError(f"token ids must be integers, got {arr.dtype}")
    if max_len is not None and arr.size > max_len:
        raise InputError(f"sequence length {arr.size} exceeds max_seq_len {max_len}")
    if arr.min() < 0 or arr.max() >= vocab_size:
        raise InputError(f"token id out of range [0, {vocab_size})")
    return arr.astype(np.int64)


def check_fraction(p, *, name="fraction", closed_right=False) -> float:
    p = float(p)
    ok = 0.0 < p <= 1.0 if closed_right else 0.0 < p < 1.0
    if not ok:
        raise InputError(f"{name} must lie in (0, 1{']' if closed_right else ')'}, got {p}")
    return p
