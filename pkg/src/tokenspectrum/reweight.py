"""Dynamic entropy-aware soft token weights.

Weights come from a temperature softmax over every valid response token in the
batch, min-max rescaled, then mapped linearly between two endpoint weights
that follow a warmup schedule.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_vector
from .exceptions import ConfigError, InputError

SCHEDULES = ("low2high", "high2low", "static-low", "static-high")


@dataclass(frozen=True)
class ReweightConfig:
    tau: float = 0.8
    eps: float = 1e-8
    warmup_steps: int = 80
    schedule: str = "low2high"
    w_low_start: float | None = None
    w_low_end: float | None = None
    w_high_start: float | None = None
    w_high_end: float | None = None

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULES}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be at least 1")
        defaults = _SCHEDULE_ENDPOINTS[self.schedule]
        for name, value in zip(("w_low_start", "w_low_end", "w_high_start", "w_high_end"), defaults):
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


# (w_low_start, w_low_end, w_high_start, w_high_end)
_SCHEDULE_ENDPOINTS = {
    "low2high": (1.0, 0.0, 0.0, 1.0),
    "high2low": (0.0, 1.0, 1.0, 0.0),
    "static-low": (1.0, 1.0, 0.0, 0.0),
    "static-high": (0.0, 0.0, 1.0, 1.0),
}


def warmup_progress(step: int, warmup_steps: int) -> float:
    if step < 0:
        raise InputError("step must be nonnegative")
    return min(step / warmup_steps, 1.0)


def endpoint_weights(step: int, config: ReweightConfig) -> tuple[float, float]:
    """``(w_low(s), w_high(s))``: linear in clipped warmup progress."""
    r = warmup_progress(step, config.warmup_steps)
    w_low = config.w_low_start + r * (config.w_low_end - config.w_low_start)
    w_high = config.w_high_start + r * (config.w_high_end - config.w_high_start)
    return w_low, w_high


def softmax_scores(entropies, tau: float, eps: float) -> np.ndarray:
    h = check_vector(entropies, name="entropies") / tau
    e = np.exp(h - h.max())
    return e / (e.sum() + eps)


def minmax_rescale(alpha: np.ndarray, eps: float) -> np.ndarray:
    return (alpha - alpha.min()) / (alpha.max() - alpha.min() + eps)


def soft_weights(entropies, config: ReweightConfig, step: int) -> np.ndarray:
    """Token weights for one batch, computed jointly over all valid tokens."""
    h = np.asarray(entropies, dtype=np.float64).reshape(-1)
    if h.size == 0:
        raise InputError("soft reweighting needs at least one valid token")
    alpha_bar = minmax_rescale(softmax_scores(h, config.tau, config.eps), config.eps)
    w_low, w_high = endpoint_weights(step, config)
    return (1.0 - alpha_bar) * w_low + alpha_bar * w_high


def soft_weights_per_response(entropies: list[np.ndarray], config: ReweightConfig,
                              step: int) -> list[np.ndarray]:
    """Batch-joint weights split back into per-response vectors."""
    flat = np.concatenate([np.asarray(e, dtype=np.float64) for e in entropies])
    w = soft_weights(flat, config, step)
    return np.split(w, np.cumsum([len(e) for e in entropies])[:-1])
