"""Verifiable reward, group-relative advantages and the clipped token loss."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Literal, Sequence

import numpy as np

from .exceptions import ConfigError, DegenerateError, InputError

logger = logging.getLogger(__name__)

BOXED_OPEN = "\\boxed{"

Normalization = Literal["selected-mean", "all-token-mean", "all-token-weighted"]
NORMALIZATIONS = ("selected-mean", "all-token-mean", "all-token-weighted")


@dataclass(frozen=True)
class RewardSpec:
    """Reward values and the soft overlong penalty.

    Buffer/max length default to a toy-scale 4/16 split, the same 1:4 ratio as
    the 2048/8192 setting used for large models.
    """

    reward_correct: float = 1.0
    reward_wrong: float = -1.0
    reward_missing: float = -2.0
    overlong_buffer: int = 4
    overlong_factor: float = 1.0
    max_response_len: int = 16

    def __post_init__(self):
        if not self.reward_missing < self.reward_wrong < self.reward_correct:
            raise ConfigError("need reward_missing < reward_wrong < reward_correct")
        if self.overlong_buffer < 0 or self.overlong_factor < 0:
            raise ConfigError("overlong buffer and factor must be nonnegative")
        if self.overlong_buffer > self.max_response_len:
            raise ConfigError("overlong_buffer cannot exceed max_response_len")


@dataclass(frozen=True)
class LossSpec:
    normalization: Normalization = "selected-mean"
    clip_low: float = 0.2
    clip_high: float = 0.28

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.clip_low <= 0 or self.clip_high <= 0:
            raise ConfigError("clip ratios must be positive")
        if self.clip_low >= 1:
            raise ConfigError("clip_low must be below 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RolloutGroup:
    """One prompt with its ``n`` sampled responses."""

    prompt: np.ndarray
    responses: list[np.ndarray]
    old_logp: list[np.ndarray]
    rewards: np.ndarray
    advantages: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.responses) < 2:
            raise InputError("a rollout group needs at least 2 responses")
        if len(self.old_logp) != len(self.responses) or len(self.rewards) != len(self.responses):
            raise InputError("responses, old_logp and rewards must align")
        for y, lp in zip(self.responses, self.old_logp):
            if len(y) != len(lp):
                raise InputError("old_logp length must equal response length")

    @property
    def lengths(self) -> list[int]:
        return [len(y) for y in self.responses]


def extract_boxed(text: str) -> str | None:
    """Content of the last balanced ``\\boxed{...}`` group, whitespace-trimmed."""
    found = None
    start = 0
    while True:
        pos = text.find(BOXED_OPEN, start)
        if pos < 0:
            return found
        depth, i = 1, pos + len(BOXED_OPEN)
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth:
            logger.debug("unbalanced boxed group at offset %d treated as missing", pos)
            start = pos + len(BOXED_OPEN)
            continue
        found = text[pos + len(BOXED_OPEN): i - 1].strip()
        start = i


def overlong_penalty(response_len: int, spec: RewardSpec) -> float:
    """Linear ramp in ``[0, overlong_factor]`` over the final ``overlong_buffer`` tokens."""
    threshold = spec.max_response_len - spec.overlong_buffer
    if response_len <= threshold or spec.overlong_buffer == 0:
        return 0.0
    overflow = response_len - threshold
    return spec.overlong_factor * min(1.0, overflow / spec.overlong_buffer)


def verify_reward(response_text: str, reference: str, response_len: int, spec: RewardSpec) -> float:
    if not reference:
        raise InputError("reference answer must be nonempty")
    answer = extract_boxed(response_text)
    if answer is None:
        base = spec.reward_missing
    elif answer == reference.strip():
        base = spec.reward_correct
    else:
        base = spec.reward_wrong
    return base - overlong_penalty(response_len, spec)


def group_advantages(rewards: Sequence[float], eps_std: float = 1e-6) -> np.ndarray:
    """GRPO advantages: rewards centered and scaled by the group's population std."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise InputError("group advantages need at least 2 rewards")
    return (r - r.mean()) / (r.std() + eps_std)


def per_token_clip_loss(ratio, advantage, spec: LossSpec, return_grad: bool = False):
    """``-min(r*A, clip(r, 1-low, 1+high)*A)``, elementwise.

    With ``return_grad`` also returns the derivative with respect to ``r``.
    """
    r = np.asarray(ratio, dtype=np.float64)
    A = np.asarray(advantage, dtype=np.float64)
    if np.any(~(r > 0)):
        raise InputError("importance ratios must be positive")
    clipped = np.clip(r, 1.0 - spec.clip_low, 1.0 + spec.clip_high)
    unclipped_obj = r * A
    clipped_obj = clipped * A
    use_unclipped = unclipped_obj <= clipped_obj
    loss = -np.where(use_unclipped, unclipped_obj, clipped_obj)
    if not return_grad:
        return loss if loss.ndim else float(loss)
    # clipped branch is flat in r wherever it differs from the unclipped one
    grad = np.where(use_unclipped, -A, 0.0)
    return loss, grad


def aggregate_coefficients(weights, normalization: Normalization) -> np.ndarray:
    """Per-token coefficients ``c`` such that the aggregated loss equals ``c @ losses``."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise InputError("token weights must be nonnegative")
    if normalization == "selected-mean":
        total = w.sum()
        if not total > 0:
            raise DegenerateError("selected-mean normalization with zero total weight")
        return w / total
    if normalization in ("all-token-mean", "all-token-weighted"):
        if w.size == 0:
            raise DegenerateError("no valid tokens")
        return w / w.size
    raise ConfigError(f"unknown normalization {normalization!r}")


def aggregate(losses, weights, normalization: Normalization) -> float:
    ell = np.asarray(losses, dtype=np.float64)
    if ell.shape != np.shape(weights):
        raise InputError("losses and weights must have equal length")
    return float(aggregate_coefficients(weights, normalization) @ ell)
