"""Token weights for every selection rule, as a scikit-learn transformer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_vector
from .config import HARD_RULES, SELECTION_RULES
from .exceptions import ConfigError, InputError
from .reweight import ReweightConfig, endpoint_weights, soft_weights_per_response
from .selection import PartitionError, entropy_partition, position_mask, random_mask, score_mask


@dataclass
class WeightResult:
    weights: list[np.ndarray]
    excluded: int = 0
    resampled: int = 0


class TokenWeighter(TransformerMixin, BaseEstimator):
    """Per-token weights from a selection rule.

    ``X`` is a list of per-response attention-entropy vectors. Rules that rank by
    another score (``pred-*``, ``loss-*``) take it through ``scores``. Hard rules
    give 0/1 masks; responses too short for the percentile budget get all-zero
    weights and are counted in ``excluded``. ``soft`` gives batch-joint
    continuous weights for the given training ``step``.
    """

    def __init__(self, rule="full", fraction=0.2, reweight=None, random_state=None):
        self.rule = rule
        self.fraction = fraction
        self.reweight = reweight
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.rule not in SELECTION_RULES:
            raise ConfigError(f"unknown selection rule {self.rule!r}")
        self.reweight_ = self.reweight if self.reweight is not None else ReweightConfig()
        self.rng_ = np.random.default_rng(self.random_state)
        self.is_hard_ = self.rule in HARD_RULES
        return self

    def endpoint_state(self, step: int) -> tuple[float, float]:
        check_is_fitted(self, "reweight_")
        if self.rule != "soft":
            return float("nan"), float("nan")
        return endpoint_weights(step, self.reweight_)

    def weigh(self, X, *, step: int = 0, scores=None, rng=None) -> WeightResult:
        check_is_fitted(self, "reweight_")
        entropies = [check_vector(h, name="entropies") for h in X]
        if not entropies:
            raise InputError("no responses to weigh")
        rng = self.rng_ if rng is None else rng
        rule = self.rule
        if rule == "full":
            return WeightResult([np.ones(h.size) for h in entropies])
        if rule == "soft":
            return WeightResult(soft_weights_per_response(entropies, self.reweight_, step))
        if rule == "random":
            masks = [random_mask(h.size, self.fraction, rng) for h in entropies]
            return WeightResult([m.weights() for m in masks], resampled=sum(m.resampled for m in masks))
        if rule in ("front", "back"):
            return WeightResult([position_mask(h.size, rule, self.fraction).weights() for h in entropies])

        if rule in ("anchor", "explorer"):
            ranked, end = entropies, "low" if rule == "anchor" else "high"
        else:
            if scores is None:
                raise InputError(f"rule {rule!r} needs per-token scores")
            ranked = [check_vector(s, name="scores") for s in scores]
            if [s.size for s in ranked] != [h.size for h in entropies]:
                raise InputError("scores must align with entropies")
            end = rule.split("-")[1]
        weights, excluded = [], 0
        for s in ranked:
            try:
                weights.append(score_mask(s, end, self.fraction, rule=rule).weights())
            except PartitionError:
                weights.append(np.zeros(s.size))
                excluded += 1
        return WeightResult(weights, excluded=excluded)

    def transform(self, X, step: int = 0, scores=None):
        return self.weigh(X, step=step, scores=scores).weights


def anchor_explorer_weights(entropies, fraction=0.2):
    """Anchor and explorer 0/1 weights for every response (zeros where too short)."""
    anchors, explorers = [], []
    for h in entropies:
        try:
            a, e = entropy_partition(h, fraction)
            anchors.append(a.weights())
            explorers.append(e.weights())
        except PartitionError:
            anchors.append(np.zeros(len(h)))
            explorers.append(np.zeros(len(h)))
    return anchors, explorers
