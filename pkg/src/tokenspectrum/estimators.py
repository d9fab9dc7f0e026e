"""Estimator-style wrappers: a token weighter and an RL trainer with fit/predict/score."""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import ExperimentConfig
from .exceptions import InputError
from .harness import mean_at_k, run_training
from .tasks import ProblemInstance, encode, response_text
from .tinylm import sample
from .weighting import TokenWeighter

__all__ = ["RLVRTrainer", "TokenWeighter"]


class RLVRTrainer(BaseEstimator):
    """Trains the tiny model with the configured selection rule.

    ``fit`` ignores ``X``: problems are generated from the config's seed.
    ``predict`` maps problems (or prompt strings) to greedy responses, and
    ``score`` is mean@k accuracy on held-out or given problems.
    """

    def __init__(self, config=None, out_dir=None):
        self.config = config
        self.out_dir = out_dir

    def fit(self, X=None, y=None):
        cfg = self.config if self.config is not None else ExperimentConfig()
        result = run_training(cfg, self.out_dir)
        self.config_ = cfg
        self.params_ = result.params
        self.metrics_ = result.metrics
        return self

    def predict(self, X) -> list[str]:
        check_is_fitted(self, "params_")
        sampling = self.config_.rollout.sampling(validation=True)
        greedy = dataclasses.replace(sampling, greedy=True)
        rng = np.random.default_rng(0)
        out = []
        for item in X:
            prompt = item.prompt if isinstance(item, ProblemInstance) else item
            if not isinstance(prompt, str):
                raise InputError("predict expects ProblemInstance objects or prompt strings")
            out.append(response_text(sample(self.params_, encode(prompt), greedy, rng).response))
        return out

    def score(self, X=None, y=None) -> float:
        check_is_fitted(self, "params_")
        return mean_at_k(self.params_, self.config_, problems=None if X is None else list(X))
