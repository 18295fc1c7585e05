"""Estimated clinician policy: multinomial logistic regression with a floor."""

from __future__ import annotations

import numpy as np
from sklearn.linear_model import LogisticRegression

from ..errors import ContractError


class BehaviorModel:
    """Multinomial classifier over the 25 joint actions.

    Probabilities are softened so every action keeps mass of at least p_min:
    p = (1 - n_actions * p_min) * p_raw + p_min. This keeps importance ratios
    bounded and sums exactly to one.
    """

    def __init__(self, n_actions: int = 25, p_min: float = 0.01,
                 l2_c: float = 1.0, seed: int = 0):
        if not 0.0 <= p_min < 1.0 / n_actions:
            raise ContractError("p_min must be in [0, 1/n_actions)")
        self.n_actions = n_actions
        self.p_min = p_min
        self.l2_c = l2_c
        self.seed = seed
        self._model = None
        self._classes: np.ndarray | None = None
        self._single_class: int | None = None

    def fit(self, features: np.ndarray, actions: np.ndarray) -> "BehaviorModel":
        actions = np.asarray(actions, dtype=int)
        classes = np.unique(actions)
        if len(classes) == 1:
            self._single_class = int(classes[0])
            return self
        self._model = LogisticRegression(
            solver="lbfgs", max_iter=2000, C=self.l2_c, random_state=self.seed)
        self._model.fit(features, actions)
        self._classes = self._model.classes_.astype(int)
        return self

    def probs(self, features: np.ndarray) -> np.ndarray:
        """[*, n_actions] softened probabilities; rows sum to 1, min >= p_min."""
        single = features.ndim == 1
        X = np.atleast_2d(features)
        raw = np.zeros((X.shape[0], self.n_actions))
        if self._single_class is not None:
            raw[:, self._single_class] = 1.0
        elif self._model is not None:
            raw[:, self._classes] = self._model.predict_proba(X)
        else:
            raise ContractError("behavior model not fitted")
        p = (1.0 - self.n_actions * self.p_min) * raw + self.p_min
        return p[0] if single else p
