from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..classifier import FrozenModelError
from ..data import InvalidInputError
from ..validation import check_images
from .config import GanTrainConfig
from .train import generate_pair, pair_from_config, pretrain_cyclegan, train_cyclegan


class PatternEnhancer(TransformerMixin, BaseEstimator):
    """Fit the maximizer/minimizer generator pair against a frozen classifier.

    ``classifier`` is a frozen :class:`~naturex.classifier.ScoreNet` (or a
    fitted ``NaturalnessClassifier``). ``config`` is a :class:`GanTrainConfig`
    or ``None`` for defaults. ``transform`` returns an ``N x 2 x C x H x W``
    array holding ``(w_plus(x), w_minus(x))`` per image.
    """

    def __init__(self, classifier=None, config=None, skip_pretrain=False, random_state=0):
        self.classifier = classifier
        self.config = config
        self.skip_pretrain = skip_pretrain
        self.random_state = random_state

    def _oracle(self):
        clf = getattr(self.classifier, "model_", self.classifier)
        if clf is None:
            raise InvalidInputError("PatternEnhancer needs a classifier")
        if not getattr(clf, "frozen", False):
            raise FrozenModelError("PatternEnhancer needs a frozen classifier")
        return clf

    def fit(self, X, y=None, X_val=None):
        clf = self._oracle()
        X = check_images(X)
        config = self.config if self.config is not None else GanTrainConfig()
        if isinstance(config, dict):
            config = GanTrainConfig.from_dict(config)
        pair = pair_from_config(config, X.shape[1], seed=self.random_state)
        self.pretrain_trace_ = None
        if not self.skip_pretrain:
            pair, self.pretrain_trace_ = pretrain_cyclegan(pair, X, config, val_images=X_val)
        pair, self.main_trace_ = train_cyclegan(pair, clf, X, config, pretrained=not self.skip_pretrain)
        self.pair_ = pair
        self.config_ = config
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    @classmethod
    def from_pair(cls, pair, classifier=None, config=None) -> "PatternEnhancer":
        est = cls(classifier=classifier, config=config)
        est.pair_ = pair
        est.config_ = config
        return est

    def generate_pair(self, X):
        check_is_fitted(self, "pair_")
        return generate_pair(self.pair_, X)

    def transform(self, X) -> np.ndarray:
        x_max, x_min = self.generate_pair(check_images(X))
        return np.stack([x_max, x_min], axis=1)
