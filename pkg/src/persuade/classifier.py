"""Scikit-learn-style estimator facade over the strategy networks."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .corpus import Dialogue, Sentence, StrategyLabel
from .errors import ConfigError
from .features import CLASS_ORDER, FeatureBundle, Featurizer, Vocabulary
from .model import (
    N_CLASSES,
    RcnnConfig,
    load_checkpoint,
    predict_logits,
    predict_proba,
    save_checkpoint,
)
from .train_eval import TrainConfig, train_fold


class StrategyClassifier(BaseEstimator, ClassifierMixin):
    """Trainable sentence-strategy classifier with fit/predict semantics.

    X is a sequence of FeatureBundle; y holds integer class indices in the
    canonical class order. The frozen word-embedding matrix aligned with the
    bundles' vocabulary is passed to fit().
    """

    def __init__(
        self,
        arch: str = "rcnn",
        config: Optional[RcnnConfig] = None,
        train: Optional[TrainConfig] = None,
    ):
        self.arch = arch
        self.config = config
        self.train = train

    def fit(
        self,
        X: Sequence[FeatureBundle],
        y: np.ndarray,
        embeddings: Optional[np.ndarray] = None,
    ) -> "StrategyClassifier":
        if embeddings is None:
            raise ValueError("fit requires the vocabulary-aligned embedding matrix")
        config = self.config or RcnnConfig.all_features()
        train = self.train or TrainConfig()
        self.net_, self.loss_history_ = train_fold(X, y, self.arch, config, train, embeddings)
        self.classes_ = np.arange(N_CLASSES)
        return self

    def predict_proba(self, X: Sequence[FeatureBundle]) -> np.ndarray:
        self._check_fitted()
        return predict_proba(self.net_, X)

    def predict(self, X: Sequence[FeatureBundle]) -> np.ndarray:
        self._check_fitted()
        return np.argmax(predict_logits(self.net_, X), axis=1)

    def _check_fitted(self) -> None:
        if not hasattr(self, "net_"):
            raise ConfigError("classifier is not fitted")

    def save(self, path: str | Path, vocab_tokens: Sequence[str], t_max: int) -> None:
        self._check_fitted()
        save_checkpoint(
            path,
            arch=self.arch,
            net=self.net_,
            vocab_tokens=vocab_tokens,
            class_values=[label.value for label in CLASS_ORDER],
            t_max=t_max,
        )

    @classmethod
    def load(cls, path: str | Path) -> tuple["StrategyClassifier", "Vocabulary", dict]:
        net, vocab, meta = load_checkpoint(path)
        clf = cls(arch=meta["arch"], config=net.config)
        clf.net_ = net
        clf.loss_history_ = []
        clf.classes_ = np.arange(N_CLASSES)
        return clf, vocab, meta


def predict_sentence(
    clf: StrategyClassifier,
    featurizer: Featurizer,
    sentence: Sentence,
    dialogue: Dialogue,
) -> tuple[StrategyLabel, np.ndarray]:
    """Classify one persuader sentence in its dialogue context.

    Returns the argmax label (ties break toward the lower class index) and
    the full probability vector.
    """
    from .features import featurize, HashedTrigramEncoder, SentimentLexicon

    bundle = featurize(
        sentence,
        dialogue,
        featurizer.vocabulary_,
        featurizer.lexicon or SentimentLexicon(),
        featurizer.char_encoder or HashedTrigramEncoder(),
        featurizer.t_max,
    )
    proba = clf.predict_proba([bundle])[0]
    return CLASS_ORDER[int(np.argmax(proba))], proba
