"""Cross-validation training harness and evaluation metrics.

Folds are deterministic given a seed; the default split unit keeps every
sentence of a dialogue in one fold. Training minimizes mean cross-entropy
with an exponentially decayed learning rate and dropout on the final layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import Corpus, Dialogue, labeled_persuader_sentences
from .errors import ConfigError, EmptyAnnotationError, SplitError, TrainingDivergedError
from .features import FeatureBundle, Featurizer, strategy_targets
from .model import (
    N_CLASSES,
    RcnnConfig,
    _StrategyNet,
    build_net,
    collate,
    majority_predict,
    predict_logits,
)

SPLIT_UNITS = ("dialogue", "sentence")
OPTIMIZERS = ("adam", "momentum")


@dataclass
class TrainConfig:
    lr0: float = 0.001
    decay_every: int = 100
    decay_rate: float = 0.95
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    k_folds: int = 5
    split_unit: str = "dialogue"
    optimizer: str = "adam"
    class_weights: bool = False
    deterministic: bool = True

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.decay_rate <= 1:
            raise ConfigError(f"decay_rate must be in (0, 1], got {self.decay_rate}")
        if self.decay_every < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("decay_every, batch_size, and epochs must be >= 1")
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.split_unit not in SPLIT_UNITS:
            raise ConfigError(f"split_unit must be one of {SPLIT_UNITS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")


def lr_at_step(step: int, config: TrainConfig) -> float:
    """Exponentially decayed learning rate: lr0 * rate^(step // every)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    return config.lr0 * config.decay_rate ** (step // config.decay_every)


def kfold_split(
    dialogues: Sequence[Dialogue], k: int, split_unit: str = "dialogue", seed: int = 0
) -> list[np.ndarray]:
    """Partition labeled-sentence indices into k disjoint folds.

    Indices refer to the order of ``labeled_persuader_sentences(dialogues)``.
    With the dialogue unit, all sentences of a dialogue land in one fold.
    """
    if split_unit not in SPLIT_UNITS:
        raise ConfigError(f"split_unit must be one of {SPLIT_UNITS}")
    pairs = labeled_persuader_sentences(list(dialogues))
    rng = np.random.default_rng(seed)
    if split_unit == "sentence":
        if len(pairs) < k:
            raise SplitError(f"{len(pairs)} sentences cannot fill {k} folds")
        order = rng.permutation(len(pairs))
        return [np.sort(chunk) for chunk in np.array_split(order, k)]
    by_dialogue: dict[str, list[int]] = {}
    for i, (_, dialogue) in enumerate(pairs):
        by_dialogue.setdefault(dialogue.id, []).append(i)
    ids = list(by_dialogue)
    if len(ids) < k:
        raise SplitError(f"{len(ids)} dialogues cannot fill {k} folds")
    order = rng.permutation(len(ids))
    folds = []
    for chunk in np.array_split(order, k):
        indices = [i for j in chunk for i in by_dialogue[ids[j]]]
        folds.append(np.sort(np.asarray(indices, dtype=np.int64)))
    return folds


def idf_weights(bundles: Sequence[FeatureBundle], vocab_size: int) -> np.ndarray:
    """Smoothed inverse document frequency over nonempty training contexts."""
    df = np.zeros(vocab_size)
    n_docs = 0
    for b in bundles:
        if len(b.context_ids) == 0:
            continue
        n_docs += 1
        df[np.unique(np.asarray(b.context_ids))] += 1
    return np.log((1.0 + n_docs) / (1.0 + df)) + 1.0


def train_fold(
    bundles: Sequence[FeatureBundle],
    y: np.ndarray,
    arch: str,
    config: RcnnConfig,
    train: TrainConfig,
    embedding_matrix: np.ndarray,
) -> tuple[_StrategyNet, list[float]]:
    """Train one net on one fold; returns the net and per-epoch mean loss."""
    train.validate()
    if len(bundles) == 0:
        raise ValueError("empty training set")
    y = np.asarray(y)
    if len(y) != len(bundles):
        raise ValueError(f"{len(bundles)} bundles but {len(y)} labels")

    torch.manual_seed(train.seed)
    net = build_net(arch, config, embedding_matrix)
    if config.context_mode == "tfidf":
        net.set_idf(idf_weights(bundles, net.vocab_size))
    dtype = net.embed.weight.dtype

    trainable = [p for p in net.parameters() if p.requires_grad]
    if train.optimizer == "adam":
        optimizer = torch.optim.Adam(trainable, lr=train.lr0)
    else:
        optimizer = torch.optim.SGD(trainable, lr=train.lr0, momentum=0.9)

    weight = None
    if train.class_weights:
        counts = np.bincount(y, minlength=config.n_classes).astype(float)
        present = counts > 0
        inverse = np.zeros_like(counts)
        inverse[present] = counts.sum() / (present.sum() * counts[present])
        weight = torch.as_tensor(inverse, dtype=dtype)

    targets = torch.as_tensor(y, dtype=torch.int64)
    shuffler = torch.Generator().manual_seed(train.seed)
    n = len(bundles)
    step = 0
    history: list[float] = []
    net.train()
    for _ in range(train.epochs):
        order = torch.randperm(n, generator=shuffler)
        epoch_loss = 0.0
        for start in range(0, n, train.batch_size):
            idx = order[start : start + train.batch_size]
            batch = collate([bundles[i] for i in idx.tolist()], config, dtype)
            lr = lr_at_step(step, train)
            for group in optimizer.param_groups:
                group["lr"] = lr
            loss = F.cross_entropy(net(batch), targets[idx], weight=weight)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step, lr, idx.tolist())
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(idx)
            step += 1
        history.append(epoch_loss / n)
    net.eval()
    return net, history


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]  # rows = true class, columns = predicted
    fold: Optional[int] = None
    n_examples: int = 0

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "n_examples": self.n_examples,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": self.confusion,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            accuracy=d["accuracy"],
            macro_f1=d["macro_f1"],
            precision=d["precision"],
            recall=d["recall"],
            f1=d["f1"],
            confusion=d["confusion"],
            fold=d.get("fold"),
            n_examples=d.get("n_examples", 0),
        )


def confusion_counts(y_true: np.ndarray, y_pred: np.ndarray, k: int = N_CLASSES) -> np.ndarray:
    """k x k confusion matrix with true classes on rows."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label arrays differ in length")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def accuracy(confusion: np.ndarray) -> float:
    confusion = np.asarray(confusion)
    total = confusion.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(confusion) / total)


def per_class_prf(confusion: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class precision, recall, F1; all 0 where undefined."""
    confusion = np.asarray(confusion, dtype=float)
    diag = np.diag(confusion)
    predicted = confusion.sum(axis=0)
    support = confusion.sum(axis=1)
    precision = np.divide(diag, predicted, out=np.zeros_like(diag), where=predicted > 0)
    recall = np.divide(diag, support, out=np.zeros_like(diag), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)
    return precision, recall, f1


def macro_f1(confusion: np.ndarray) -> float:
    """Unweighted mean of per-class F1 over every class axis entry."""
    return float(per_class_prf(confusion)[2].mean())


def report_from_predictions(
    y_true: np.ndarray, y_pred: np.ndarray, fold: Optional[int] = None, k: int = N_CLASSES
) -> EvalReport:
    cm = confusion_counts(y_true, y_pred, k)
    precision, recall, f1 = per_class_prf(cm)
    return EvalReport(
        accuracy=accuracy(cm),
        macro_f1=macro_f1(cm),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm.tolist(),
        fold=fold,
        n_examples=int(cm.sum()),
    )


def evaluate(
    net: _StrategyNet,
    bundles: Sequence[FeatureBundle],
    y: np.ndarray,
    fold: Optional[int] = None,
) -> EvalReport:
    if len(bundles) == 0:
        raise ValueError("empty test set")
    y_pred = np.argmax(predict_logits(net, bundles), axis=1)
    return report_from_predictions(np.asarray(y), y_pred, fold=fold)


def ablation_rows() -> dict[str, tuple[str, RcnnConfig]]:
    """The model-comparison grid: baselines, context variants, single features."""
    return {
        "majority": ("majority", RcnnConfig()),
        "blstm_all_features": ("blstm", RcnnConfig.all_features()),
        "cnn_all_features": ("cnn", RcnnConfig.all_features()),
        "sentence_only": ("rcnn", RcnnConfig()),
        "context_cnn": ("rcnn", RcnnConfig(context_mode="cnn")),
        "context_mean": ("rcnn", RcnnConfig(context_mode="mean")),
        "context_rnn": ("rcnn", RcnnConfig(context_mode="rnn")),
        "context_tfidf": ("rcnn", RcnnConfig(context_mode="tfidf")),
        "turn_position": ("rcnn", RcnnConfig(use_turn=True)),
        "sentiment": ("rcnn", RcnnConfig(use_sentiment=True)),
        "character": ("rcnn", RcnnConfig(use_char=True)),
        "all_features": ("rcnn", RcnnConfig.all_features()),
    }


@dataclass
class CvRow:
    name: str
    accuracy: float  # fold average
    macro_f1: float
    folds: list[EvalReport] = field(default_factory=list)


def cross_validate(
    corpus: Corpus,
    rows: dict[str, tuple[str, RcnnConfig]],
    featurizer: Featurizer,
    train: TrainConfig,
) -> dict[str, CvRow]:
    """k-fold CV for every requested configuration row, fold-averaged."""
    train.validate()
    annset = corpus.annotated()
    if not annset:
        raise EmptyAnnotationError("corpus has no annotated dialogues")
    featurizer.fit(corpus.dialogues)
    bundles = featurizer.transform(annset)
    y = strategy_targets(annset)
    folds = kfold_split(annset, train.k_folds, train.split_unit, train.seed)
    _check_leakage(folds, len(bundles))

    results: dict[str, CvRow] = {}
    for name, (arch, config) in rows.items():
        reports = []
        for fold_id, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(bundles)), test_idx)
            y_train, y_test = y[train_idx], y[test_idx]
            if arch == "majority":
                y_pred = majority_predict(y_train).predict(test_idx)
                reports.append(report_from_predictions(y_test, y_pred, fold=fold_id))
                continue
            fold_train = replace(train, seed=train.seed + fold_id)
            net, _ = train_fold(
                [bundles[i] for i in train_idx],
                y_train,
                arch,
                config,
                fold_train,
                featurizer.embedding_matrix_,
            )
            reports.append(evaluate(net, [bundles[i] for i in test_idx], y_test, fold=fold_id))
        results[name] = CvRow(
            name=name,
            accuracy=float(np.mean([r.accuracy for r in reports])),
            macro_f1=float(np.mean([r.macro_f1 for r in reports])),
            folds=reports,
        )
    return results


def _check_leakage(folds: list[np.ndarray], n: int) -> None:
    seen: set[int] = set()
    for fold in folds:
        overlap = seen & set(fold.tolist())
        if overlap:
            raise SplitError(f"folds overlap on {sorted(overlap)[:5]}")
        seen |= set(fold.tolist())
    if seen != set(range(n)):
        raise SplitError("folds do not cover every labeled sentence")


def ablation_table(rows: dict[str, CvRow]) -> str:
    """Aligned-text model-comparison table (fold-averaged scores)."""
    width = max(len(name) for name in rows)
    lines = [f"{'model':<{width}}  accuracy  macro_f1"]
    for name, row in rows.items():
        lines.append(f"{name:<{width}}  {row.accuracy:8.4f}  {row.macro_f1:8.4f}")
    return "\n".join(lines)
