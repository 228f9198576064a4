"""Per-subject stress classifier: z-score standardization, PCA conditioning,
odd-k nearest-neighbour vote, 10-sample majority grouping and confusion
metrics. Models persist as a single versioned JSON document per subject.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES, FeatureVector

MODEL_FORMAT_VERSION = 1
GROUP_SIZE = 10


class ClassifierError(Exception):
    pass


class InsufficientData(ClassifierError):
    pass


class DegenerateVariance(ClassifierError):
    pass


class InvalidVector(ClassifierError):
    pass


class WrongGroupSize(ClassifierError):
    pass


@dataclass
class StandardizationStats:
    """Training moments; zero-variance features are dropped and recorded."""

    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray  # indices into the raw feature vector

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x)[..., self.kept] - self.mean) / self.std


@dataclass
class PcaModel:
    """Orthonormal principal axes retaining >= the requested variance share."""

    mean: np.ndarray
    components: np.ndarray  # (k, d) orthonormal rows
    explained_variance_ratio: np.ndarray
    k: int

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean) @ self.components.T


@dataclass
class KnnModel:
    """k nearest neighbours by Euclidean distance in the conditioned space.

    k is odd so binary votes cannot tie; equal distances rank by lower
    training index.
    """

    k: int
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.k % 2 == 0:
            raise ValueError("k must be odd")
        if self.k > len(self.points):
            raise ValueError("k exceeds training size")

    def predict(self, q: np.ndarray) -> int:
        d2 = np.sum((self.points - q) ** 2, axis=1)
        nearest = np.argsort(d2, kind="stable")[: self.k]
        votes = int(np.sum(self.labels[nearest]))
        return 1 if votes * 2 > self.k else 0


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with stress level 1 as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    @classmethod
    def from_pairs(cls, truths, preds) -> "ConfusionMatrix":
        tp = fn = fp = tn = 0
        for t, p in zip(truths, preds):
            if t == 1 and p == 1:
                tp += 1
            elif t == 1:
                fn += 1
            elif p == 1:
                fp += 1
            else:
                tn += 1
        return cls(tp=tp, fn=fn, fp=fp, tn=tn)


@dataclass(frozen=True)
class MetricsReport:
    """Accuracy/precision/recall; entries are None when the denominator is zero."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    undefined: tuple = ()


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    undefined = []
    accuracy = precision = recall = None
    if cm.total > 0:
        accuracy = (cm.tp + cm.tn) / cm.total
    else:
        undefined.append("accuracy")
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        undefined.append("precision")
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        undefined.append("recall")
    return MetricsReport(accuracy=accuracy, precision=precision, recall=recall,
                         undefined=tuple(undefined))


def group_majority(predictions) -> int:
    """Label of a group of 10 consecutive predictions; 5/5 ties go to stress."""
    preds = list(predictions)
    if len(preds) != GROUP_SIZE:
        raise WrongGroupSize(f"need exactly {GROUP_SIZE} predictions, got {len(preds)}")
    return 1 if sum(1 for p in preds if p == 1) * 2 >= GROUP_SIZE else 0


@dataclass
class StressClassifier:
    """Fitted standardizer + PCA + KNN bundle."""

    stats: StandardizationStats
    pca: PcaModel
    knn: KnnModel

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.pca.transform(self.stats.transform(x))

    def predict(self, v: FeatureVector) -> int:
        if not v.fully_valid:
            raise InvalidVector(f"vector at t={v.t_index} has invalid features")
        return self.knn.predict(self.project(v.values))

    def predict_array(self, x: np.ndarray) -> int:
        return self.knn.predict(self.project(np.asarray(x, dtype=float)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "feature_names": list(FEATURE_NAMES),
            "standardization": {
                "mean": self.stats.mean.tolist(),
                "std": self.stats.std.tolist(),
                "kept": self.stats.kept.tolist(),
            },
            "pca": {
                "mean": self.pca.mean.tolist(),
                "components": self.pca.components.tolist(),
                "explained_variance_ratio": self.pca.explained_variance_ratio.tolist(),
                "k": self.pca.k,
            },
            "knn": {
                "k": self.knn.k,
                "points": self.knn.points.tolist(),
                "labels": self.knn.labels.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StressClassifier":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ClassifierError(f"unsupported model format {d.get('format_version')}")
        stats = StandardizationStats(
            mean=np.array(d["standardization"]["mean"]),
            std=np.array(d["standardization"]["std"]),
            kept=np.array(d["standardization"]["kept"], dtype=int),
        )
        pca = PcaModel(
            mean=np.array(d["pca"]["mean"]),
            components=np.array(d["pca"]["components"]),
            explained_variance_ratio=np.array(d["pca"]["explained_variance_ratio"]),
            k=int(d["pca"]["k"]),
        )
        knn = KnnModel(
            k=int(d["knn"]["k"]),
            points=np.array(d["knn"]["points"]),
            labels=np.array(d["knn"]["labels"], dtype=int),
        )
        return cls(stats=stats, pca=pca, knn=knn)

    @classmethod
    def load(cls, path) -> "StressClassifier":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _standardize(x: np.ndarray) -> StandardizationStats:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # constant columns can come out ~1e-16 instead of exactly 0
    kept = np.flatnonzero(std > 1e-12 * (1.0 + np.abs(mean)))
    if kept.size == 0:
        raise DegenerateVariance("all features are constant in the training data")
    return StandardizationStats(mean=mean[kept], std=std[kept], kept=kept)


def _fit_pca(z: np.ndarray, variance_retained: float) -> PcaModel:
    mean = z.mean(axis=0)
    centered = z - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size else 0
    k = 1
    cum = 0.0
    for i in range(rank):
        cum += ratio[i]
        k = i + 1
        if cum >= variance_retained - 1e-12:
            break
    return PcaModel(mean=mean, components=vt[:k], explained_variance_ratio=ratio[:k], k=k)


def fit(vectors, labels, k: int = 5, variance_retained: float = 0.95) -> StressClassifier:
    """Fit the full bundle from fully-valid feature vectors and binary labels.

    Needs at least k samples of each class; raises InsufficientData otherwise.
    """
    rows = []
    ys = []
    for v, y in zip(vectors, labels):
        if isinstance(v, FeatureVector):
            if not v.fully_valid:
                continue
            rows.append(v.values)
        else:
            rows.append(np.asarray(v, dtype=float))
        ys.append(int(y))
    if not rows:
        raise InsufficientData("no fully-valid training vectors")
    x = np.vstack(rows)
    y = np.array(ys, dtype=int)
    for cls_label in (0, 1):
        if int(np.sum(y == cls_label)) < k:
            raise InsufficientData(
                f"class {cls_label}: {int(np.sum(y == cls_label))} samples < k={k}"
            )
    stats = _standardize(x)
    z = stats.transform(x)
    pca = _fit_pca(z, variance_retained)
    knn = KnnModel(k=k, points=pca.transform(z), labels=y)
    return StressClassifier(stats=stats, pca=pca, knn=knn)


def load_training_set(path):
    """Read a labeled features.jsonl file back into (vectors, labels)."""
    vectors = []
    labels = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            vectors.append(FeatureVector.from_record(rec))
            labels.append(int(rec["label"]))
    return vectors, labels


def leave_one_out_accuracy(clf: StressClassifier) -> float:
    """Training-set leave-one-out accuracy of the fitted KNN."""
    pts = clf.knn.points
    labels = clf.knn.labels
    n = len(pts)
    correct = 0
    for i in range(n):
        d2 = np.sum((pts - pts[i]) ** 2, axis=1)
        d2[i] = np.inf
        nearest = np.argsort(d2, kind="stable")[: clf.knn.k]
        votes = int(np.sum(labels[nearest]))
        pred = 1 if votes * 2 > clf.knn.k else 0
        correct += int(pred == labels[i])
    return correct / n
