"""Similarity metrics, TF-IDF weighting, averaged perceptron and the
cross-lingual document classification harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgument, InvalidConfiguration, UndefinedSimilarity


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidArgument(f"vectors must be 1-D with equal shapes, got {x.shape} and {y.shape}")
    return x, y


def dot(x, y) -> float:
    x, y = _pair(x, y)
    return float(x @ y)


def cosine(x, y) -> float:
    x, y = _pair(x, y)
    if not x.any() or not y.any():
        raise UndefinedSimilarity("cosine is undefined for a zero vector")
    x, y = x / np.max(np.abs(x)), y / np.max(np.abs(y))
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    return float(np.clip((x @ y) / (nx * ny), -1.0, 1.0))


def euclidean(x, y) -> float:
    x, y = _pair(x, y)
    diff = x - y
    # rescale so tiny differences do not underflow to zero when squared
    peak = float(np.max(np.abs(diff), initial=0.0))
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    return peak * float(np.linalg.norm(diff / peak))


def mahalanobis(x, y, S) -> float:
    """sqrt((x-y)^T S^-1 (x-y)) for an invertible covariance ``S``."""
    x, y = _pair(x, y)
    S = np.asarray(S, dtype=np.float64)
    if S.shape != (x.size, x.size):
        raise InvalidArgument(f"covariance must be {x.size}x{x.size}, got {S.shape}")
    diff = x - y
    try:
        sol = np.linalg.solve(S, diff)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgument("covariance matrix is singular") from exc
    if np.linalg.cond(S) > 1e14:
        raise InvalidArgument("covariance matrix is singular")
    return float(np.sqrt(max(0.0, diff @ sol)))


def is_psd(M, tol=1e-10) -> bool:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    if not np.allclose(M, M.T, atol=tol * max(1.0, np.abs(M).max(initial=0.0))):
        return False
    return bool(np.linalg.eigvalsh(M).min(initial=0.0) >= -tol * max(1.0, np.abs(M).max(initial=0.0)))


def pseudo_metric(x, y, M) -> float:
    """Squared pseudometric (x-y)^T M (x-y) for a positive semidefinite ``M``."""
    x, y = _pair(x, y)
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (x.size, x.size):
        raise InvalidArgument(f"matrix must be {x.size}x{x.size}, got {M.shape}")
    if not is_psd(M):
        raise InvalidArgument("matrix is not positive semidefinite")
    diff = x - y
    return float(max(0.0, diff @ M @ diff))


def tfidf_weights(counts, variant="raw") -> np.ndarray:
    """Term weights for a (documents x terms) count matrix.

    ``raw``: tf * ln(N / df).  ``smooth``: tf * (ln((1 + N) / (1 + df)) + 1).
    Terms with df = 0 get weight 0.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] < 1:
        raise InvalidArgument("counts must be a non-empty (documents x terms) matrix")
    n_docs = counts.shape[0]
    df = (counts > 0).sum(axis=0)
    with np.errstate(divide="ignore"):
        if variant == "raw":
            idf = np.where(df > 0, np.log(n_docs / np.maximum(df, 1)), 0.0)
        elif variant == "smooth":
            idf = np.where(df > 0, np.log((1.0 + n_docs) / (1.0 + df)) + 1.0, 0.0)
        else:
            raise InvalidArgument(f"unknown tf-idf variant {variant!r}")
    return counts * idf


# ---------------------------------------------------------------------------
# averaged perceptron


@dataclass
class PerceptronModel:
    weights: np.ndarray  # (labels, d) current weights
    averaged: np.ndarray  # (labels, d) averaged weights used for prediction
    epochs: int = 0
    constant_label: int | None = None

    def scores(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.averaged.T

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.averaged.shape[1]:
            raise InvalidArgument(f"expected dimension {self.averaged.shape[1]}, got {x.shape[1]}")
        if self.constant_label is not None:
            return np.full(x.shape[0], self.constant_label, dtype=np.int64)
        return np.argmax(self.scores(x), axis=1)


def perceptron_train(x, y, epochs=10, n_labels=None, lr=1.0, rng=None, shuffle=True) -> PerceptronModel:
    """Multiclass perceptron with weight averaging over every example step.

    Mistakes add ``lr * x`` to the gold row and subtract it from the
    predicted row; predictions take the lowest label id on ties.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise InvalidArgument(f"need (n, d) inputs and n labels, got {x.shape} and {y.shape}")
    n_labels = int(y.max()) + 1 if n_labels is None else n_labels
    if y.size and (y.min() < 0 or y.max() >= n_labels):
        raise InvalidArgument("labels out of range")
    W = np.zeros((n_labels, x.shape[1]))
    present = np.unique(y)
    if present.size == 1:
        return PerceptronModel(W, W.copy(), 0, constant_label=int(present[0]))
    W_sum = np.zeros_like(W)
    rng = rng if rng is not None else np.random.default_rng(0)
    steps = 0
    for _ in range(epochs):
        order = rng.permutation(x.shape[0]) if shuffle else np.arange(x.shape[0])
        _kernels.perceptron_epoch(W, W_sum, x, y, order, lr)
        steps += x.shape[0]
    avg = W_sum / max(1, steps)
    return PerceptronModel(W, avg, epochs)


def perceptron_predict(model: PerceptronModel, x):
    out = model.predict(x)
    return int(out[0]) if np.ndim(x) == 1 else out


# ---------------------------------------------------------------------------
# metrics


def confusion_matrix(gold, pred, n_labels) -> np.ndarray:
    cm = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold), np.asarray(pred)), 1)
    return cm


def f1_scores(gold, pred, n_labels):
    """Per-label F1, macro F1 and micro F1 (micro equals accuracy for single-label data)."""
    cm = confusion_matrix(gold, pred, n_labels)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    per = np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)
    micro_den = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / micro_den if micro_den else 0.0
    return per, float(per.mean()) if n_labels else 0.0, float(micro)


def binary_f1(gold, pred) -> float:
    gold = np.asarray(gold, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    tp = np.sum(gold & pred)
    denom = 2 * tp + np.sum(~gold & pred) + np.sum(gold & ~pred)
    return float(2 * tp / denom) if denom else 0.0


@dataclass
class CldcResult:
    accuracy: float
    macro_f1: float
    micro_f1: float
    per_label_f1: dict
    predictions: list = field(default_factory=list)  # (doc_id, gold, predicted)

    def summary_lines(self):
        lines = [f"accuracy={self.accuracy:.6f}", f"macro_f1={self.macro_f1:.6f}", f"micro_f1={self.micro_f1:.6f}"]
        lines += [f"f1[{label}]={v:.6f}" for label, v in self.per_label_f1.items()]
        return lines


def _doc_vectors(model, lang, docs):
    return model.encode_documents(lang, docs, level="mean")


def cldc_evaluate(
    train_docs,
    train_labels,
    test_docs,
    test_labels,
    model,
    train_lang,
    test_lang,
    label_names=None,
    epochs=10,
    rng=None,
    test_ids=None,
) -> CldcResult:
    """Train a perceptron on one language's documents, test on the other's.

    Documents are lists of word-id sentences; each is represented by the mean
    of its sentence vectors under the model's composer for that language.
    Labels are strings or ints; the test labels must be covered by the
    training label vocabulary.
    """
    names = list(label_names) if label_names is not None else sorted(set(train_labels), key=str)
    index = {n: i for i, n in enumerate(names)}
    unknown = set(test_labels) - set(index)
    if unknown or set(train_labels) - set(index):
        raise InvalidConfiguration(f"label vocabulary mismatch: {sorted(map(str, unknown))}")
    if len(names) < 2:
        raise InvalidConfiguration("classification needs at least two labels")
    xtr = _doc_vectors(model, train_lang, train_docs)
    xte = _doc_vectors(model, test_lang, test_docs)
    ytr = np.array([index[v] for v in train_labels])
    yte = np.array([index[v] for v in test_labels])
    pm = perceptron_train(xtr, ytr, epochs=epochs, n_labels=len(names), rng=rng)
    pred = pm.predict(xte)
    per, macro, micro = f1_scores(yte, pred, len(names))
    ids = test_ids if test_ids is not None else [str(i) for i in range(len(test_docs))]
    rows = [(i, names[g], names[p]) for i, g, p in zip(ids, yte, pred)]
    return CldcResult(float(np.mean(pred == yte)), macro, micro, dict(zip(map(str, names), per.tolist())), rows)


def cldc_evaluate_multilabel(train_docs, train_labels, test_docs, test_labels, model, train_lang, test_lang,
                             keywords=None, epochs=10, rng=None):
    """One-vs-rest binary perceptrons, one per keyword; returns per-keyword and macro F1."""
    keywords = list(keywords) if keywords is not None else sorted({k for ls in train_labels for k in ls})
    xtr = _doc_vectors(model, train_lang, train_docs)
    xte = _doc_vectors(model, test_lang, test_docs)
    out = {}
    for kw in keywords:
        ytr = np.array([int(kw in ls) for ls in train_labels])
        yte = np.array([int(kw in ls) for ls in test_labels])
        pm = perceptron_train(xtr, ytr, epochs=epochs, n_labels=2, rng=rng)
        out[kw] = binary_f1(yte, pm.predict(xte))
    macro = float(np.mean(list(out.values()))) if out else 0.0
    return out, macro


def write_predictions(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, gold, pred in rows:
            fh.write(f"{doc_id}\t{gold}\t{pred}\n")
