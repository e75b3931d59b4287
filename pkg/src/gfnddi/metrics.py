"""Classification and diversity metrics for typed interaction predictions.

Binary AUROC/AUPRC protocol: a pair's score is its largest type probability;
positives are test edges, negatives an equal number of uniformly drawn drug
pairs that carry no edge in any split. Accuracy and F1 come from argmax type
predictions on the test edges; F1 is reported macro- and micro-averaged.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ContractError

DIST_TOL = 1e-9


def as_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > DIST_TOL:
        raise ContractError("not a probability vector")
    return p


def normalize_counts(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise ContractError("counts are all zero")
    return c / total


def shannon_entropy(p) -> float:
    """H(P) in bits, with 0 log 0 = 0."""
    p = as_distribution(p)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def _kl_bits(p: np.ndarray, m: np.ndarray) -> float:
    nz = p > 0
    return float((p[nz] * np.log2(p[nz] / m[nz])).sum())


def jensen_shannon_divergence(p, q) -> float:
    """JSD in bits, so the value lies in [0, 1]."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractError(f"length mismatch: {p.shape} vs {q.shape}")
    p, q = as_distribution(p), as_distribution(q)
    m = 0.5 * (p + q)
    return 0.5 * _kl_bits(p, m) + 0.5 * _kl_bits(q, m)


def coverage(type_multiset, num_types: int, threshold: int = 1) -> float:
    """Fraction of the ``num_types`` types occurring at least ``threshold`` times."""
    if num_types < 1:
        raise ContractError("vocabulary is empty")
    if threshold < 1:
        raise ContractError("threshold must be >= 1")
    items = np.asarray(type_multiset, dtype=np.int64).reshape(-1)
    counts = np.bincount(items, minlength=num_types) if items.size else np.zeros(num_types)
    return float((counts[:num_types] >= threshold).sum() / num_types)


def coverage_from_counts(counts, threshold: int = 1) -> float:
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ContractError("vocabulary is empty")
    return float((counts >= threshold).sum() / counts.size)


# ---------------------------------------------------------------------------
# ranking metrics
# ---------------------------------------------------------------------------

def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    _, start, counts = np.unique(sorted_x, return_index=True, return_counts=True)
    avg = start + (counts + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, counts)
    return ranks


def auroc(pos_scores, neg_scores) -> float:
    """Mann-Whitney rank statistic; ties count one half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ContractError("auroc needs at least one positive and one negative")
    ranks = _average_ranks(np.concatenate([pos, neg]))
    n_pos, n_neg = len(pos), len(neg)
    return float((ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(pos_scores, neg_scores) -> float:
    """Average precision: sum over score thresholds of (R_k - R_{k-1}) * P_k."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ContractError("auprc needs at least one positive and one negative")
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    tp = np.cumsum(labels)
    fp = np.cumsum(1.0 - labels)
    last = np.r_[np.flatnonzero(np.diff(scores)), len(scores) - 1]
    precision = tp[last] / (tp[last] + fp[last])
    recall = tp[last] / len(pos)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


# ---------------------------------------------------------------------------
# type classification
# ---------------------------------------------------------------------------

@dataclass
class TypeScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    predicted: np.ndarray


def per_type_scores(labels, predictions, num_types: int) -> TypeScores:
    """One-vs-rest precision/recall/F1; undefined ratios count as 0."""
    y = np.asarray(labels, dtype=np.int64)
    yhat = np.asarray(predictions, dtype=np.int64)
    tp = np.bincount(y[y == yhat], minlength=num_types).astype(np.float64)
    support = np.bincount(y, minlength=num_types).astype(np.float64)
    predicted = np.bincount(yhat, minlength=num_types).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return TypeScores(precision, recall, f1, support.astype(np.int64), predicted.astype(np.int64))


def macro_f1(scores: TypeScores, types: Optional[Sequence[int]] = None) -> float:
    """Mean F1 over ``types`` (default: all types with test support)."""
    if types is None:
        types = np.flatnonzero(scores.support > 0)
    types = [t for t in types if scores.support[t] > 0]
    if not types:
        return float("nan")
    return float(np.mean(scores.f1[types]))


@dataclass
class ClassificationMetrics:
    auroc: float
    accuracy: float
    auprc: float
    f1_macro: float
    f1_micro: float
    per_type: TypeScores = field(repr=False)


def classification_metrics(probs, labels, negative_probs) -> ClassificationMetrics:
    """Metrics from per-edge type distributions and scored non-edges."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    neg = np.asarray(negative_probs, dtype=np.float64)
    if probs.ndim != 2 or len(probs) != len(labels) or len(labels) == 0:
        raise ContractError("accuracy: need one probability row per labelled example")
    if (labels < 0).any() or (labels >= probs.shape[1]).any():
        raise ContractError("accuracy: label out of range")
    if neg.ndim != 2 or len(neg) == 0:
        raise ContractError("auroc: no negative examples")
    preds = np.argmax(probs, axis=1)
    per_type = per_type_scores(labels, preds, probs.shape[1])
    pos_s, neg_s = probs.max(axis=1), neg.max(axis=1)
    return ClassificationMetrics(
        auroc=auroc(pos_s, neg_s),
        accuracy=float(np.mean(preds == labels)),
        auprc=auprc(pos_s, neg_s),
        f1_macro=macro_f1(per_type),
        f1_micro=float(np.mean(preds == labels)),
        per_type=per_type,
    )


def sample_non_edges(known_pairs, num_drugs: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniformly drawn unordered pairs absent from ``known_pairs``.

    Draws without replacement while enough non-edges exist, otherwise with
    replacement. Returns an (n, 2) array with first < second.
    """
    known = {(min(a, b), max(a, b)) for a, b in known_pairs}
    iu, ju = np.triu_indices(num_drugs, k=1)
    free = np.array([(a, b) for a, b in zip(iu.tolist(), ju.tolist()) if (a, b) not in known],
                    dtype=np.int64).reshape(-1, 2)
    if len(free) == 0:
        raise ContractError("auroc: every drug pair is an edge; no negatives available")
    idx = rng.choice(len(free), size=n, replace=n > len(free))
    return free[idx]


# ---------------------------------------------------------------------------
# diversity
# ---------------------------------------------------------------------------

@dataclass
class DiversityReport:
    se_before: float
    se_after: float
    jsd_before: float
    jsd_after: float
    coverage_before: float
    coverage_after: float
    coverage_threshold: int = 1


def diversity_report(train_counts, aug_counts, true_counts, coverage_threshold: int = 1) -> DiversityReport:
    """Entropy, JSD against the reference distribution, and coverage, before/after."""
    train_counts, aug_counts, true_counts = map(np.asarray, (train_counts, aug_counts, true_counts))
    if not (train_counts.shape == aug_counts.shape == true_counts.shape):
        raise ContractError("count vectors must share one vocabulary")
    p_before = normalize_counts(train_counts)
    p_after = normalize_counts(aug_counts)
    q = normalize_counts(true_counts)
    return DiversityReport(
        se_before=shannon_entropy(p_before),
        se_after=shannon_entropy(p_after),
        jsd_before=jensen_shannon_divergence(p_before, q),
        jsd_after=jensen_shannon_divergence(p_after, q),
        coverage_before=coverage_from_counts(train_counts, coverage_threshold),
        coverage_after=coverage_from_counts(aug_counts, coverage_threshold),
        coverage_threshold=coverage_threshold,
    )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

PROTOCOL = ("binary scores: max type probability per pair; positives = test edges; "
            "negatives = equal count of uniformly sampled non-edge pairs; "
            "accuracy/F1 from argmax type on test edges")

REPORT_FIELDS = ("auroc", "accuracy", "auprc", "f1_macro", "f1_micro",
                 "shannon_entropy", "jsd", "coverage")


@dataclass
class MetricReport:
    auroc: float
    accuracy: float
    auprc: float
    f1_macro: float
    f1_micro: float
    shannon_entropy: float
    jsd: float
    coverage: float
    per_type: List[Dict] = field(default_factory=list)
    protocol: str = PROTOCOL

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def csv_row(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        w.writerow([repr(float(getattr(self, f))) for f in REPORT_FIELDS])
        return buf.getvalue()

    def per_type_csv(self) -> str:
        buf = io.StringIO()
        cols = ("type", "train_count", "support", "predicted", "precision", "recall", "f1")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.per_type:
            w.writerow([row[c] for c in cols])
        return buf.getvalue()


def build_report(cm: ClassificationMetrics, type_labels: Sequence[str], train_counts,
                 reference_counts, coverage_threshold: int = 1) -> MetricReport:
    """Combine classification scores with the diversity of the training distribution."""
    p = normalize_counts(train_counts)
    q = normalize_counts(reference_counts)
    pt = cm.per_type
    rows = [{"type": label, "train_count": int(train_counts[t]), "support": int(pt.support[t]),
             "predicted": int(pt.predicted[t]), "precision": float(pt.precision[t]),
             "recall": float(pt.recall[t]), "f1": float(pt.f1[t])}
            for t, label in enumerate(type_labels)]
    return MetricReport(cm.auroc, cm.accuracy, cm.auprc, cm.f1_macro, cm.f1_micro,
                        shannon_entropy(p), jensen_shannon_divergence(p, q),
                        coverage_from_counts(train_counts, coverage_threshold), rows)


def rare_types(train_counts, fraction: float = 0.5) -> np.ndarray:
    """Indices of the least frequent ``fraction`` of types (ties by index)."""
    counts = np.asarray(train_counts)
    order = np.lexsort((np.arange(len(counts)), counts))
    return np.sort(order[: int(len(counts) * fraction)])
