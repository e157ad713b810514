"""Classification metrics, attention-map extraction and saliency.

AUC uses the rank formulation with average ranks for tied scores, which
is exact against brute-force pair counting (ties score one half). The
interpretation protocol correlates a per-bin importance profile against a
reference signal profile with the sample Pearson coefficient.

Saliency is the absolute input gradient of the predicted class's
pre-softmax logit (post-softmax probabilities saturate, so the logit is
the differentiable target).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .errors import ContractError, DimensionError, MetricUndefinedError
from .ioutil import atomic_write_text
from .autodiff import Tensor
from .model import (ModelConfig, ParameterStore, collect_input_gradient,
                    collect_input_gradients, extract_profiles, forward_batch, logits_to_probs)


@dataclass
class ScoredSet:
    """Predicted positive-class probabilities with the true labels."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ContractError("scores and labels must be equal-length vectors")
        if self.scores.size and (self.scores.min() < 0 or self.scores.max() > 1):
            raise ContractError("scores must lie in [0, 1]")
        if self.labels.size and not np.isin(self.labels, (-1, 1)).all():
            raise ContractError("labels must be -1 or +1")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(s: ScoredSet) -> float:
    """Probability that a random positive outranks a random negative,
    ties counting one half (rank-sum formulation)."""
    n_pos = int((s.labels == 1).sum())
    n_neg = int((s.labels == -1).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC undefined: needs at least one positive and one negative")
    ranks = _average_ranks(s.scores)
    rank_sum = ranks[s.labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1(s: ScoredSet, threshold: float = 0.5) -> float:
    """F1 of the positive class with predictions scored above the threshold."""
    if s.scores.size == 0:
        raise ContractError("empty scored set")
    predicted = s.scores > threshold
    actual = s.labels == 1
    tp = int((predicted & actual).sum())
    if tp == 0:
        return 0.0
    precision = tp / int(predicted.sum())
    recall = tp / int(actual.sum())
    return 2.0 * precision * recall / (precision + recall)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ContractError("pearson needs two equal-length vectors of size >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise MetricUndefinedError("pearson undefined for zero-variance input")
    return float((dx @ dy) / np.sqrt(vx * vy))


def interpretation_correlation(weights, reference) -> float:
    """Pearson correlation between a per-bin importance profile and a
    reference per-bin signal profile."""
    return pearson(weights, reference)


# ---------------------------------------------------------- model scoring


def predict_probs(x: np.ndarray, params: ParameterStore, cfg: ModelConfig,
                  batch_size: int = 256) -> np.ndarray:
    """Positive-class probabilities for a (N, M, T) input stack."""
    out = []
    for lo in range(0, x.shape[0], batch_size):
        bf = forward_batch(x[lo:lo + batch_size], params, cfg)
        out.append(logits_to_probs(bf.logits.data)[1])
    return np.concatenate(out)


def score_dataset(dataset: Dataset, params: ParameterStore, cfg: ModelConfig,
                  batch_size: int = 256) -> ScoredSet:
    return ScoredSet(predict_probs(dataset.signals(), params, cfg, batch_size),
                     dataset.labels())


@dataclass
class MeanAttentionMap:
    """Attention profiles averaged over samples predicted as one class."""

    alpha_mean: np.ndarray            # (n_rows, T)
    beta_mean: np.ndarray | None      # (M,) for the mark-attention variant
    class_filter: int
    n_samples: int


def mean_attention(dataset: Dataset, params: ParameterStore, cfg: ModelConfig,
                   predicted_class: int, batch_size: int = 256) -> MeanAttentionMap:
    """Average alpha and beta over samples whose argmax prediction equals
    predicted_class (+1 or -1)."""
    if predicted_class not in (-1, 1):
        raise ContractError("predicted_class must be -1 or +1")
    if cfg.variant == "lstm":
        raise ContractError(f"variant {cfg.variant!r} produces no attention")
    x = dataset.signals()
    alpha_sum = beta_sum = None
    count = 0
    for lo in range(0, x.shape[0], batch_size):
        bf = forward_batch(x[lo:lo + batch_size], params, cfg)
        probs = logits_to_probs(bf.logits.data)
        keep = (probs[1] > probs[0]) if predicted_class == 1 else (probs[1] <= probs[0])
        if not keep.any():
            continue
        alpha, beta = extract_profiles(bf, cfg)
        a = alpha[:, :, keep].sum(axis=2)
        alpha_sum = a if alpha_sum is None else alpha_sum + a
        if beta is not None:
            b = beta[:, keep].sum(axis=1)
            beta_sum = b if beta_sum is None else beta_sum + b
        count += int(keep.sum())
    if count == 0:
        raise MetricUndefinedError(f"empty class: no samples predicted as {predicted_class:+d}")
    return MeanAttentionMap(alpha_sum / count,
                            None if beta_sum is None else beta_sum / count,
                            predicted_class, count)


def saliency(x: np.ndarray, params: ParameterStore, cfg: ModelConfig) -> np.ndarray:
    """Absolute gradient of the predicted-class logit w.r.t. every input
    cell of one (M, T) sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.n_marks, cfg.n_bins):
        raise DimensionError(f"input shape {x.shape} != ({cfg.n_marks}, {cfg.n_bins})")
    bf = forward_batch(x[None], params, cfg)
    k = int(np.argmax(bf.logits.data[:, 0]))
    ad.backward(ad.sum_all(ad.slice0(bf.logits, k, k + 1)))
    return np.abs(collect_input_gradient(bf, cfg))


def mean_saliency(dataset: Dataset, params: ParameterStore, cfg: ModelConfig,
                  predicted_class: int, batch_size: int = 256) -> np.ndarray:
    """Mean absolute input gradient over samples predicted as one class.

    One backward pass per batch suffices: summing each kept column's own
    predicted-class logit gives every column its own logit gradient.
    """
    if predicted_class not in (-1, 1):
        raise ContractError("predicted_class must be -1 or +1")
    x = dataset.signals()
    total = np.zeros((cfg.n_marks, cfg.n_bins))
    count = 0
    for lo in range(0, x.shape[0], batch_size):
        bf = forward_batch(x[lo:lo + batch_size], params, cfg)
        probs = logits_to_probs(bf.logits.data)
        keep = (probs[1] > probs[0]) if predicted_class == 1 else (probs[1] <= probs[0])
        if not keep.any():
            continue
        k = np.argmax(bf.logits.data, axis=0)
        picked = ad.pick_cols(bf.logits, k)
        ad.backward(ad.sum_all(ad.hadamard(picked, Tensor(keep.astype(np.float64)))))
        grads = collect_input_gradients(bf, cfg)
        total += np.abs(grads[keep]).sum(axis=0)
        count += int(keep.sum())
    if count == 0:
        raise MetricUndefinedError(f"empty class: no samples predicted as {predicted_class:+d}")
    return total / count


# ----------------------------------------------------------------- exports


def metrics_report_text(auc_value: float, f1_value: float, n: int,
                        n_pos: int, n_neg: int) -> str:
    report = {"auc": auc_value, "f1": f1_value, "n": n,
              "class_counts": {"positive": n_pos, "negative": n_neg}}
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_metrics_report(path: str, scored: ScoredSet) -> None:
    n_pos = int((scored.labels == 1).sum())
    n_neg = int((scored.labels == -1).sum())
    atomic_write_text(path, metrics_report_text(auc(scored), f1(scored),
                                                scored.labels.size, n_pos, n_neg))


def map_to_csv(values: np.ndarray, column: str) -> str:
    out = io.StringIO()
    out.write(f"mark,bin,{column}\n")
    for m in range(values.shape[0]):
        for b in range(values.shape[1]):
            out.write(f"{m},{b},{repr(float(values[m, b]))}\n")
    return out.getvalue()


def write_map_csv(path: str, values: np.ndarray, column: str) -> None:
    atomic_write_text(path, map_to_csv(values, column))


def read_map_csv(path: str) -> np.ndarray:
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 3 or header[:2] != ["mark", "bin"]:
            raise ContractError(f"{path}: expected a mark,bin,<value> table")
        for line in fh:
            if not line.strip():
                continue
            m, b, v = line.strip().split(",")
            rows[(int(m), int(b))] = float(v)
    n_m = max(k[0] for k in rows) + 1
    n_b = max(k[1] for k in rows) + 1
    out = np.zeros((n_m, n_b))
    for (m, b), v in rows.items():
        out[m, b] = v
    return out


def beta_to_csv(beta: np.ndarray) -> str:
    out = io.StringIO()
    out.write("mark,beta_mean\n")
    for m, v in enumerate(beta):
        out.write(f"{m},{repr(float(v))}\n")
    return out.getvalue()


def write_beta_csv(path: str, beta: np.ndarray) -> None:
    atomic_write_text(path, beta_to_csv(beta))
