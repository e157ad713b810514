"""Soft attention over the columns of an encoded matrix.

A single learned context row scores each column by a plain dot product
(no bias, no nonlinearity); the scores are softmax-normalized into a
probability vector and the summary is the weighted column sum. The same
layer serves both attention levels of the classifier: over bin positions
within one mark and over mark embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError


@dataclass
class AttentionParams:
    """One context row vector of length d_h, stored flat."""

    context: object  # (d_h,) ndarray or leaf Tensor

    @property
    def d_h(self) -> int:
        c = self.context
        shape = c.data.shape if isinstance(c, Tensor) else np.asarray(c).shape
        if len(shape) != 1:
            raise DimensionError(f"context must be a flat vector, got shape {shape}")
        return shape[0]


def _tensorize(v) -> Tensor:
    return v if isinstance(v, Tensor) else Tensor(v)


def attention_scores(h: Tensor, p: AttentionParams) -> Tensor:
    """Raw per-column scores context·H[:,k] as a length-K vector."""
    ctx = _tensorize(p.context)
    if h.data.ndim != 2 or h.data.shape[0] != p.d_h:
        raise DimensionError(f"encoded matrix {h.data.shape} does not match context length {p.d_h}")
    if h.data.shape[1] == 0:
        raise DimensionError("no columns to attend over")
    return ad.matmul(ad.transpose(h), ctx)


def attend(h, p: AttentionParams) -> tuple[Tensor, Tensor]:
    """Return (weights, summary) for a (d_h, K) matrix of candidates.

    weights is a length-K probability vector, summary the weighted sum of
    columns, both on the differentiation graph.
    """
    h = _tensorize(h)
    weights = ad.softmax(attention_scores(h, p))
    summary = ad.matmul(h, weights)
    return weights, summary
