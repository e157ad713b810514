"""LSTM cell and bidirectional sequence encoder.

The cell is the vanilla gated form: input/forget/output gates through a
sigmoid, a tanh candidate, ``c_t = f⊙c_{t-1} + i⊙g`` and
``h_t = o⊙tanh(c_t)``. No peepholes, no normalization, one recurrent
layer. Initial hidden and cell states are zero.

Parameter containers hold one weight matrix, recurrence matrix and bias
per gate. Fields may be plain float64 arrays or autodiff leaves; encoding
with leaf parameters puts every gate block on the differentiation graph.
All functions are pure and safe to call concurrently over shared
read-only parameters (each call builds its own graph).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionError

GATES = ("i", "f", "o", "g")
PARAM_KINDS = ("w", "u", "b")


def _shape(v) -> tuple:
    return v.data.shape if isinstance(v, Tensor) else np.asarray(v).shape


def _tensorize(v) -> Tensor:
    return v if isinstance(v, Tensor) else Tensor(v)


@dataclass
class LstmParams:
    """Per-gate parameters of one LSTM direction.

    ``w_*`` are (d, n_in), ``u_*`` are (d, d), ``b_*`` are (d,), for the
    gate order i, f, o, g.
    """

    w_i: object
    u_i: object
    b_i: object
    w_f: object
    u_f: object
    b_f: object
    w_o: object
    u_o: object
    b_o: object
    w_g: object
    u_g: object
    b_g: object

    def __post_init__(self):
        d, n_in = _shape(self.w_i)
        for g in GATES:
            if _shape(getattr(self, f"w_{g}")) != (d, n_in):
                raise DimensionError(f"gate {g}: weight shape differs from ({d}, {n_in})")
            if _shape(getattr(self, f"u_{g}")) != (d, d):
                raise DimensionError(f"gate {g}: recurrence shape differs from ({d}, {d})")
            if _shape(getattr(self, f"b_{g}")) != (d,):
                raise DimensionError(f"gate {g}: bias shape differs from ({d},)")

    @property
    def d(self) -> int:
        return _shape(self.w_i)[0]

    @property
    def n_in(self) -> int:
        return _shape(self.w_i)[1]

    def named(self):
        """Yield (field_name, value) in the canonical i, f, o, g order."""
        for f in fields(self):
            yield f.name, getattr(self, f.name)


@dataclass
class BiLstmParams:
    """Independent forward and backward directions of equal sizes."""

    forward: LstmParams
    backward: LstmParams

    def __post_init__(self):
        if self.forward.d != self.backward.d or self.forward.n_in != self.backward.n_in:
            raise DimensionError("forward/backward directions must share d and n_in")

    @property
    def d(self) -> int:
        return self.forward.d


class _Cell:
    """One direction with gate blocks stacked and the whole cell update
    fused into a single graph node over the combined state [h; c]."""

    def __init__(self, p: LstmParams):
        self.d = p.d
        self.w = ad.concat0([_tensorize(getattr(p, f"w_{g}")) for g in GATES])
        self.u = ad.concat0([_tensorize(getattr(p, f"u_{g}")) for g in GATES])
        self.b = ad.concat0([_tensorize(getattr(p, f"b_{g}")) for g in GATES])

    def step_state(self, x: Tensor, s_prev: Tensor) -> Tensor:
        """Apply the six cell equations, mapping state [h_prev; c_prev] to
        [h; c]. Accepts a single column or a (•, B) batch of columns."""
        d = self.d
        wd, ud, bd = self.w.data, self.u.data, self.b.data
        xd, sd = x.data, s_prev.data
        flat = xd.ndim == 1
        h_prev, c_prev = sd[:d], sd[d:]
        z = wd @ xd + ud @ h_prev + (bd if flat else bd[:, None])
        # tanh half-angle sigmoid, overflow-free
        i = 0.5 * (np.tanh(0.5 * z[:d]) + 1.0)
        f = 0.5 * (np.tanh(0.5 * z[d:2 * d]) + 1.0)
        o = 0.5 * (np.tanh(0.5 * z[2 * d:3 * d]) + 1.0)
        g = np.tanh(z[3 * d:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc

        def bwd(adj):
            gh, gc_out = adj[:d], adj[d:]
            gc = gc_out + gh * o * (1.0 - tc * tc)
            gz = np.concatenate([
                gc * g * i * (1.0 - i),
                gc * c_prev * f * (1.0 - f),
                gh * tc * o * (1.0 - o),
                gc * i * (1.0 - g * g),
            ], axis=0)
            if flat:
                gw, gu, gb = np.outer(gz, xd), np.outer(gz, h_prev), gz
            else:
                gw, gu, gb = gz @ xd.T, gz @ h_prev.T, gz.sum(axis=1)
            gs_prev = np.concatenate([ud.T @ gz, gc * f], axis=0)
            return gw, gu, gb, wd.T @ gz, gs_prev

        out = np.concatenate([h, c], axis=0)
        return ad.custom(out, "lstm_step", (self.w, self.u, self.b, x, s_prev), bwd)

    def zero_state(self, like: Tensor) -> Tensor:
        xd = like.data
        shape = (2 * self.d,) if xd.ndim == 1 else (2 * self.d, xd.shape[1])
        return Tensor(np.zeros(shape))


def lstm_step(x, h_prev, c_prev, p: LstmParams) -> tuple[Tensor, Tensor]:
    """Run one cell update, returning (h_t, c_t) on the graph.

    ``x`` is an input column (n_in,) or a batch of columns (n_in, B);
    states follow the same convention with height d.
    """
    x, h_prev, c_prev = _tensorize(x), _tensorize(h_prev), _tensorize(c_prev)
    d, n_in = p.d, p.n_in
    if x.data.shape[0] != n_in:
        raise DimensionError(f"input height {x.data.shape[0]} != n_in {n_in}")
    for name, s in (("h_prev", h_prev), ("c_prev", c_prev)):
        if s.data.shape != ((d,) if x.data.ndim == 1 else (d, x.data.shape[1])):
            raise DimensionError(f"{name} shape {s.data.shape} does not conform")
    state = _Cell(p).step_state(x, ad.concat0([h_prev, c_prev]))
    return ad.slice0(state, 0, d), ad.slice0(state, d, 2 * d)


def _scan(cell: _Cell, xs: list[Tensor], reverse: bool) -> list[Tensor]:
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    state = cell.zero_state(xs[0])
    out: list[Tensor | None] = [None] * len(xs)
    for t in order:
        state = cell.step_state(xs[t], state)
        out[t] = ad.slice0(state, 0, cell.d)
    return out


def bilstm_encode_steps(xs: list[Tensor], p: BiLstmParams) -> list[Tensor]:
    """Encode a sequence of input columns into per-step [forward; backward]
    concatenations of height 2d. Accepts batched columns (n_in, B)."""
    if not xs:
        raise DimensionError("empty sequence")
    first = xs[0].data.shape
    for x in xs:
        if x.data.shape != first:
            raise DimensionError("sequence steps must share a shape")
    fwd = _scan(_Cell(p.forward), xs, reverse=False)
    bwd = _scan(_Cell(p.backward), xs, reverse=True)
    return [ad.concat0([f, b]) for f, b in zip(fwd, bwd)]


def bilstm_encode(seq, p: BiLstmParams) -> Tensor:
    """Encode a (n_in, T) sequence into the (2d, T) embedding matrix whose
    column t stacks the forward state after steps 1..t on the backward
    state after steps T..t."""
    arr = seq.data if isinstance(seq, Tensor) else np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"sequence must be 2-D, got shape {arr.shape}")
    n_in, t_len = arr.shape
    if t_len == 0:
        raise DimensionError("sequence has no steps")
    if n_in != p.forward.n_in:
        raise DimensionError(f"sequence height {n_in} != n_in {p.forward.n_in}")
    xs = [Tensor(np.ascontiguousarray(arr[:, t])) for t in range(t_len)]
    steps = bilstm_encode_steps(xs, p)
    return ad.concat_cols([ad.reshape(h, (2 * p.d, 1)) for h in steps])
