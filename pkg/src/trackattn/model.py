"""The hierarchical-attention sequence classifier and its variants.

Four related architectures predict a binary label from an M x T matrix of
binned signal tracks:

* ``lstm``            -- one bidirectional LSTM over the joint input
  (columns as time steps, height M), final forward and backward states
  concatenated into the classifier.
* ``lstm-attn``       -- the joint encoder followed by one soft-attention
  pool over bin positions.
* ``lstm-alpha``      -- one bidirectional LSTM plus bin attention per
  mark; the per-mark summaries are concatenated and fed through a
  two-layer tanh head.
* ``lstm-alpha-beta`` -- per-mark encoders and bin attention, then a
  second bidirectional LSTM over the (arbitrarily ordered) sequence of
  mark summaries with mark-level attention, then the classifier.

The forward pass is batched: a (B, M, T) stack of inputs flows through the
graph as width-B matrices, and the mean negative log-likelihood over the
batch is the training root. All functions are pure over read-only
parameters; a trained store can serve concurrent forward calls.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError
from .ioutil import atomic_write_bytes
from .lstm import GATES, BiLstmParams, LstmParams, bilstm_encode_steps

VARIANTS = ("lstm", "lstm-attn", "lstm-alpha", "lstm-alpha-beta")
PER_MARK_VARIANTS = ("lstm-alpha", "lstm-alpha-beta")
ALPHA_HEAD_WIDTH = 32

CHECKPOINT_MAGIC = b"trackattn-checkpoint-v1"


@dataclass
class ModelConfig:
    n_marks: int
    n_bins: int
    d: int = 32
    d_hm: int = 16
    variant: str = "lstm-alpha-beta"
    share_bin_context: bool = True
    mark_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; valid: {', '.join(VARIANTS)}")
        if min(self.n_marks, self.n_bins, self.d, self.d_hm) < 1:
            raise ContractError("n_marks, n_bins, d and d_hm must all be >= 1")
        if self.mark_order is not None:
            order = tuple(int(i) for i in self.mark_order)
            if sorted(order) != list(range(self.n_marks)):
                raise ContractError(f"mark_order {order} is not a permutation of 0..{self.n_marks - 1}")
            self.mark_order = order

    @property
    def order(self) -> tuple[int, ...]:
        return self.mark_order if self.mark_order is not None else tuple(range(self.n_marks))

    def to_dict(self) -> dict:
        return {
            "n_marks": self.n_marks, "n_bins": self.n_bins, "d": self.d, "d_hm": self.d_hm,
            "variant": self.variant, "share_bin_context": self.share_bin_context,
            "mark_order": list(self.mark_order) if self.mark_order is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        kwargs = dict(data)
        if kwargs.get("mark_order") is not None:
            kwargs["mark_order"] = tuple(kwargs["mark_order"])
        return cls(**kwargs)


@dataclass
class AttentionProfile:
    """Per-sample attention: alpha rows are probability vectors over bins
    (one per mark; one joint row for lstm-attn), beta over marks."""

    alpha: np.ndarray
    beta: np.ndarray | None = None


@dataclass
class Prediction:
    prob_high: float
    prob_low: float
    attention: AttentionProfile | None = None

    @property
    def label(self) -> int:
        """Predicted class in {-1, +1}; exact ties resolve to -1."""
        return 1 if self.prob_high > self.prob_low else -1


@dataclass
class ParameterStore:
    """Every trainable block of one model, as plain float64 arrays.

    Which fields are populated depends on the variant; ``named_blocks``
    yields (name, array) pairs in a stable canonical order that doubles as
    the checkpoint layout and the initialization draw order.
    """

    bin_lstms: list[BiLstmParams]
    bin_contexts: list[np.ndarray] = field(default_factory=list)
    mark_lstm: BiLstmParams | None = None
    mark_context: np.ndarray | None = None
    hidden_w: np.ndarray | None = None
    hidden_b: np.ndarray | None = None
    classifier_w: np.ndarray = None
    classifier_b: np.ndarray = None

    def named_blocks(self):
        for j, bl in enumerate(self.bin_lstms):
            for dirname, lp in (("fwd", bl.forward), ("bwd", bl.backward)):
                for fname, value in lp.named():
                    yield f"bin_lstm.{j}.{dirname}.{fname}", value
        for k, ctx in enumerate(self.bin_contexts):
            yield f"bin_context.{k}", ctx
        if self.mark_lstm is not None:
            for dirname, lp in (("fwd", self.mark_lstm.forward), ("bwd", self.mark_lstm.backward)):
                for fname, value in lp.named():
                    yield f"mark_lstm.{dirname}.{fname}", value
        if self.mark_context is not None:
            yield "mark_context", self.mark_context
        if self.hidden_w is not None:
            yield "hidden.w", self.hidden_w
            yield "hidden.b", self.hidden_b
        yield "classifier.w", self.classifier_w
        yield "classifier.b", self.classifier_b

    def map_blocks(self, fn) -> "ParameterStore":
        """Rebuild the store with fn(name, value) applied to every block."""
        def lstm(prefix, lp):
            return LstmParams(**{n: fn(f"{prefix}.{n}", v) for n, v in lp.named()})

        def bilstm(prefix, bl):
            return BiLstmParams(lstm(f"{prefix}.fwd", bl.forward), lstm(f"{prefix}.bwd", bl.backward))

        return ParameterStore(
            bin_lstms=[bilstm(f"bin_lstm.{j}", bl) for j, bl in enumerate(self.bin_lstms)],
            bin_contexts=[fn(f"bin_context.{k}", c) for k, c in enumerate(self.bin_contexts)],
            mark_lstm=None if self.mark_lstm is None else bilstm("mark_lstm", self.mark_lstm),
            mark_context=None if self.mark_context is None else fn("mark_context", self.mark_context),
            hidden_w=None if self.hidden_w is None else fn("hidden.w", self.hidden_w),
            hidden_b=None if self.hidden_b is None else fn("hidden.b", self.hidden_b),
            classifier_w=fn("classifier.w", self.classifier_w),
            classifier_b=fn("classifier.b", self.classifier_b),
        )

    def copy(self) -> "ParameterStore":
        return self.map_blocks(lambda _, v: v.copy())

    def n_parameters(self) -> int:
        return sum(v.size for _, v in self.named_blocks())


def init_params(cfg: ModelConfig, seed: int) -> ParameterStore:
    """Draw every weight uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases
    start at zero except the forget gate, which starts at one."""
    rng = np.random.default_rng(seed)

    def u(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def lstm(n_in, d):
        kwargs = {}
        for g in GATES:
            kwargs[f"w_{g}"] = u(n_in, (d, n_in))
            kwargs[f"u_{g}"] = u(d, (d, d))
            kwargs[f"b_{g}"] = np.ones(d) if g == "f" else np.zeros(d)
        return LstmParams(**kwargs)

    def bilstm(n_in, d):
        return BiLstmParams(lstm(n_in, d), lstm(n_in, d))

    per_mark = cfg.variant in PER_MARK_VARIANTS
    if per_mark:
        bin_lstms = [bilstm(1, cfg.d) for _ in range(cfg.n_marks)]
    else:
        bin_lstms = [bilstm(cfg.n_marks, cfg.d)]

    bin_contexts: list[np.ndarray] = []
    if cfg.variant != "lstm":
        n_ctx = cfg.n_marks if (per_mark and not cfg.share_bin_context) else 1
        bin_contexts = [u(2 * cfg.d, (2 * cfg.d,)) for _ in range(n_ctx)]

    mark_lstm = mark_context = None
    hidden_w = hidden_b = None
    if cfg.variant == "lstm-alpha-beta":
        mark_lstm = bilstm(2 * cfg.d, cfg.d_hm)
        mark_context = u(2 * cfg.d_hm, (2 * cfg.d_hm,))
        clf_in = 2 * cfg.d_hm
    elif cfg.variant == "lstm-alpha":
        hidden_w = u(cfg.n_marks * 2 * cfg.d, (ALPHA_HEAD_WIDTH, cfg.n_marks * 2 * cfg.d))
        hidden_b = np.zeros(ALPHA_HEAD_WIDTH)
        clf_in = ALPHA_HEAD_WIDTH
    else:
        clf_in = 2 * cfg.d

    return ParameterStore(
        bin_lstms=bin_lstms,
        bin_contexts=bin_contexts,
        mark_lstm=mark_lstm,
        mark_context=mark_context,
        hidden_w=hidden_w,
        hidden_b=hidden_b,
        classifier_w=u(clf_in, (2, clf_in)),
        classifier_b=np.zeros(2),
    )


# ------------------------------------------------------------- forward pass


@dataclass
class BatchForward:
    """Graph handles from one batched forward pass."""

    logits: Tensor                       # (2, B)
    alphas: list[Tensor] | None          # per mark, each (T, B); single entry for lstm-attn
    betas: Tensor | None                 # (M, B), rows in mark-sequence order
    leaves: dict[str, Tensor]            # parameter leaves by block name
    input_steps: list[list[Tensor]]      # [mark][bin] -> (1, B), or [[bin] -> (M, B)] for joint


def _leafed(params: ParameterStore) -> tuple[ParameterStore, dict[str, Tensor]]:
    leaves: dict[str, Tensor] = {}

    def wrap(name, value):
        t = Tensor(value)
        leaves[name] = t
        return t

    return params.map_blocks(wrap), leaves


def _attend_steps(steps: list[Tensor], ctx: Tensor) -> tuple[Tensor, Tensor]:
    """Batched soft attention over a list of (d_h, B) columns.

    Returns the (K, B) column-stochastic weight matrix and the (d_h, B)
    weighted sum.
    """
    weights = ad.softmax(ad.col_scores(ctx, steps))
    return weights, ad.weighted_mix(weights, steps)


def forward_batch(x: np.ndarray, params: ParameterStore, cfg: ModelConfig) -> BatchForward:
    """Run the variant's forward pass over a (B, M, T) input stack."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (cfg.n_marks, cfg.n_bins):
        raise DimensionError(
            f"input shape {x.shape} does not match (B, {cfg.n_marks}, {cfg.n_bins})")
    n_b, n_m, n_t = x.shape
    store, leaves = _leafed(params)

    if cfg.variant in PER_MARK_VARIANTS:
        input_steps = [
            [Tensor(np.ascontiguousarray(x[:, j, t]).reshape(1, n_b)) for t in range(n_t)]
            for j in range(n_m)
        ]
        alphas, summaries = [], []
        for j in range(n_m):
            encoded = bilstm_encode_steps(input_steps[j], store.bin_lstms[j])
            ctx = store.bin_contexts[0 if cfg.share_bin_context else j]
            weights, pooled = _attend_steps(encoded, ctx)
            alphas.append(weights)
            summaries.append(pooled)

        if cfg.variant == "lstm-alpha":
            stacked = ad.concat0(summaries)
            hidden = ad.tanh(ad.affine(store.hidden_w, stacked, store.hidden_b))
            logits = ad.affine(store.classifier_w, hidden, store.classifier_b)
            return BatchForward(logits, alphas, None, leaves, input_steps)

        sequence = [summaries[j] for j in cfg.order]
        encoded_marks = bilstm_encode_steps(sequence, store.mark_lstm)
        betas, gene_vec = _attend_steps(encoded_marks, store.mark_context)
        logits = ad.affine(store.classifier_w, gene_vec, store.classifier_b)
        return BatchForward(logits, alphas, betas, leaves, input_steps)

    # joint variants: columns of the M x T matrix are the time steps
    input_steps = [[Tensor(np.ascontiguousarray(x[:, :, t]).T) for t in range(n_t)]]
    encoded = bilstm_encode_steps(input_steps[0], store.bin_lstms[0])

    if cfg.variant == "lstm-attn":
        weights, pooled = _attend_steps(encoded, store.bin_contexts[0])
        logits = ad.affine(store.classifier_w, pooled, store.classifier_b)
        return BatchForward(logits, [weights], None, leaves, input_steps)

    d = cfg.d
    readout = ad.concat0([ad.slice0(encoded[-1], 0, d), ad.slice0(encoded[0], d, 2 * d)])
    logits = ad.affine(store.classifier_w, readout, store.classifier_b)
    return BatchForward(logits, None, None, leaves, input_steps)


def logits_to_probs(logits: np.ndarray) -> np.ndarray:
    """Column-wise stable softmax of a (2, B) logit array."""
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def extract_profiles(bf: BatchForward, cfg: ModelConfig) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Numpy attention maps from a forward pass: alpha (n_rows, T, B) and
    beta (M, B) with beta rows restored to original mark order."""
    if bf.alphas is None:
        return None, None
    alpha = np.stack([a.data for a in bf.alphas], axis=0)
    beta = None
    if bf.betas is not None:
        beta = np.empty_like(bf.betas.data)
        beta[list(cfg.order), :] = bf.betas.data
    return alpha, beta


def forward(x: np.ndarray, params: ParameterStore, cfg: ModelConfig) -> Prediction:
    """Classify a single (M, T) matrix, returning class probabilities and
    the attention profile when the variant produces one."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.n_marks, cfg.n_bins):
        raise DimensionError(f"input shape {x.shape} != ({cfg.n_marks}, {cfg.n_bins})")
    bf = forward_batch(x[None, :, :], params, cfg)
    probs = logits_to_probs(bf.logits.data)[:, 0]
    alpha, beta = extract_profiles(bf, cfg)
    profile = None
    if alpha is not None:
        profile = AttentionProfile(alpha[:, :, 0], None if beta is None else beta[:, 0])
    return Prediction(prob_high=float(probs[1]), prob_low=float(probs[0]), attention=profile)


def labels_to_class_indices(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.isin(labels, (-1, 1)).all():
        raise ContractError("labels must be -1 or +1")
    return ((labels + 1) // 2).astype(np.intp)


def nll_loss_batch(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the true classes, on the graph."""
    idx = labels_to_class_indices(labels)
    probs = ad.softmax(logits)
    picked = ad.pick_cols(probs, idx)
    return ad.scale(ad.sum_all(ad.log(picked)), -1.0 / idx.size)


def loss(pred: Prediction, label: int) -> float:
    """Negative log-probability assigned to the true class."""
    if label not in (-1, 1):
        raise ContractError("label must be -1 or +1")
    p = pred.prob_high if label == 1 else pred.prob_low
    return float(-np.log(p))


def collect_input_gradients(bf: BatchForward, cfg: ModelConfig) -> np.ndarray:
    """Assemble the (B, M, T) input gradients after a backward pass has
    populated adjoints."""
    n_b = bf.logits.data.shape[1]
    grad = np.zeros((n_b, cfg.n_marks, cfg.n_bins))
    if cfg.variant in PER_MARK_VARIANTS:
        for j, row in enumerate(bf.input_steps):
            for t, leaf in enumerate(row):
                if leaf.adjoint is not None:
                    grad[:, j, t] = leaf.adjoint[0]
    else:
        for t, leaf in enumerate(bf.input_steps[0]):
            if leaf.adjoint is not None:
                grad[:, :, t] = leaf.adjoint.T
    return grad


def collect_input_gradient(bf: BatchForward, cfg: ModelConfig, col: int = 0) -> np.ndarray:
    """The (M, T) input gradient of one batch column."""
    return collect_input_gradients(bf, cfg)[col]


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path: str, cfg: ModelConfig, seed: int, params: ParameterStore) -> None:
    """Write config, seed and every block (little-endian float64 payload,
    stable block names) into one container; the write is atomic."""
    blocks = list(params.named_blocks())
    header = {
        "config": cfg.to_dict(),
        "seed": int(seed),
        "blocks": [{"name": n, "shape": list(v.shape)} for n, v in blocks],
    }
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in blocks)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    atomic_write_bytes(path, CHECKPOINT_MAGIC + b"\n" + head + b"\n" + body)


def load_checkpoint(path: str) -> tuple[ModelConfig, int, ParameterStore]:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, _, rest = blob.partition(b"\n")
    if magic != CHECKPOINT_MAGIC:
        raise ContractError(f"{path}: not a checkpoint file")
    head, _, body = rest.partition(b"\n")
    header = json.loads(head.decode("utf-8"))
    cfg = ModelConfig.from_dict(header["config"])
    seed = int(header["seed"])

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["blocks"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        raw = body[offset:offset + 8 * size]
        if len(raw) != 8 * size:
            raise ContractError(f"{path}: truncated payload at block {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        offset += 8 * size
    if offset != len(body):
        raise ContractError(f"{path}: trailing bytes after last block")

    template = init_params(cfg, seed=0)
    expected = [name for name, _ in template.named_blocks()]
    if expected != [e["name"] for e in header["blocks"]]:
        raise ContractError(f"{path}: block names do not match variant {cfg.variant!r}")
    store = template.map_blocks(lambda name, v: arrays[name].copy() if arrays[name].shape == v.shape
                                else _shape_error(path, name, arrays[name].shape, v.shape))
    return cfg, seed, store


def _shape_error(path, name, got, want):
    raise ContractError(f"{path}: block {name} has shape {got}, expected {want}")
