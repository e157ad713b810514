"""Mini-batch gradient training with validation-based model selection.

An epoch shuffles the training set under a seeded generator, steps over
mini-batches (batch gradient = mean of per-sample gradients), clips the
global gradient norm, and applies the optimizer update. After each epoch
the validation AUC is computed; the parameters returned are those of the
best validation epoch, and training halts once the current epoch reaches
best_epoch + patience (or max_epochs).

Everything is deterministic under the config seed: initialization,
shuffle order and the gradient reduction are all seeded and ordered.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .errors import ContractError, NumericalError
from .ioutil import atomic_write_text
from .metrics import ScoredSet, auc, predict_probs
from .model import ModelConfig, ParameterStore, forward_batch, init_params, nll_loss_batch

OPTIMIZERS = ("sgd", "adaptive-moments")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 5
    grad_clip_norm: float = 5.0
    seed: int = 0
    optimizer: str = "adaptive-moments"

    def __post_init__(self):
        # zero is allowed as the documented no-op training case
        if self.learning_rate < 0:
            raise ContractError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ContractError("batch_size and max_epochs must be >= 1, patience >= 0")
        if self.grad_clip_norm <= 0:
            raise ContractError("grad_clip_norm must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ContractError(f"unknown optimizer {self.optimizer!r}; valid: {', '.join(OPTIMIZERS)}")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "grad_clip_norm": self.grad_clip_norm, "seed": self.seed,
                "optimizer": self.optimizer}


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_auc: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats]
    best_epoch: int
    best_params: "ParameterStore | None" = None  # reference to the returned store

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("epoch,train_loss,val_auc\n")
        for e in self.epochs:
            out.write(f"{e.epoch},{repr(e.train_loss)},{repr(e.val_auc)}\n")
        return out.getvalue()


def write_history(path: str, history: TrainHistory) -> None:
    atomic_write_text(path, history.to_csv())


def init_optimizer_state(blocks: dict[str, np.ndarray], cfg: TrainConfig) -> dict:
    if cfg.optimizer == "sgd":
        return {}
    return {"t": 0,
            "m": {name: np.zeros_like(v) for name, v in blocks.items()},
            "v": {name: np.zeros_like(v) for name, v in blocks.items()}}


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                   state: dict, cfg: TrainConfig) -> tuple[dict, dict]:
    """Update parameter arrays in place; returns (params, state)."""
    if cfg.optimizer == "sgd":
        for name, p in params.items():
            p -= cfg.learning_rate * grads[name]
        return params, state

    state["t"] += 1
    t = state["t"]
    for name, p in params.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm;
    returns the pre-clip norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def _check_dataset(name: str, ds: Dataset, mcfg: ModelConfig) -> None:
    if len(ds) == 0:
        raise ContractError(f"{name} dataset is empty")
    if ds.n_marks != mcfg.n_marks or ds.n_bins != mcfg.n_bins:
        raise ContractError(
            f"{name} dataset shape ({ds.n_marks}, {ds.n_bins}) does not match "
            f"model ({mcfg.n_marks}, {mcfg.n_bins})")
    ds.labels()


def train(cfg: TrainConfig, mcfg: ModelConfig, train_ds: Dataset,
          val_ds: Dataset) -> tuple[ParameterStore, TrainHistory]:
    """Fit a fresh model, returning the parameters of the epoch with the
    highest validation AUC together with the per-epoch history."""
    _check_dataset("training", train_ds, mcfg)
    _check_dataset("validation", val_ds, mcfg)
    val_labels = val_ds.labels()
    if (val_labels == 1).sum() == 0 or (val_labels == -1).sum() == 0:
        raise ContractError("validation set needs both classes for AUC model selection")

    params = init_params(mcfg, cfg.seed)
    blocks = dict(params.named_blocks())
    state = init_optimizer_state(blocks, cfg)
    shuffle_rng = np.random.default_rng([cfg.seed, 1])

    x_train = train_ds.signals()
    y_train = train_ds.labels()
    x_val = val_ds.signals()
    n = len(train_ds)

    history: list[EpochStats] = []
    best_epoch = 0
    best_auc = -np.inf
    best_params = params.copy()

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        loss_total = 0.0
        for batch_index, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            bf = forward_batch(x_train[idx], params, mcfg)
            root = nll_loss_batch(bf.logits, y_train[idx])
            loss_value = float(root.data)
            if not np.isfinite(loss_value):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}")
            loss_total += loss_value * idx.size
            ad.backward(root)
            grads = {name: bf.leaves[name].adjoint for name in blocks}
            clip_gradients(grads, cfg.grad_clip_norm)
            optimizer_step(blocks, grads, state, cfg)

        val_auc = auc(ScoredSet(predict_probs(x_val, params, mcfg), val_labels))
        history.append(EpochStats(epoch, loss_total / n, val_auc))
        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_params = params.copy()
        if epoch >= best_epoch + cfg.patience:
            break

    return best_params, TrainHistory(history, best_epoch, best_params)
