"""Mini-batch training loop for the burst gain regressors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .dataset import Corpus
from .models import ModelSpec, ModelWeights, build_model, burst_to_input


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 2e-4
    seed: int = 0
    early_stop: int | None = None
    variant: str = "dc_cnn"
    desk_scale: bool = False
    # dB-domain loss gradients blow up when a predicted gain crosses zero;
    # one such spike suppresses AdamW updates for ~1/(1-beta2) steps.
    clip_grad_norm: float | None = 3.0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    @classmethod
    def desk(cls, variant: str = "dc_cnn", seed: int = 0) -> "TrainConfig":
        """Laptop-scale profile: 50 epochs to pair with a 50-per-cell corpus."""
        return cls(epochs=50, variant=variant, seed=seed, desk_scale=True)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0


def _record_burst(record, variant: str):
    return record.dc if variant == "dc_cnn" else record.raw


def training_arrays(corpus: Corpus, spec: ModelSpec, split: str):
    """Stack one split into model inputs [N, 2, T] and scaled dB targets [N]."""
    records = corpus.by_split(split)
    if not records:
        raise ValueError(f"corpus has no '{split}' records; run split_corpus first")
    x = np.stack([burst_to_input(_record_burst(r, spec.variant), spec) for r in records])
    offset = 20.0 * math.log10(spec.input_scale)
    y = np.array([r.label.cw_rx_dbm + offset for r in records])
    return x, y


def _batch_loss(model: ModelWeights, x: np.ndarray, y: np.ndarray) -> float:
    with ag.no_grad():
        loss = ag.mse_db_loss(model.forward(ag.Tensor(x)), y)
    return float(loss.values)


def _eval_loss(model: ModelWeights, x: np.ndarray, y: np.ndarray, chunk: int = 256) -> float:
    total = 0.0
    for start in range(0, len(x), chunk):
        stop = min(start + chunk, len(x))
        total += _batch_loss(model, x[start:stop], y[start:stop]) * (stop - start)
    return total / len(x)


def train(corpus: Corpus, spec: ModelSpec, cfg: TrainConfig):
    """Train on the corpus splits and return the best-validation weights.

    Mini-batches are reshuffled per epoch from a seeded generator, so
    (corpus, config) fully determine the weight trajectory.
    """
    x_train, y_train = training_arrays(corpus, spec, "train")
    x_val, y_val = training_arrays(corpus, spec, "val")

    model = build_model(spec, init_seed=cfg.seed)
    model.train_seed = cfg.seed
    optimizer = ag.AdamW(model.parameters(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(cfg.seed)

    history = TrainHistory()
    best_val = math.inf
    best_params = None
    stale = 0

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(x_train))
        epoch_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb = ag.Tensor(x_train[batch])
            loss = ag.mse_db_loss(model.forward(xb), y_train[batch])
            value = float(loss.values)
            if not math.isfinite(value):
                raise ag.TrainingError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size + 1}"
                )
            optimizer.zero_grad()
            loss.backward()
            if cfg.clip_grad_norm is not None:
                ag.clip_gradient_norm(model.parameters(), cfg.clip_grad_norm)
            optimizer.step()
            epoch_sum += value * len(batch)
        history.train_loss.append(epoch_sum / len(order))
        val = _eval_loss(model, x_val, y_val)
        history.val_loss.append(val)
        if val < best_val:
            best_val = val
            best_params = {k: p.values.copy() for k, p in model.params.items()}
            history.best_epoch = epoch + 1
            stale = 0
        else:
            stale += 1
            if cfg.early_stop is not None and stale >= cfg.early_stop:
                break

    for name, values in best_params.items():
        model.params[name].values = values
        model.params[name].zero_grad()
    model.epoch = history.best_epoch
    model.train_loss = list(history.train_loss)
    model.val_loss = list(history.val_loss)
    return model, history
