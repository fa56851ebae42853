"""Adam training loop with plateau learning-rate decay.

One trajectory is one sequence; state is reset between sequences (stateful
carry-over is an inference-time contract only). Per-batch gradients are the
average of per-sequence gradients of the mean step loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, TrainingError
from .model import ModelParams, backward, init_params, sequence_loss


@dataclass
class TrainConfig:
    lr0: float = 0.01
    decay_factor: float = 0.5
    patience: int = 3
    min_lr: float = 1e-5
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    w_y: float = 1.0
    w_t: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr0 <= 0:
            raise InvalidInputError("lr0 must be positive")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")


class _Adam:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.blocks().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.blocks().items()}
        self.t = 0

    def update(self, params: ModelParams, grads: dict, lr: float):
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g
            mh = self.m[k] / bc1
            vh = self.v[k] / bc2
            getattr(params, k)[...] -= lr * mh / (np.sqrt(vh) + cfg.eps)


def dataset_loss(params: ModelParams, sequences, cfg: TrainConfig) -> float:
    total = 0.0
    for X, T in sequences:
        loss, _, _ = sequence_loss(params, X, T, cfg.w_y, cfg.w_t)
        total += loss
    return total / len(sequences)


def train(train_seqs, val_seqs, hidden: int, cfg: TrainConfig,
          params: ModelParams | None = None, log=None):
    """Train on (features, targets) sequence pairs.

    Returns (best-validation ModelParams, per-epoch curve rows). When no
    validation set is given the final parameters are returned instead.
    """
    if not train_seqs:
        raise InvalidInputError("empty training set")
    if params is None:
        params = init_params(hidden, cfg.seed)
    else:
        params = params.copy()

    opt = _Adam(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.lr0
    # baseline on the starting parameters so fine-tuning can never regress
    best_val = dataset_loss(params, val_seqs, cfg) if val_seqs else math.inf
    best_params = params.copy()
    since_improve = 0
    curves = []

    n = len(train_seqs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        train_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            agg = None
            for i in idx:
                X, T = train_seqs[i]
                loss, grads = backward(params, X, T, cfg.w_y, cfg.w_t)
                if math.isnan(loss):
                    raise TrainingError(
                        f"loss became NaN at epoch {epoch}", epoch=epoch)
                train_loss += loss
                if agg is None:
                    agg = grads
                else:
                    for k in agg:
                        agg[k] += grads[k]
            for k in agg:
                agg[k] /= len(idx)
            opt.update(params, agg, lr)
        train_loss /= n

        if val_seqs:
            val_loss = dataset_loss(params, val_seqs, cfg)
            if math.isnan(val_loss):
                raise TrainingError(
                    f"validation loss became NaN at epoch {epoch}", epoch=epoch)
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= cfg.patience:
                    lr = max(lr * cfg.decay_factor, cfg.min_lr)
                    since_improve = 0
        else:
            val_loss = float("nan")
            best_params = params

        row = {"epoch": epoch, "train_loss": train_loss,
               "val_loss": val_loss, "lr": lr,
               "best_val_loss": best_val if val_seqs else float("nan")}
        curves.append(row)
        if log:
            log(row)

    return best_params, curves


def fine_tune(params: ModelParams, train_seqs, val_seqs, cfg: TrainConfig,
              log=None):
    """Continue training from trained parameters at a reduced learning rate."""
    cfg2 = replace(cfg, lr0=cfg.lr0 / 10.0)
    return train(train_seqs, val_seqs, params.hidden, cfg2, params=params,
                 log=log)
