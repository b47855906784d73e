"""Mini-batch training loop, plateau stopping, and the pre-training pipeline.

One epoch draws a fresh class-balanced set of mirrored triplets, shuffles
it, and applies Adam per mini-batch. Training stops when the epoch mean
loss stops improving by the plateau threshold (relative), or at the epoch
limit; the returned parameters come from the epoch with the best
validation HR@10. Everything is bit-reproducible from (seed, config,
dataset) in single-threaded mode.
"""

from __future__ import annotations

import json

import numpy as np

from .data import SplitDataset, sample_triplets
from .errors import ShapeError, TrainingDiverged
from .evaluation import evaluate
from .models import DncrModel, NbprModel, fuse_pretrained
from .numerics import AdamState, adam_step
from .rng import Rng, derive_seed

VAL_K = 10


class TrainConfig:
    """Knobs for one training run; defaults follow the experimental setup."""

    __slots__ = ("lr", "batch", "ratio", "max_epochs", "seed", "plateau")

    def __init__(self, lr: float = 0.001, batch: int = 256, ratio: int = 1,
                 max_epochs: int = 100, seed: int = 0, plateau: float = 0.001):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if batch < 1:
            raise ValueError(f"batch size must be >= 1, got {batch}")
        if ratio < 1:
            raise ValueError(f"sampling ratio must be >= 1, got {ratio}")
        if max_epochs < 0:
            raise ValueError(f"max_epochs must be >= 0, got {max_epochs}")
        if not 0.0 < plateau < 1.0:
            raise ValueError(f"plateau threshold must lie in (0, 1), got {plateau}")
        self.lr = lr
        self.batch = batch
        self.ratio = ratio
        self.max_epochs = max_epochs
        self.seed = seed
        self.plateau = plateau


class TrainHistory:
    """Per-epoch loss and validation metrics, plus raw batch loss sums.

    epoch_losses[e] is the mean per-instance BCE over epoch e, exactly
    sum(batch_loss_sums[e]) / sum(batch_sizes[e]).
    """

    __slots__ = ("epoch_losses", "val_hr", "val_ndcg", "best_epoch",
                 "batch_loss_sums", "batch_sizes")

    def __init__(self):
        self.epoch_losses: list[float] = []
        self.val_hr: list[float] = []
        self.val_ndcg: list[float] = []
        self.best_epoch: int | None = None
        self.batch_loss_sums: list[list[float]] = []
        self.batch_sizes: list[list[int]] = []

    @property
    def epochs(self) -> int:
        return len(self.epoch_losses)

    def to_json(self) -> str:
        return json.dumps({
            "epoch_losses": self.epoch_losses,
            "val_hr": self.val_hr,
            "val_ndcg": self.val_ndcg,
            "best_epoch": self.best_epoch,
            "batch_loss_sums": self.batch_loss_sums,
            "batch_sizes": self.batch_sizes,
        })


def train(model, split: SplitDataset, cfg: TrainConfig, eval_threads: int = 1):
    """Train in place; returns (best-validation model, history).

    The model object is mutated through the final epoch; the returned
    model is a snapshot from the epoch with the highest validation HR@10
    (earliest such epoch on ties). max_epochs = 0 returns the untouched
    initial model with an empty history.
    """
    tr = split.train
    if (model.m, model.n) != (tr.m, tr.n):
        raise ShapeError(
            f"model is for {model.m}x{model.n} but the split has {tr.m}x{tr.n}"
        )
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return model, history

    rng = Rng(cfg.seed)
    states = {name: AdamState(arr.shape, cfg.lr) for name, arr in model.tensors()}
    best_model = None
    best_hr = -1.0

    for epoch in range(cfg.max_epochs):
        users, left, right, labels = sample_triplets(tr, cfg.ratio, rng)
        sums: list[float] = []
        sizes: list[int] = []
        for start in range(0, len(users), cfg.batch):
            sl = slice(start, start + cfg.batch)
            loss_sum, grads = model.loss_and_grads(
                users[sl], left[sl], right[sl], labels[sl]
            )
            if not np.isfinite(loss_sum):
                raise TrainingDiverged(epoch, len(sums), loss_sum)
            params = model._tensor_dict()
            for name, grad in grads.items():
                adam_step(params[name], grad, states[name])
            sums.append(loss_sum)
            sizes.append(len(users[sl]))
        history.batch_loss_sums.append(sums)
        history.batch_sizes.append(sizes)
        history.epoch_losses.append(sum(sums) / sum(sizes))

        report = evaluate(model, split, k=VAL_K, seed=cfg.seed,
                          target="validation", threads=eval_threads)
        history.val_hr.append(report.hr)
        history.val_ndcg.append(report.ndcg)
        if report.hr > best_hr:
            best_hr = report.hr
            best_model = model.copy()
            history.best_epoch = epoch

        if epoch > 0:
            prev, cur = history.epoch_losses[-2], history.epoch_losses[-1]
            if (prev - cur) / prev < cfg.plateau:
                break

    return best_model, history


def pretrain_pipeline(split: SplitDataset, factors: int, cfg: TrainConfig,
                      alpha: float = 0.5, layers: int = 4,
                      eval_threads: int = 1):
    """Train NBPR and DNCR from scratch, fuse, then fine-tune the fusion.

    Donor runs and the fine-tune run use independent sub-seeds of
    cfg.seed. Returns (trained NeuPR model, {"nbpr", "dncr", "neupr"}
    histories).
    """
    tr = split.train

    def sub_cfg(tag: int) -> TrainConfig:
        return TrainConfig(lr=cfg.lr, batch=cfg.batch, ratio=cfg.ratio,
                           max_epochs=cfg.max_epochs,
                           seed=derive_seed(cfg.seed, tag), plateau=cfg.plateau)

    nbpr_cfg = sub_cfg(1)
    nbpr = NbprModel(tr.m, tr.n, factors, seed=nbpr_cfg.seed)
    nbpr, nbpr_hist = train(nbpr, split, nbpr_cfg, eval_threads)

    dncr_cfg = sub_cfg(2)
    dncr = DncrModel(tr.m, tr.n, factors, seed=dncr_cfg.seed, layers=layers)
    dncr, dncr_hist = train(dncr, split, dncr_cfg, eval_threads)

    fused = fuse_pretrained(nbpr, dncr, alpha)
    fused, neupr_hist = train(fused, split, sub_cfg(3), eval_threads)
    return fused, {"nbpr": nbpr_hist, "dncr": dncr_hist, "neupr": neupr_hist}
