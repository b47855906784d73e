"""Reference rankers: item popularity and BPR matrix factorization.

Both plug into the same evaluation harness and model-file container as
the neural models. BPR keeps its original optimizer (per-triplet SGD with
L2 regularization); the trainer's epoch and stopping conventions apply.
"""

from __future__ import annotations

import numpy as np

from .data import InteractionSet, SplitDataset, sample_bpr_triplets
from .errors import TrainingDiverged
from .evaluation import evaluate
from .models import _ModelBase, _register
from .numerics import INIT_STD, sigmoid
from .ranking import RankedList
from .rng import Rng
from .trainer import TrainHistory

DEFAULT_REG = 0.01


def rank_by_score(user: int, candidates, scores, k: int) -> RankedList:
    """Descending score, ties toward the smaller item id.

    Shared by every score-based ranker; shifting all scores by a constant
    cannot change the result.
    """
    ids = np.asarray(candidates, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    k = min(k, len(ids))
    order = np.lexsort((ids, -scores))
    return RankedList(user=int(user), items=ids[order[:k]], k=k)


@_register
class ItemPopModel(_ModelBase):
    """Non-personalized ranker: items ordered by training interaction count."""

    kind = "itempop"

    def __init__(self, counts, m: int = 0, meta=None):
        self.counts = np.asarray(counts, dtype=np.float64)
        self.m = m
        self.n = len(self.counts)
        self.factors = 0
        self.seed = 0
        self.meta = dict(meta or {})

    @classmethod
    def fit(cls, train: InteractionSet, meta=None):
        counts = np.bincount(train.items_by_time, minlength=train.n)
        return cls(counts.astype(np.float64), train.m, meta)

    @classmethod
    def _from_tensors(cls, header, tensors):
        return cls(tensors["counts"], header["m"], header.get("meta", {}))

    def tensors(self):
        return [("counts", self.counts)]

    def rank(self, u: int, candidates, k: int) -> RankedList:
        ids = np.asarray(candidates, dtype=np.int64)
        return rank_by_score(u, ids, self.counts[ids], k)


def itempop_rank(table, candidates, k: int) -> RankedList:
    """Rank candidates by popularity; `table` is a per-item count array."""
    ids = np.asarray(candidates, dtype=np.int64)
    counts = np.asarray(table, dtype=np.float64)
    return rank_by_score(-1, ids, counts[ids], k)


@_register
class BprModel(_ModelBase):
    """Matrix factorization trained with the BPR-OPT criterion.

    Scores are plain inner products; the pairwise score of (i, j) is their
    difference, so rankings come from one score pass per user.
    """

    kind = "bpr"

    def __init__(self, m, n, factors, seed, lr: float = 0.001,
                 reg: float = DEFAULT_REG, meta=None):
        self.m, self.n, self.factors, self.seed = m, n, factors, seed
        self.meta = dict(meta or {})
        self.meta.setdefault("lr", lr)
        self.meta.setdefault("reg", reg)
        rng = Rng(seed)
        self.U = rng.normal((m, factors), 0.0, INIT_STD)
        self.V = rng.normal((n, factors), 0.0, INIT_STD)

    @classmethod
    def _from_tensors(cls, header, tensors):
        self = cls.__new__(cls)
        self.m, self.n = header["m"], header["n"]
        self.factors, self.seed = header["factors"], header["seed"]
        self.meta = dict(header.get("meta", {}))
        self.U, self.V = tensors["U"], tensors["V"]
        return self

    @property
    def lr(self) -> float:
        return float(self.meta.get("lr", 0.001))

    @property
    def reg(self) -> float:
        return float(self.meta.get("reg", DEFAULT_REG))

    def tensors(self):
        return [("U", self.U), ("V", self.V)]

    def score(self, u, i, j):
        """x_hat = U_u . V_i - U_u . V_j; antisymmetric in (i, j)."""
        return np.sum(self.U[u] * (self.V[i] - self.V[j]), axis=-1)

    def triplet_loss(self, u: int, i: int, j: int) -> float:
        xhat = float(self.U[u] @ (self.V[i] - self.V[j]))
        reg_term = self.reg * (
            float(self.U[u] @ self.U[u]) + float(self.V[i] @ self.V[i])
            + float(self.V[j] @ self.V[j])
        )
        return float(np.logaddexp(0.0, -xhat)) + reg_term

    def sgd_step(self, u: int, i: int, j: int) -> float:
        """One per-triplet SGD update; returns the pre-update loss."""
        Uu, Vi, Vj = self.U[u], self.V[i], self.V[j]
        diff = Vi - Vj
        xhat = float(Uu @ diff)
        loss = float(np.logaddexp(0.0, -xhat)) + self.reg * (
            float(Uu @ Uu) + float(Vi @ Vi) + float(Vj @ Vj)
        )
        coef = -sigmoid(-xhat)
        lr, reg2 = self.lr, 2.0 * self.reg
        gU = coef * diff + reg2 * Uu
        gVi = coef * Uu + reg2 * Vi
        gVj = -coef * Uu + reg2 * Vj
        Uu -= lr * gU
        Vi -= lr * gVi
        Vj -= lr * gVj
        return loss

    def rank(self, u: int, candidates, k: int) -> RankedList:
        return mf_topk(self, u, candidates, k)


def mf_topk(model: BprModel, u: int, candidates, k: int) -> RankedList:
    """Rank candidates by the factorization score U_u . V_c."""
    ids = np.asarray(candidates, dtype=np.int64)
    return rank_by_score(u, ids, model.V[ids] @ model.U[u], k)


def bpr_train(split: SplitDataset, factors: int, cfg,
              reg: float = DEFAULT_REG, eval_threads: int = 1):
    """Train BPR-MF with per-triplet SGD under the trainer's conventions.

    Epochs resample fresh (u, i+, j-) triplets; stopping follows the same
    relative loss-plateau rule; the best validation-HR@10 snapshot is
    returned. cfg is a trainer.TrainConfig; its batch size is ignored
    (BPR updates per triplet, as the original method does).
    """
    tr = split.train
    model = BprModel(tr.m, tr.n, factors, seed=cfg.seed, lr=cfg.lr, reg=reg)
    rng = Rng(cfg.seed)
    history = TrainHistory()
    best_model = None
    best_hr = -1.0

    for epoch in range(cfg.max_epochs):
        users, pos, neg = sample_bpr_triplets(tr, cfg.ratio, rng)
        total = 0.0
        for t in range(len(users)):
            loss = model.sgd_step(int(users[t]), int(pos[t]), int(neg[t]))
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, t, loss)
            total += loss
        history.batch_loss_sums.append([total])
        history.batch_sizes.append([len(users)])
        history.epoch_losses.append(total / len(users))

        report = evaluate(model, split, k=10, seed=cfg.seed,
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

    if best_model is None:
        return model, history
    return best_model, history
