"""Leave-one-out ranking evaluation: HR@K and NDCG@K over sampled negatives.

Each user's held-out item is ranked among 100 fixed per-(seed, user)
sampled negatives. Only the truncated list matters for both metrics, so
the tournament runs K passes, never the full 101.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .data import SplitDataset, sample_eval_negatives
from .ranking import RankedList


def hit_ratio(ranked: RankedList, target: int, k: int | None = None) -> int:
    """1 iff the target appears in the first K ranked items."""
    k = ranked.k if k is None else k
    return int(target in ranked.items[:k])


def ndcg_at_k(ranked: RankedList, target: int, k: int | None = None) -> float:
    """1/log2(rank+1) for the target's 1-based rank, 0 beyond K.

    Single-relevant-item NDCG: the ideal list puts the target first for a
    DCG of 1, so no separate normalization term appears.
    """
    k = ranked.k if k is None else k
    hits = np.flatnonzero(ranked.items[:k] == target)
    if len(hits) == 0:
        return 0.0
    return 1.0 / math.log2(hits[0] + 2.0)


class EvalReport:
    """Aggregated metrics plus each user's target rank (None if beyond K)."""

    __slots__ = ("k", "seed", "hr", "ndcg", "per_user")

    def __init__(self, k, seed, hr, ndcg, per_user):
        self.k = k
        self.seed = seed
        self.hr = hr
        self.ndcg = ndcg
        self.per_user = per_user

    def to_json(self) -> str:
        users = []
        for user, rank in self.per_user:
            entry = {"user": int(user)}
            if rank is not None:
                entry["rank"] = int(rank)
            users.append(entry)
        return json.dumps(
            {"k": self.k, "hr": self.hr, "ndcg": self.ndcg, "per_user": users}
        )

    def csv_row(self, model: str, factors: int, ratio: int) -> str:
        return f"{model},{factors},{ratio},{self.k},{self.hr:.6f},{self.ndcg:.6f}"


CSV_HEADER = "model,factors,ratio,k,hr,ndcg"


def evaluate(ranker, split: SplitDataset, k: int = 10, negatives: int = 100,
             seed: int = 0, target: str = "test", threads: int = 1) -> EvalReport:
    """Rank each user's held-out item among sampled negatives.

    `ranker` is anything with rank(u, candidates, k) -> RankedList over
    frozen state; users evaluate independently (and in parallel when
    threads > 1) and aggregate in user order, so results do not depend on
    thread scheduling. The negative sample for a user depends only on
    (seed, user), never on the target partition, so validation and test
    metrics stay comparable.
    """
    if target not in ("test", "validation"):
        raise ValueError(f"target must be 'test' or 'validation', got {target!r}")
    targets = split.test_items if target == "test" else split.val_items

    def one_user(u: int):
        tgt = int(targets[u])
        negs = sample_eval_negatives(split, u, negatives, seed)
        candidates = np.append(negs, tgt)
        ranked = ranker.rank(u, candidates, k)
        hits = np.flatnonzero(ranked.items == tgt)
        rank = int(hits[0]) + 1 if len(hits) else None
        return rank

    users = range(split.train.m)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            ranks = list(pool.map(one_user, users))
    else:
        ranks = [one_user(u) for u in users]

    per_user = list(zip(users, ranks))
    hr = float(np.mean([1.0 if r is not None else 0.0 for r in ranks]))
    ndcg = float(np.mean([
        1.0 / math.log2(r + 1.0) if r is not None else 0.0 for r in ranks
    ]))
    return EvalReport(k=k, seed=seed, hr=hr, ndcg=ndcg, per_user=per_user)
