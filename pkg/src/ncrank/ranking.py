"""Pairwise preference rule and tournament top-K selection.

A model orders items for a user only through ordered-pair probabilities,
so selection runs as K tournament passes: scan the remaining candidates
in ascending item-id order and keep the challenger whenever it strictly
beats the running champion. For models whose comparisons happen to be
intransitive the result depends on scan order; fixing ascending ids makes
it reproducible.
"""

from __future__ import annotations

import json
import warnings
from typing import NamedTuple

import numpy as np

from .rng import Rng

# Candidate pools up to this size get one batched all-pairs forward; larger
# pools fall back to scanning with on-demand batches.
MATRIX_LIMIT = 256
SCAN_CHUNK = 1024


class RankedList(NamedTuple):
    user: int
    items: np.ndarray
    k: int

    def to_json(self) -> str:
        return json.dumps({"user": int(self.user), "items": [int(i) for i in self.items]})


def write_ranked_jsonl(path, ranked_lists) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in ranked_lists:
            f.write(r.to_json() + "\n")


def prefer(model, u: int, i: int, j: int) -> bool:
    """True iff the model puts i ahead of j for user u.

    Exact probability ties break toward the smaller item id. Both
    orientations are evaluated; no model-specific score shortcut.
    """
    if i == j:
        raise ValueError(f"cannot compare item {i} with itself")
    a = model.forward(u, i, j)
    b = model.forward(u, j, i)
    if a != b:
        return a > b
    return i < j


def _prefer_matrix(model, u: int, ids: np.ndarray) -> np.ndarray:
    """Boolean strict-preference matrix over `ids` (tie-break included)."""
    M = len(ids)
    left = np.repeat(ids, M)
    right = np.tile(ids, M)
    S = model.forward(np.full(M * M, u, dtype=np.int64), left, right).reshape(M, M)
    return (S > S.T) | ((S == S.T) & (ids[:, None] < ids[None, :]))


def _scan_pass_matrix(pref: np.ndarray, alive: np.ndarray) -> int:
    champ = alive[0]
    for c in alive[1:]:
        if pref[c, champ]:
            champ = c
    return champ


def _scan_pass_batched(model, u: int, ids: np.ndarray) -> int:
    """One tournament pass over `ids` (ascending), batching forward calls.

    The champion only moves forward through the list, so each batch is
    compared against a fixed champion and re-batching happens once per
    champion change.
    """
    champ = int(ids[0])
    pos = 1
    while pos < len(ids):
        chunk = ids[pos:pos + SCAN_CHUNK]
        uu = np.full(len(chunk), u, dtype=np.int64)
        cc = np.full(len(chunk), champ, dtype=np.int64)
        a = model.forward(uu, chunk, cc)
        b = model.forward(uu, cc, chunk)
        beats = (a > b) | ((a == b) & (chunk < champ))
        hit = np.flatnonzero(beats)
        if len(hit) == 0:
            pos += len(chunk)
        else:
            champ = int(chunk[hit[0]])
            pos += hit[0] + 1
    return champ


def top_k(model, u: int, candidates, k: int, strategy: str = "auto") -> RankedList:
    """Select the K most preferred candidates by tournament passes.

    Each pass scans the not-yet-selected candidates in ascending item-id
    order and keeps the item that survives every pairwise comparison.
    Strategies "matrix" (precompute all pairs) and "scan" (batch against
    the running champion) produce identical rankings; "auto" picks by
    candidate count.
    """
    ids = np.asarray(candidates, dtype=np.int64)
    if ids.ndim != 1 or len(ids) == 0:
        raise ValueError("candidates must be a non-empty 1-d list of item ids")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("candidates contain duplicate item ids")
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if k > len(ids):
        warnings.warn(
            f"K={k} exceeds the {len(ids)} candidates; ranking all of them",
            stacklevel=2,
        )
        k = len(ids)
    if strategy not in ("auto", "matrix", "scan"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "auto":
        strategy = "matrix" if len(ids) <= MATRIX_LIMIT else "scan"

    ids = np.sort(ids)
    selected = []
    if strategy == "matrix":
        pref = _prefer_matrix(model, u, ids)
        alive = list(range(len(ids)))
        for _ in range(k):
            champ = _scan_pass_matrix(pref, alive)
            selected.append(int(ids[champ]))
            alive.remove(champ)
    else:
        alive = ids
        for _ in range(k):
            champ = _scan_pass_batched(model, u, alive)
            selected.append(champ)
            alive = alive[alive != champ]
    return RankedList(user=int(u), items=np.asarray(selected, dtype=np.int64), k=k)


def transitivity_audit(model, u: int, items, sample_count: int = 0,
                       seed: int = 0) -> int:
    """Count preference cycles (i > j > k but not i > k) among `items`.

    sample_count = 0 checks every ordered triple of distinct items;
    otherwise that many random triples are drawn. The count is reported,
    not judged: deep pairwise models may legitimately be intransitive.
    """
    ids = np.asarray(items, dtype=np.int64)
    if len(ids) < 3:
        raise ValueError(f"need at least 3 items to audit, got {len(ids)}")
    if sample_count == 0:
        P = _prefer_matrix(model, u, ids).astype(np.int64)
        # (P @ P)[i, k] counts j with i>j>k; multiply by "not i>k" and sum.
        # i == k contributes nothing since P is antisymmetric off-diagonal.
        return int(((P @ P) * (1 - P)).sum())

    rng = Rng(seed)
    M = len(ids)
    violations = 0
    remaining = sample_count
    while remaining > 0:
        batch = min(remaining, 4096)
        tri = rng.below(M, 3 * batch).reshape(3, batch)
        distinct = ((tri[0] != tri[1]) & (tri[1] != tri[2]) & (tri[0] != tri[2]))
        a, b, c = ids[tri[0][distinct]], ids[tri[1][distinct]], ids[tri[2][distinct]]
        if len(a) == 0:
            continue
        uu = np.full(len(a), u, dtype=np.int64)

        def wins(x, y):
            f = model.forward(uu, x, y)
            r = model.forward(uu, y, x)
            return (f > r) | ((f == r) & (x < y))

        bad = wins(a, b) & wins(b, c) & ~wins(a, c)
        violations += int(bad.sum())
        remaining -= len(a)
    return violations
