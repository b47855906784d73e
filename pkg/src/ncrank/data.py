"""Dataset ingestion, filtering, leave-one-out splitting, and sampling.

External user/item ids are strings; after `filter_and_remap` everything
runs on dense internal ids (0..m-1 users, 0..n-1 items). Interaction sets
are immutable once built, so they can be shared freely across threads.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import warnings
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DataError
from .rng import Rng, derive_seed

MALFORMED_ABORT_FRACTION = 0.01


class RawInteraction(NamedTuple):
    user: str
    item: str
    ts: int


class LabeledTriplet(NamedTuple):
    u: int
    i: int
    j: int
    y: int


class InteractionSet:
    """Immutable (user, item, timestamp) triples on dense internal ids.

    Two views of the same rows are kept: per-user interactions ordered by
    (timestamp, item id) for split logic, and per-user item ids in
    ascending order for O(log) membership tests and sampling.
    """

    __slots__ = ("m", "n", "user_ids", "item_ids", "offsets",
                 "items_by_time", "ts_by_time", "items_sorted")

    def __init__(self, user_ids, item_ids, users, items, ts):
        self.m = len(user_ids)
        self.n = len(item_ids)
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ts = np.asarray(ts, dtype=np.int64)

        # Timestamp ties break toward the larger item id ("later").
        order = np.lexsort((items, ts, users))
        u_sorted = users[order]
        self.items_by_time = items[order]
        self.ts_by_time = ts[order]
        counts = np.bincount(u_sorted, minlength=self.m)
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

        by_id = np.lexsort((items, users))
        self.items_sorted = items[by_id]

    @property
    def n_interactions(self) -> int:
        return len(self.items_by_time)

    def user_items_by_time(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(item ids, timestamps) of user u, oldest first."""
        lo, hi = self.offsets[u], self.offsets[u + 1]
        return self.items_by_time[lo:hi], self.ts_by_time[lo:hi]

    def user_items(self, u: int) -> np.ndarray:
        """Item ids of user u, ascending."""
        lo, hi = self.offsets[u], self.offsets[u + 1]
        return self.items_sorted[lo:hi]

    def has(self, u: int, i: int) -> bool:
        row = self.user_items(u)
        k = np.searchsorted(row, i)
        return k < len(row) and row[k] == i


class SplitDataset:
    """Leave-one-out split: per-user train rows plus one val and one test item."""

    __slots__ = ("train", "val_items", "val_ts", "test_items", "test_ts")

    def __init__(self, train, val_items, val_ts, test_items, test_ts):
        self.train = train
        self.val_items = np.asarray(val_items, dtype=np.int64)
        self.val_ts = np.asarray(val_ts, dtype=np.int64)
        self.test_items = np.asarray(test_items, dtype=np.int64)
        self.test_ts = np.asarray(test_ts, dtype=np.int64)

    @property
    def n_interactions(self) -> int:
        return self.train.n_interactions + 2 * self.train.m

    def excluded_items(self, u: int) -> np.ndarray:
        """All items user u interacted with in any partition, ascending."""
        extra = np.array([self.val_items[u], self.test_items[u]], dtype=np.int64)
        return np.union1d(self.train.user_items(u), extra)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # Binary stream: wrap without taking ownership.
    return io.TextIOWrapper(source, encoding="utf-8"), False


def load_interactions(source, format: str = "movielens-dat") -> list[RawInteraction]:
    """Parse a rating log into raw interactions; the rating itself is discarded.

    movielens-dat lines look like "user::item::rating::timestamp"; csv has
    columns user,item,rating,timestamp with an optional header. Malformed
    lines are tolerated up to 1% of the file, then the whole load aborts.
    """
    if format not in ("movielens-dat", "csv"):
        raise DataError(f"unknown format {format!r} (expected movielens-dat or csv)")
    stream, owned = _open_text(source)
    try:
        out: list[RawInteraction] = []
        bad: list[int] = []
        total = 0
        if format == "csv":
            rows = csv.reader(stream)
        else:
            rows = (line.rstrip("\r\n").split("::") for line in stream)
        for lineno, fields in enumerate(rows, start=1):
            if not fields or (len(fields) == 1 and not fields[0].strip()):
                continue
            total += 1
            try:
                user, item, rating, ts = fields
                float(rating)
                ts = int(ts)
                if ts < 0 or not user or not item:
                    raise ValueError
            except (ValueError, TypeError):
                if lineno == 1 and format == "csv":
                    total -= 1  # optional header row
                    continue
                bad.append(lineno)
                continue
            out.append(RawInteraction(user, item, ts))
        if bad and len(bad) > MALFORMED_ABORT_FRACTION * total:
            shown = ", ".join(map(str, bad[:5]))
            raise DataError(
                f"{len(bad)} of {total} lines malformed (first at lines {shown}); "
                "aborting load"
            )
        if bad:
            warnings.warn(
                f"skipped {len(bad)} malformed lines (first at line {bad[0]})",
                stacklevel=2,
            )
        return out
    finally:
        if owned:
            stream.close()


def filter_and_remap(raw: list[RawInteraction], min_count: int = 10) -> InteractionSet:
    """Collapse duplicates, filter to a dense >=min_count core, remap ids.

    Duplicate (user, item) pairs keep the earliest timestamp. Filtering
    alternates between dropping light users and light items until neither
    rule fires (one pass is not enough: removing users can push items back
    under the threshold). Surviving external ids are assigned internal ids
    in lexicographic order.
    """
    if min_count < 1:
        raise DataError(f"min_count must be >= 1, got {min_count}")
    pairs: dict[tuple[str, str], int] = {}
    for r in raw:
        key = (r.user, r.item)
        old = pairs.get(key)
        if old is None or r.ts < old:
            pairs[key] = r.ts

    entries = list(pairs.items())
    while True:
        user_counts: dict[str, int] = {}
        item_counts: dict[str, int] = {}
        for (u, i), _ in entries:
            user_counts[u] = user_counts.get(u, 0) + 1
            item_counts[i] = item_counts.get(i, 0) + 1
        keep_u = {u for u, c in user_counts.items() if c >= min_count}
        keep_i = {i for i, c in item_counts.items() if c >= min_count}
        if len(keep_u) == len(user_counts) and len(keep_i) == len(item_counts):
            break
        entries = [e for e in entries if e[0][0] in keep_u and e[0][1] in keep_i]

    if not entries:
        raise DataError("dataset empty after filtering")

    user_ids = sorted({u for (u, _), _ in entries})
    item_ids = sorted({i for (_, i), _ in entries})
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}
    users = np.fromiter((user_index[u] for (u, _), _ in entries), np.int64, len(entries))
    items = np.fromiter((item_index[i] for (_, i), _ in entries), np.int64, len(entries))
    ts = np.fromiter((t for _, t in entries), np.int64, len(entries))
    return InteractionSet(user_ids, item_ids, users, items, ts)


def leave_one_out_split(data: InteractionSet) -> SplitDataset:
    """Hold out each user's latest item for test, second latest for validation."""
    m = data.m
    val_items = np.empty(m, dtype=np.int64)
    val_ts = np.empty(m, dtype=np.int64)
    test_items = np.empty(m, dtype=np.int64)
    test_ts = np.empty(m, dtype=np.int64)
    tr_users: list[np.ndarray] = []
    tr_items: list[np.ndarray] = []
    tr_ts: list[np.ndarray] = []
    for u in range(m):
        row_items, row_ts = data.user_items_by_time(u)
        if len(row_items) < 3:
            raise DataError(
                f"user {data.user_ids[u]!r} has {len(row_items)} interactions; "
                "need >= 3 to split"
            )
        test_items[u], test_ts[u] = row_items[-1], row_ts[-1]
        val_items[u], val_ts[u] = row_items[-2], row_ts[-2]
        tr_users.append(np.full(len(row_items) - 2, u, dtype=np.int64))
        tr_items.append(row_items[:-2])
        tr_ts.append(row_ts[:-2])
    train = InteractionSet(
        data.user_ids, data.item_ids,
        np.concatenate(tr_users), np.concatenate(tr_items), np.concatenate(tr_ts),
    )
    return SplitDataset(train, val_items, val_ts, test_items, test_ts)


def sample_triplets(train: InteractionSet, ratio: int, rng: Rng):
    """One epoch of labeled training triplets, as parallel arrays.

    For every observed (u, i) and each of `ratio` draws, an item j the user
    never interacted with is sampled uniformly, yielding (u, i, j, 1) and
    its mirror (u, j, i, 0). The epoch is therefore exactly class-balanced.
    Returns (users, left, right, labels), shuffled.
    """
    if ratio < 1:
        raise DataError(f"ratio must be >= 1, got {ratio}")
    row_len = np.diff(train.offsets)
    full = np.flatnonzero(row_len >= train.n)
    pos_users = np.repeat(np.arange(train.m, dtype=np.int64), row_len)
    pos_items = train.items_by_time
    if len(full):
        warnings.warn(
            f"skipping {len(full)} users who interacted with every item",
            stacklevel=2,
        )
        keep = ~np.isin(pos_users, full)
        pos_users, pos_items = pos_users[keep], pos_items[keep]

    slot_users = np.repeat(pos_users, ratio)
    slot_items = np.repeat(pos_items, ratio)
    key, start = rng.reserve(kernels.ATTEMPTS * len(slot_users))
    neg = kernels.sample_negatives(
        key, start, slot_users, train.offsets, train.items_sorted, train.n
    )

    users = np.concatenate([slot_users, slot_users])
    left = np.concatenate([slot_items, neg])
    right = np.concatenate([neg, slot_items])
    labels = np.concatenate([
        np.ones(len(slot_users)), np.zeros(len(slot_users)),
    ])
    perm = rng.permutation(len(users))
    return users[perm], left[perm], right[perm], labels[perm]


def sample_bpr_triplets(train: InteractionSet, ratio: int, rng: Rng):
    """One epoch of (u, i+, j-) triplets for BPR-OPT training, shuffled.

    Same draws as sample_triplets but without the mirrored negatives:
    BPR consumes only the positive orientation.
    """
    if ratio < 1:
        raise DataError(f"ratio must be >= 1, got {ratio}")
    row_len = np.diff(train.offsets)
    full = np.flatnonzero(row_len >= train.n)
    pos_users = np.repeat(np.arange(train.m, dtype=np.int64), row_len)
    pos_items = train.items_by_time
    if len(full):
        warnings.warn(
            f"skipping {len(full)} users who interacted with every item",
            stacklevel=2,
        )
        keep = ~np.isin(pos_users, full)
        pos_users, pos_items = pos_users[keep], pos_items[keep]
    users = np.repeat(pos_users, ratio)
    items = np.repeat(pos_items, ratio)
    key, start = rng.reserve(kernels.ATTEMPTS * len(users))
    neg = kernels.sample_negatives(
        key, start, users, train.offsets, train.items_sorted, train.n
    )
    perm = rng.permutation(len(users))
    return users[perm], items[perm], neg[perm]


def sample_eval_negatives(split: SplitDataset, u: int, count: int = 100,
                          seed: int = 0) -> np.ndarray:
    """Fixed per-(seed, user) candidate negatives for ranked evaluation.

    Draws distinct items the user never interacted with (train, validation
    or test). If fewer than `count` such items exist, returns all of them
    with a warning.
    """
    excluded = split.excluded_items(u)
    n = split.train.n
    pool = n - len(excluded)
    if pool <= 0:
        raise DataError(f"user {u} has no candidate negatives")
    if pool < count:
        warnings.warn(
            f"user {u} has only {pool} candidate negatives (asked for {count})",
            stacklevel=2,
        )
        mask = np.ones(n, dtype=bool)
        mask[excluded] = False
        return np.flatnonzero(mask).astype(np.int64)

    rng = Rng(derive_seed(seed, u))
    chosen: list[int] = []
    seen = set()
    while len(chosen) < count:
        for j in rng.below(n, 256):
            j = int(j)
            if j in seen:
                continue
            k = np.searchsorted(excluded, j)
            if k < len(excluded) and excluded[k] == j:
                continue
            seen.add(j)
            chosen.append(j)
            if len(chosen) == count:
                break
    return np.asarray(chosen, dtype=np.int64)


def dataset_fingerprint(split: SplitDataset) -> str:
    """sha256 over id maps and all split interactions; stable across runs."""
    h = hashlib.sha256()
    tr = split.train
    h.update(json.dumps([tr.user_ids, tr.item_ids]).encode())
    for arr in (tr.offsets, tr.items_by_time, tr.ts_by_time,
                split.val_items, split.val_ts, split.test_items, split.test_ts):
        h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
    return h.hexdigest()


def _write_tsv(path, users, items, ts):
    with open(path, "w", encoding="utf-8") as f:
        for u, i, t in zip(users, items, ts):
            f.write(f"{u}\t{i}\t{t}\n")


def _read_tsv(path):
    users, items, ts = [], [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                u, i, t = line.split("\t")
                users.append(int(u))
                items.append(int(i))
                ts.append(int(t))
            except ValueError:
                raise DataError(f"{path}: malformed line {lineno}: {line!r}") from None
    return (np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64),
            np.asarray(ts, dtype=np.int64))


def save_split(split: SplitDataset, outdir) -> None:
    """Persist a split as train/val/test TSVs plus id-map and stats sidecars."""
    os.makedirs(outdir, exist_ok=True)
    tr = split.train
    row_len = np.diff(tr.offsets)
    tr_users = np.repeat(np.arange(tr.m, dtype=np.int64), row_len)
    _write_tsv(os.path.join(outdir, "train.tsv"), tr_users, tr.items_by_time, tr.ts_by_time)
    users = np.arange(tr.m, dtype=np.int64)
    _write_tsv(os.path.join(outdir, "val.tsv"), users, split.val_items, split.val_ts)
    _write_tsv(os.path.join(outdir, "test.tsv"), users, split.test_items, split.test_ts)
    with open(os.path.join(outdir, "idmap.json"), "w", encoding="utf-8") as f:
        json.dump({"users": tr.user_ids, "items": tr.item_ids}, f)
    stats = {
        "m": tr.m,
        "n": tr.n,
        "interactions": int(split.n_interactions),
        "density": split.n_interactions / (tr.m * tr.n),
        "fingerprint": dataset_fingerprint(split),
    }
    with open(os.path.join(outdir, "stats.json"), "w", encoding="utf-8") as f:
        json.dump(stats, f, indent=2)


def load_split(indir) -> SplitDataset:
    """Load a split saved by save_split, verifying its fingerprint."""
    try:
        with open(os.path.join(indir, "idmap.json"), encoding="utf-8") as f:
            idmap = json.load(f)
        with open(os.path.join(indir, "stats.json"), encoding="utf-8") as f:
            stats = json.load(f)
    except FileNotFoundError as e:
        raise DataError(f"{indir} is not a saved split: missing {e.filename}") from None
    tu, ti, tt = _read_tsv(os.path.join(indir, "train.tsv"))
    vu, vi, vt = _read_tsv(os.path.join(indir, "val.tsv"))
    su, si, st = _read_tsv(os.path.join(indir, "test.tsv"))
    m = len(idmap["users"])
    if not (np.array_equal(vu, np.arange(m)) and np.array_equal(su, np.arange(m))):
        raise DataError(f"{indir}: val/test files must hold exactly one row per user")
    train = InteractionSet(idmap["users"], idmap["items"], tu, ti, tt)
    split = SplitDataset(train, vi, vt, si, st)
    got = dataset_fingerprint(split)
    if got != stats.get("fingerprint"):
        raise DataError(
            f"{indir}: fingerprint mismatch (stats.json says {stats.get('fingerprint')!r}, "
            f"files hash to {got!r})"
        )
    return split
