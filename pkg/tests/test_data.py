"""Ingestion, filtering, splitting, sampling, and persistence."""

import io
import json

import numpy as np
import pytest

from ncrank import data, kernels
from ncrank.data import (
    InteractionSet,
    RawInteraction,
    dataset_fingerprint,
    filter_and_remap,
    leave_one_out_split,
    load_interactions,
    load_split,
    sample_bpr_triplets,
    sample_eval_negatives,
    sample_triplets,
    save_split,
)
from ncrank.errors import DataError
from ncrank.rng import Rng


def rows_to_set(rows, min_count=1):
    raw = [RawInteraction(u, i, t) for u, i, t in rows]
    return filter_and_remap(raw, min_count)


# ---------------------------------------------------------------- loading


def test_load_dat_format():
    text = "u1::i1::5::100\nu1::i2::3::50\nu2::i1::4::10\n"
    got = load_interactions(io.StringIO(text), "movielens-dat")
    assert got == [
        RawInteraction("u1", "i1", 100),
        RawInteraction("u1", "i2", 50),
        RawInteraction("u2", "i1", 10),
    ]


def test_load_csv_with_and_without_header():
    body = "a,x,1,5\nb,y,2,6\n"
    with_header = "user,item,rating,timestamp\n" + body
    assert (load_interactions(io.StringIO(with_header), "csv")
            == load_interactions(io.StringIO(body), "csv"))


def test_load_csv_from_bytes_and_blank_lines():
    blob = b"a,x,1,5\n\nb,y,2,6\n"
    got = load_interactions(blob, "csv")
    assert [r.user for r in got] == ["a", "b"]


def test_load_rejects_unknown_format():
    with pytest.raises(DataError):
        load_interactions(io.StringIO(""), "parquet")


def test_load_tolerates_sparse_corruption():
    lines = [f"u{k}::i{k}::1::{k}" for k in range(300)]
    lines[150] = "garbage line"
    with pytest.warns(UserWarning, match="malformed"):
        got = load_interactions(io.StringIO("\n".join(lines)), "movielens-dat")
    assert len(got) == 299


def test_load_aborts_on_heavy_corruption():
    lines = ["u::i::1::1", "broken", "also broken", "u2::i2::1::2"]
    with pytest.raises(DataError, match="lines 2, 3"):
        load_interactions(io.StringIO("\n".join(lines)), "movielens-dat")


def test_load_rejects_negative_timestamp():
    with pytest.raises(DataError):
        load_interactions(io.StringIO("u::i::1::-5\n"), "movielens-dat")


# ------------------------------------------------------- filter and remap


def test_duplicates_keep_earliest_timestamp():
    built = rows_to_set([
        ("a", "x", 30), ("a", "x", 10), ("a", "x", 20),
        ("a", "y", 1), ("a", "z", 2),
    ])
    items, ts = built.user_items_by_time(0)
    x = built.item_ids.index("x")
    assert ts[list(items).index(x)] == 10


def test_iterative_filtering_cascades():
    # u1 holds items p,q alive; dropping u1 (2 interactions < 3) must also
    # drop p and q on the next pass, which then drops u2 under the
    # threshold as well
    rows = [
        ("u1", "p", 1), ("u1", "q", 2),
        ("u2", "p", 1), ("u2", "q", 2), ("u2", "r", 3),
        ("u3", "r", 1), ("u3", "s", 2), ("u3", "t", 3),
        ("u4", "r", 1), ("u4", "s", 2), ("u4", "t", 3),
        ("u5", "r", 1), ("u5", "s", 2), ("u5", "t", 3),
    ]
    built = rows_to_set(rows, min_count=3)
    assert built.user_ids == ["u3", "u4", "u5"]
    assert built.item_ids == ["r", "s", "t"]


def test_filtering_can_empty_the_dataset():
    with pytest.raises(DataError, match="empty"):
        rows_to_set([("a", "x", 1), ("b", "y", 2)], min_count=2)


def test_remap_is_lexicographic():
    built = rows_to_set([("b", "z", 1), ("a", "y", 2), ("a", "z", 3), ("b", "y", 4)])
    assert built.user_ids == ["a", "b"]
    assert built.item_ids == ["y", "z"]
    assert built.m == 2 and built.n == 2


def test_time_order_breaks_ties_by_item_id():
    built = rows_to_set([("a", "q", 7), ("a", "p", 7), ("a", "r", 3)])
    items, ts = built.user_items_by_time(0)
    # r first (ts 3), then p before q at equal ts
    assert [built.item_ids[i] for i in items] == ["r", "p", "q"]
    assert list(ts) == [3, 7, 7]


def test_membership_helpers():
    built = rows_to_set([("a", "x", 1), ("a", "y", 2), ("b", "y", 3)])
    y = built.item_ids.index("y")
    x = built.item_ids.index("x")
    assert built.has(0, x) and built.has(0, y) and built.has(1, y)
    assert not built.has(1, x)
    assert built.n_interactions == 3


# ------------------------------------------------------------- splitting


def test_leave_one_out_uses_latest_two():
    built = rows_to_set([
        ("a", "w", 4), ("a", "x", 3), ("a", "y", 2), ("a", "z", 1),
        ("b", "w", 1), ("b", "x", 2), ("b", "y", 3),
    ])
    split = leave_one_out_split(built)
    ids = built.item_ids
    assert ids[split.test_items[0]] == "w"
    assert ids[split.val_items[0]] == "x"
    assert ids[split.test_items[1]] == "y"
    assert ids[split.val_items[1]] == "x"
    # train retains the rest
    assert [ids[i] for i in split.train.user_items_by_time(0)[0]] == ["z", "y"]
    assert split.n_interactions == 7


def test_split_needs_three_interactions():
    built = rows_to_set([("a", "x", 1), ("a", "y", 2), ("b", "x", 1), ("b", "y", 2)])
    with pytest.raises(DataError, match="need >= 3"):
        leave_one_out_split(built)


def test_excluded_items_cover_all_partitions():
    built = rows_to_set([("a", "w", 1), ("a", "x", 2), ("a", "y", 3), ("a", "z", 4)])
    split = leave_one_out_split(built)
    assert np.array_equal(split.excluded_items(0), np.arange(4))


# -------------------------------------------------------------- sampling


def test_triplets_mirror_and_balance(blocks_split):
    tr = blocks_split.train
    users, left, right, labels = sample_triplets(tr, 2, Rng(0))
    assert len(users) == 2 * 2 * tr.n_interactions
    assert (labels == 1).sum() == (labels == 0).sum()

    pos = labels == 1
    pos_set = set(zip(users[pos], left[pos], right[pos]))
    neg_set = set(zip(users[~pos], right[~pos], left[~pos]))
    assert pos_set == neg_set  # every negative is the swap of a positive

    for u, i, j in list(pos_set)[:500]:
        assert tr.has(u, i)
        assert not tr.has(u, j)


def test_triplets_cover_every_positive(blocks_split):
    tr = blocks_split.train
    users, left, right, labels = sample_triplets(tr, 1, Rng(3))
    pos = labels == 1
    got = sorted(zip(users[pos], left[pos]))
    row_len = np.diff(tr.offsets)
    want = sorted(zip(np.repeat(np.arange(tr.m), row_len), tr.items_by_time))
    assert got == want


def test_triplets_deterministic(blocks_split):
    a = sample_triplets(blocks_split.train, 1, Rng(5))
    b = sample_triplets(blocks_split.train, 1, Rng(5))
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_triplets_skip_full_coverage_users():
    # user "a" has every item; only "b" rows can be sampled
    rows = [("a", c, k) for k, c in enumerate("wxyz")]
    rows += [("b", "w", 1), ("b", "x", 2)]
    built = rows_to_set(rows)
    with pytest.warns(UserWarning, match="every item"):
        users, left, right, labels = sample_triplets(built, 1, Rng(0))
    assert set(users) == {built.user_ids.index("b")}


def test_triplets_ratio_validation(blocks_split):
    with pytest.raises(DataError):
        sample_triplets(blocks_split.train, 0, Rng(0))


def test_bpr_triplets_are_positive_oriented(blocks_split):
    tr = blocks_split.train
    users, items, neg = sample_bpr_triplets(tr, 1, Rng(1))
    assert len(users) == tr.n_interactions
    for k in range(0, len(users), 37):
        assert tr.has(users[k], items[k])
        assert not tr.has(users[k], neg[k])


def test_eval_negatives_disjoint_and_deterministic(blocks_split):
    for u in (0, 7, 199):
        negs = sample_eval_negatives(blocks_split, u, 50, seed=4)
        assert len(negs) == 50
        assert len(np.unique(negs)) == 50
        assert not np.intersect1d(negs, blocks_split.excluded_items(u)).size
        again = sample_eval_negatives(blocks_split, u, 50, seed=4)
        assert np.array_equal(negs, again)
        assert not np.array_equal(
            negs, sample_eval_negatives(blocks_split, u, 50, seed=5))


def test_eval_negatives_small_pool_returns_all(blocks_split):
    with pytest.warns(UserWarning, match="only 80"):
        negs = sample_eval_negatives(blocks_split, 0, 100, seed=0)
    assert len(negs) == 80
    assert not np.intersect1d(negs, blocks_split.excluded_items(0)).size


def test_eval_negatives_empty_pool_raises():
    rows = [("a", c, k) for k, c in enumerate("wxyz")]
    rows += [("b", c, k) for k, c in enumerate("wxy")]
    split = leave_one_out_split(rows_to_set(rows))
    with pytest.raises(DataError):
        sample_eval_negatives(split, 0, 10, seed=0)


def test_negative_sampler_exact_when_pool_is_tiny():
    # one candidate left: rejection must fall through to the exact path
    # and still return the single non-member every time
    rows = [("a", f"i{k:02d}", k) for k in range(48)]
    rows += [("b", "i00", 0), ("b", "i01", 1), ("b", "i48", 2)]
    built = rows_to_set(rows)
    assert built.n == 49
    a = built.user_ids.index("a")
    only = np.setdiff1d(np.arange(49), built.user_items(a))
    users = np.full(64, a, dtype=np.int64)
    rng = Rng(123)
    key, start = rng.reserve(kernels.ATTEMPTS * len(users))
    neg = kernels.sample_negatives(
        key, start, users, built.offsets, built.items_sorted, built.n)
    assert np.array_equal(np.unique(neg), only)


# ----------------------------------------------------------- persistence


def test_fingerprint_tracks_content(blocks_split, mini_split):
    assert dataset_fingerprint(blocks_split) == dataset_fingerprint(blocks_split)
    assert dataset_fingerprint(blocks_split) != dataset_fingerprint(mini_split)


def test_save_load_round_trip(tmp_path, mini_split):
    save_split(mini_split, tmp_path / "out")
    loaded = load_split(tmp_path / "out")
    assert dataset_fingerprint(loaded) == dataset_fingerprint(mini_split)
    assert loaded.train.user_ids == mini_split.train.user_ids
    assert np.array_equal(loaded.test_items, mini_split.test_items)
    assert np.array_equal(loaded.train.items_by_time,
                          mini_split.train.items_by_time)

    stats = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert stats["m"] == 10 and stats["n"] == 10
    assert stats["interactions"] == mini_split.n_interactions
    assert stats["fingerprint"] == dataset_fingerprint(mini_split)


def test_load_detects_tampering(tmp_path, mini_split):
    save_split(mini_split, tmp_path / "out")
    train = tmp_path / "out" / "train.tsv"
    lines = train.read_text().splitlines()
    first = lines[0].split("\t")
    first[2] = str(int(first[2]) + 1)
    lines[0] = "\t".join(first)
    train.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match="fingerprint"):
        load_split(tmp_path / "out")


def test_load_split_missing_dir(tmp_path):
    with pytest.raises(DataError, match="not a saved split"):
        load_split(tmp_path / "nope")
