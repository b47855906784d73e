"""Popularity and BPR-MF baselines."""

import math

import numpy as np
import pytest

from ncrank.baselines import (
    BprModel,
    ItemPopModel,
    bpr_train,
    itempop_rank,
    mf_topk,
    rank_by_score,
)
from ncrank.evaluation import evaluate
from ncrank.models import load_model, save_model
from ncrank.trainer import TrainConfig

pytestmark = pytest.mark.filterwarnings("ignore:user .* has only")


# ---------------------------------------------------------- rank_by_score


def test_rank_by_score_orders_and_breaks_ties():
    ids = np.array([9, 4, 7, 1])
    scores = np.array([2.0, 5.0, 2.0, 1.0])
    got = rank_by_score(0, ids, scores, 3)
    assert np.array_equal(got.items, [4, 7, 9])  # 7 before 9 on the tie
    assert got.k == 3 and got.user == 0


def test_rank_by_score_shift_invariant():
    rng = np.random.default_rng(0)
    ids = np.arange(30)
    scores = rng.normal(size=30)
    base = rank_by_score(1, ids, scores, 10)
    shifted = rank_by_score(1, ids, scores + 123.456, 10)
    assert np.array_equal(base.items, shifted.items)


def test_rank_by_score_clamps_k():
    got = rank_by_score(0, np.array([3, 1]), np.array([1.0, 2.0]), 10)
    assert np.array_equal(got.items, [1, 3]) and got.k == 2


# --------------------------------------------------------------- ItemPop


def test_itempop_counts_are_train_frequencies(blocks_split):
    tr = blocks_split.train
    model = ItemPopModel.fit(tr)
    want = np.bincount(tr.items_by_time, minlength=tr.n)
    assert np.array_equal(model.counts, want)
    assert model.n == tr.n and model.m == tr.m


def test_itempop_is_user_independent(blocks_split):
    model = ItemPopModel.fit(blocks_split.train)
    cands = np.arange(100)
    first = model.rank(0, cands, 10)
    for u in (3, 77, 199):
        assert np.array_equal(model.rank(u, cands, 10).items, first.items)


def test_itempop_rank_matches_model(blocks_split):
    tr = blocks_split.train
    model = ItemPopModel.fit(tr)
    cands = np.array([5, 80, 17, 42])
    by_table = itempop_rank(model.counts, cands, 3)
    assert np.array_equal(by_table.items, model.rank(0, cands, 3).items)


def test_itempop_container_round_trip(tmp_path, blocks_split):
    model = ItemPopModel.fit(blocks_split.train)
    save_model(model, tmp_path / "pop.ncr")
    back = load_model(tmp_path / "pop.ncr")
    assert isinstance(back, ItemPopModel)
    assert np.array_equal(back.counts, model.counts)
    assert back.m == model.m


# ------------------------------------------------------------------- BPR


def test_bpr_score_is_antisymmetric():
    model = BprModel(5, 6, 4, seed=0)
    rng = np.random.default_rng(1)
    u = rng.integers(0, 5, 50)
    i = rng.integers(0, 6, 50)
    j = rng.integers(0, 6, 50)
    assert np.allclose(model.score(u, i, j), -model.score(u, j, i), rtol=1e-14)


def test_mf_topk_matches_inner_product_order():
    model = BprModel(4, 30, 6, seed=3)
    rng = np.random.default_rng(2)
    model.U[...] = rng.uniform(-1, 1, model.U.shape)
    model.V[...] = rng.uniform(-1, 1, model.V.shape)
    u = 2
    ids = rng.permutation(30)[:20]
    scores = model.V[ids] @ model.U[u]
    order = np.lexsort((ids, -scores))
    got = mf_topk(model, u, ids, 7)
    assert np.array_equal(got.items, ids[order[:7]])
    assert np.array_equal(model.rank(u, ids, 7).items, got.items)


def test_triplet_loss_closed_form():
    model = BprModel(2, 3, 2, seed=0, reg=0.1)
    model.U[1] = [1.0, 2.0]
    model.V[0] = [0.5, -1.0]
    model.V[2] = [1.0, 1.0]
    # xhat = (1,2).((0.5,-1)-(1,1)) = -0.5 - 4 = -4.5
    want = math.log1p(math.exp(-(-4.5))) + 0.1 * (
        (1 + 4) + (0.25 + 1) + (1 + 1))
    assert model.triplet_loss(1, 0, 2) == pytest.approx(want, rel=1e-12)


def test_sgd_steps_descend():
    model = BprModel(3, 4, 4, seed=1, lr=0.05, reg=0.01)
    rng = np.random.default_rng(0)
    model.U[...] = rng.uniform(-0.3, 0.3, model.U.shape)
    model.V[...] = rng.uniform(-0.3, 0.3, model.V.shape)
    first = model.triplet_loss(1, 2, 3)
    returned = model.sgd_step(1, 2, 3)
    assert returned == pytest.approx(first, rel=1e-14)
    for _ in range(50):
        model.sgd_step(1, 2, 3)
    assert model.triplet_loss(1, 2, 3) < first


def test_bpr_container_round_trip(tmp_path):
    model = BprModel(4, 5, 3, seed=7, lr=0.02, reg=0.005)
    save_model(model, tmp_path / "bpr.ncr")
    back = load_model(tmp_path / "bpr.ncr")
    assert isinstance(back, BprModel)
    assert back.lr == 0.02 and back.reg == 0.005
    assert np.array_equal(back.U, model.U)
    assert np.array_equal(back.V, model.V)


def test_bpr_training_beats_popularity(blocks_split):
    # block-structured preferences are exactly what MF separates, while a
    # flat popularity profile gives the count ranker nothing to use
    cfg = TrainConfig(lr=0.1, ratio=1, seed=0, max_epochs=40,
                      batch=256, plateau=0.001)
    model, history = bpr_train(blocks_split, 8, cfg)
    assert history.epochs >= 1
    assert history.best_epoch is not None

    pop = ItemPopModel.fit(blocks_split.train)
    pop_hr = evaluate(pop, blocks_split, k=10, seed=0).hr
    bpr_hr = evaluate(model, blocks_split, k=10, seed=0).hr
    assert bpr_hr >= pop_hr + 0.1
