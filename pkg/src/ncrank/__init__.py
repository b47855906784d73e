"""Pairwise neural collaborative ranking from implicit feedback.

Train NBPR, DNCR, or their fused NeuPR on interaction logs, then rank
items per user through pairwise preference probabilities. See README.md
for the CLI walkthrough.
"""

from .baselines import BprModel, ItemPopModel, bpr_train, itempop_rank, mf_topk
from .data import (
    InteractionSet,
    SplitDataset,
    filter_and_remap,
    leave_one_out_split,
    load_interactions,
    load_split,
    sample_eval_negatives,
    sample_triplets,
    save_split,
)
from .errors import DataError, NcrankError, NumericError, ShapeError, TrainingDiverged
from .evaluation import EvalReport, evaluate, hit_ratio, ndcg_at_k
from .models import (
    DncrModel,
    NbprModel,
    NeuprModel,
    bce_loss,
    degenerate_bpr_forward,
    fuse_pretrained,
    load_model,
    save_model,
)
from .ranking import RankedList, prefer, top_k, transitivity_audit
from .rng import Rng, derive_seed
from .trainer import TrainConfig, TrainHistory, pretrain_pipeline, train

__version__ = "0.1.0"

__all__ = [
    "BprModel", "ItemPopModel", "bpr_train", "itempop_rank", "mf_topk",
    "InteractionSet", "SplitDataset", "filter_and_remap", "leave_one_out_split",
    "load_interactions", "load_split", "sample_eval_negatives", "sample_triplets",
    "save_split", "DataError", "NcrankError", "NumericError", "ShapeError",
    "TrainingDiverged", "EvalReport", "evaluate", "hit_ratio", "ndcg_at_k",
    "DncrModel", "NbprModel", "NeuprModel", "bce_loss", "degenerate_bpr_forward",
    "fuse_pretrained", "load_model", "save_model", "RankedList", "prefer",
    "top_k", "transitivity_audit", "Rng", "derive_seed", "TrainConfig",
    "TrainHistory", "pretrain_pipeline", "train",
]
