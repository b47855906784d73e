"""Command-line entry point: prep, train, eval, recommend, sweep.

Every command is a pure function of its flags, optional config file, and
input files; rerunning with the same inputs produces byte-identical
outputs. Flags override config-file values, and the merged effective
config is written into each command's output directory.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import baselines, data, models, trainer
from .errors import DataError, NumericError
from .evaluation import CSV_HEADER, evaluate
from .rng import derive_seed

MODEL_KINDS = ("itempop", "bpr", "nbpr", "dncr", "neupr")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are 1
        raise _UsageError(message)


def _coerce(value, typ):
    if typ is bool:
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).lower() in ("0", "false", "no", "off"):
            return False
        raise DataError(f"cannot read {value!r} as a boolean")
    return typ(value)


def _load_config_file(path):
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read config file: {e}") from None
    if text.lstrip().startswith("{"):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON config: {e}") from None
        if not isinstance(cfg, dict):
            raise DataError(f"{path}: config must be a JSON object")
        return cfg
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _merge_options(args, table):
    """Resolve each option as: explicit flag, else config file, else default."""
    config = _load_config_file(args.config) if args.config else {}
    unknown = set(config) - {name for name, _, _, _ in table}
    if unknown:
        raise DataError(f"unknown config keys: {sorted(unknown)}")
    opts = {}
    for name, typ, default, required in table:
        value = getattr(args, name, None)
        if value is None and name in config:
            value = _coerce(config[name], typ)
        if value is None:
            value = default
        if value is None and required:
            raise _UsageError(f"missing required option --{name.replace('_', '-')}")
        opts[name] = value
    return opts


def _write_effective_config(opts, outdir):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(opts, f, indent=2, sort_keys=True)
        f.write("\n")


# Option tables: (dest, type, default, required)
PREP_OPTS = [
    ("data", str, None, True),
    ("format", str, "movielens-dat", False),
    ("min_count", int, 10, False),
    ("out", str, None, True),
]
TRAIN_OPTS = [
    ("data", str, None, True),
    ("model", str, None, True),
    ("factors", int, 8, False),
    ("layers", int, 4, False),
    ("lr", float, 0.001, False),
    ("batch", int, 256, False),
    ("ratio", int, 1, False),
    ("alpha", float, 0.5, False),
    ("pretrain", bool, False, False),
    ("reg", float, baselines.DEFAULT_REG, False),
    ("seed", int, 0, False),
    ("max_epochs", int, 100, False),
    ("threads", int, 1, False),
    ("out", str, None, True),
]
EVAL_OPTS = [
    ("data", str, None, True),
    ("model_file", str, None, True),
    ("k", int, 10, False),
    ("negatives", int, 100, False),
    ("seed", int, 0, False),
    ("target", str, "test", False),
    ("threads", int, 1, False),
    ("out", str, None, True),
]
RECOMMEND_OPTS = [
    ("data", str, None, True),
    ("model_file", str, None, True),
    ("user", str, None, True),
    ("k", int, 10, False),
]
SWEEP_OPTS = [
    ("data", str, None, True),
    ("k_max", int, 10, False),
    ("negatives", int, 100, False),
    ("seed", int, 0, False),
    ("target", str, "test", False),
    ("threads", int, 1, False),
    ("out", str, None, True),
]


def cmd_prep(args) -> int:
    opts = _merge_options(args, PREP_OPTS)
    raw = data.load_interactions(opts["data"], opts["format"])
    filtered = data.filter_and_remap(raw, opts["min_count"])
    split = data.leave_one_out_split(filtered)
    data.save_split(split, opts["out"])
    _write_effective_config(opts, opts["out"])
    with open(os.path.join(opts["out"], "stats.json"), encoding="utf-8") as f:
        print(f.read().strip())
    return 0


def _check_compat(model, split):
    tr = split.train
    if (model.m, model.n) != (tr.m, tr.n):
        raise DataError(
            f"model is for {model.m} users x {model.n} items, split has "
            f"{tr.m} x {tr.n}"
        )
    fp = data.dataset_fingerprint(split)
    trained_on = model.meta.get("dataset_fingerprint")
    if trained_on is not None and trained_on != fp:
        raise DataError(
            f"model was trained on dataset {trained_on[:12]}..., but this split "
            f"is {fp[:12]}..."
        )


def cmd_train(args) -> int:
    opts = _merge_options(args, TRAIN_OPTS)
    if opts["model"] not in MODEL_KINDS:
        raise _UsageError(f"--model must be one of {MODEL_KINDS}, got {opts['model']!r}")
    split = data.load_split(opts["data"])
    tr = split.train
    meta = {
        "dataset_fingerprint": data.dataset_fingerprint(split),
        "lr": opts["lr"], "ratio": opts["ratio"], "batch": opts["batch"],
        "max_epochs": opts["max_epochs"], "train_seed": opts["seed"],
    }
    cfg = trainer.TrainConfig(lr=opts["lr"], batch=opts["batch"],
                              ratio=opts["ratio"], max_epochs=opts["max_epochs"],
                              seed=opts["seed"])
    init_seed = derive_seed(opts["seed"], 10)
    kind = opts["model"]
    histories = None

    if kind == "itempop":
        model = baselines.ItemPopModel.fit(tr, meta)
    elif kind == "bpr":
        meta["reg"] = opts["reg"]
        model, history = baselines.bpr_train(split, opts["factors"], cfg,
                                             reg=opts["reg"],
                                             eval_threads=opts["threads"])
        model.meta.update(meta)
        histories = {"bpr": history}
    elif kind == "neupr" and opts["pretrain"]:
        meta["alpha"] = opts["alpha"]
        model, hists = trainer.pretrain_pipeline(split, opts["factors"], cfg,
                                                 alpha=opts["alpha"],
                                                 layers=opts["layers"],
                                                 eval_threads=opts["threads"])
        model.meta.update(meta)
        histories = hists
    else:
        if kind == "nbpr":
            model = models.NbprModel(tr.m, tr.n, opts["factors"], init_seed, meta)
        elif kind == "dncr":
            model = models.DncrModel(tr.m, tr.n, opts["factors"], init_seed,
                                     opts["layers"], meta)
        else:
            model = models.NeuprModel(tr.m, tr.n, opts["factors"], init_seed,
                                      opts["layers"], meta)
        model, history = trainer.train(model, split, cfg,
                                       eval_threads=opts["threads"])
        histories = {kind: history}

    _write_effective_config(opts, opts["out"])
    models.save_model(model, os.path.join(opts["out"], "model.ncr"))
    hist_payload = {}
    if histories:
        hist_payload = {name: json.loads(h.to_json()) for name, h in histories.items()}
    with open(os.path.join(opts["out"], "history.json"), "w", encoding="utf-8") as f:
        json.dump(hist_payload, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"saved {kind} model to {os.path.join(opts['out'], 'model.ncr')}")
    return 0


def cmd_eval(args) -> int:
    opts = _merge_options(args, EVAL_OPTS)
    if opts["target"] not in ("test", "validation"):
        raise _UsageError("--target must be 'test' or 'validation'")
    split = data.load_split(opts["data"])
    model = models.load_model(opts["model_file"])
    _check_compat(model, split)
    report = evaluate(model, split, k=opts["k"], negatives=opts["negatives"],
                      seed=opts["seed"], target=opts["target"],
                      threads=opts["threads"])
    _write_effective_config(opts, opts["out"])
    with open(os.path.join(opts["out"], "report.json"), "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    row = report.csv_row(model.kind, model.factors,
                         int(model.meta.get("ratio", 0)))
    with open(os.path.join(opts["out"], "summary.csv"), "w", encoding="utf-8") as f:
        f.write(CSV_HEADER + "\n" + row + "\n")
    print(row)
    return 0


def cmd_recommend(args) -> int:
    opts = _merge_options(args, RECOMMEND_OPTS)
    split = data.load_split(opts["data"])
    model = models.load_model(opts["model_file"])
    _check_compat(model, split)
    tr = split.train
    try:
        u = tr.user_ids.index(opts["user"])
    except ValueError:
        raise DataError(f"unknown user id {opts['user']!r}") from None
    mask = np.ones(tr.n, dtype=bool)
    mask[split.excluded_items(u)] = False
    candidates = np.flatnonzero(mask).astype(np.int64)
    if len(candidates) == 0:
        raise DataError(f"user {opts['user']!r} has interacted with every item")
    ranked = model.rank(u, candidates, opts["k"])
    print(json.dumps({
        "user": opts["user"],
        "items": [tr.item_ids[i] for i in ranked.items],
    }))
    return 0


def _metrics_at(per_user_ranks, k):
    hr = float(np.mean([1.0 if r is not None and r <= k else 0.0
                        for r in per_user_ranks]))
    ndcg = float(np.mean([1.0 / math.log2(r + 1.0) if r is not None and r <= k
                          else 0.0 for r in per_user_ranks]))
    return hr, ndcg


def cmd_sweep(args) -> int:
    opts = _merge_options(args, SWEEP_OPTS)
    if not args.model_files:
        raise _UsageError("sweep needs at least one --model-files path")
    split = data.load_split(opts["data"])
    rows = [CSV_HEADER]
    for path in args.model_files:
        model = models.load_model(path)
        _check_compat(model, split)
        report = evaluate(model, split, k=opts["k_max"],
                          negatives=opts["negatives"], seed=opts["seed"],
                          target=opts["target"], threads=opts["threads"])
        ranks = [rank for _, rank in report.per_user]
        ratio = int(model.meta.get("ratio", 0))
        # Tournament passes are prefix-consistent, so ranks at k_max give
        # every truncation K <= k_max for free.
        for k in range(1, opts["k_max"] + 1):
            hr, ndcg = _metrics_at(ranks, k)
            rows.append(f"{model.kind},{model.factors},{ratio},{k},{hr:.6f},{ndcg:.6f}")
    _write_effective_config(opts, opts["out"])
    with open(os.path.join(opts["out"], "sweep.csv"), "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")
    for row in rows:
        print(row)
    return 0


def _add_common(sub, names):
    flags = {
        "data": dict(type=str, help="dataset file (prep) or prepared split directory"),
        "format": dict(type=str, choices=("movielens-dat", "csv")),
        "min_count": dict(type=int, help="minimum interactions per user/item"),
        "model": dict(type=str, help=f"one of {', '.join(MODEL_KINDS)}"),
        "factors": dict(type=int, help="predictive factors"),
        "layers": dict(type=int, help="hidden layers in the tower models"),
        "lr": dict(type=float, help="learning rate"),
        "batch": dict(type=int, help="mini-batch size"),
        "ratio": dict(type=int, help="negative samples per positive"),
        "alpha": dict(type=float, help="pre-training fusion weight"),
        "pretrain": dict(action="store_const", const=True,
                         help="run the NBPR+DNCR pre-training pipeline"),
        "reg": dict(type=float, help="BPR L2 regularization"),
        "seed": dict(type=int, help="random seed"),
        "max_epochs": dict(type=int, help="epoch limit"),
        "threads": dict(type=int, help="evaluation threads"),
        "out": dict(type=str, help="output directory"),
        "k": dict(type=int, help="list truncation K"),
        "k_max": dict(type=int, help="largest K in the sweep"),
        "negatives": dict(type=int, help="sampled negatives per user"),
        "target": dict(type=str, choices=("test", "validation")),
        "model_file": dict(type=str, help="trained model file"),
        "user": dict(type=str, help="external user id"),
    }
    for name in names:
        sub.add_argument(f"--{name.replace('_', '-')}", dest=name,
                         default=None, **flags[name])
    sub.add_argument("--config", type=str, default=None,
                     help="JSON or key=value config file (flags win)")


def build_parser() -> _Parser:
    parser = _Parser(prog="ncrank",
                     description="Pairwise neural collaborative ranking toolkit")
    subs = parser.add_subparsers(dest="command")
    p = subs.add_parser("prep", help="ingest, filter, and split a rating log")
    _add_common(p, [n for n, *_ in PREP_OPTS])
    p.set_defaults(func=cmd_prep)
    p = subs.add_parser("train", help="train a model on a prepared split")
    _add_common(p, [n for n, *_ in TRAIN_OPTS])
    p.set_defaults(func=cmd_train)
    p = subs.add_parser("eval", help="HR@K / NDCG@K under sampled negatives")
    _add_common(p, [n for n, *_ in EVAL_OPTS])
    p.set_defaults(func=cmd_eval)
    p = subs.add_parser("recommend", help="top-K items for one user")
    _add_common(p, [n for n, *_ in RECOMMEND_OPTS])
    p.set_defaults(func=cmd_recommend)
    p = subs.add_parser("sweep", help="metric rows for every K up to a limit")
    _add_common(p, [n for n, *_ in SWEEP_OPTS])
    p.add_argument("--model-files", dest="model_files", nargs="+", default=None,
                   help="trained model files to sweep")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
