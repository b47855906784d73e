"""Pairwise ranking models: NBPR, DNCR, and their fusion NeuPR.

All three score an ordered item pair (i, j) for a user u and emit the
probability that u prefers i over j. Training minimizes binary
cross-entropy against mirrored positive/negative triplets; gradients are
hand-derived (see each model's loss_and_grads).

Parameters live in plain float64 ndarrays. Embedding matrices are stored
row-per-entity (U is (m, k), V is (n, k)); dense layer weights are stored
(out, in) and applied to batches as x @ W.T + b.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import kernels, ranking
from .errors import DataError, ShapeError
from .numerics import INIT_STD, clamp_prob, sigmoid
from .rng import Rng

MAGIC = b"NCR1"

# kind -> class, filled in by _register (baselines add theirs on import)
_REGISTRY: dict[str, type] = {}


def _register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def bce_loss(yhat, y):
    """Binary cross-entropy; yhat must already be clamped away from {0,1}."""
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(yhat) + (1.0 - y) * np.log1p(-yhat))
    return float(out) if out.ndim == 0 else out


def degenerate_bpr_forward(U, V, u, i, j):
    """log sigmoid(U_u . V_i - U_u . V_j), the per-triplet BPR-OPT term.

    This is what the pairwise architecture collapses to with identity
    output weights and a -log(1+e^{-x}) output activation; always <= 0.
    """
    xhat = np.sum(U[u] * (V[i] - V[j]), axis=-1)
    return -np.logaddexp(0.0, -xhat)


def _check_ids(name, ids, bound):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= bound):
        raise IndexError(f"{name} id out of range [0, {bound})")


def _as_batch(u, i, j):
    scalar = np.isscalar(u) and np.isscalar(i) and np.isscalar(j)
    u = np.atleast_1d(np.asarray(u, dtype=np.int64))
    i = np.atleast_1d(np.asarray(i, dtype=np.int64))
    j = np.atleast_1d(np.asarray(j, dtype=np.int64))
    return u, i, j, scalar


def tower_widths(factors: int, layers: int) -> list[int]:
    """Hidden-layer widths of the DNCR tower, concat layer first.

    With H = `layers` hidden layers (the concatenation counts as the
    first), the embedding width is d = 2^(H-2) * factors and each dense
    layer halves the width down to `factors`:

        [3d, d, d/2, ..., factors]

    H = 1 keeps the tower formula's d = factors/2 and scores the 3d-wide
    concat directly.
    """
    if layers < 1:
        raise ShapeError(f"need at least 1 hidden layer, got {layers}")
    if layers == 1:
        if factors % 2:
            raise ShapeError(f"factors must be even for a 1-layer tower, got {factors}")
        return [3 * (factors // 2)]
    d = (2 ** (layers - 2)) * factors
    return [3 * d] + [d >> t for t in range(layers - 1)]


def _init_dense(widths, rng):
    """(W, b) per dense layer; weights Gaussian, biases zero."""
    Ws, bs = [], []
    for t in range(len(widths) - 1):
        Ws.append(rng.normal((widths[t + 1], widths[t]), 0.0, INIT_STD))
        bs.append(np.zeros(widths[t + 1]))
    return Ws, bs


def _tower_forward(x, Ws, bs):
    acts = [x]
    for W, b in zip(Ws, bs):
        x = np.tanh(x @ W.T + b)
        acts.append(x)
    return acts


def _tower_backward(acts, Ws, delta, grads):
    """Backprop `delta` (at the tower's top, pre-activation already folded)
    through the dense stack; fills grads["W<t>"], grads["b<t>"] and returns
    the gradient at the concat layer."""
    for t in range(len(Ws) - 1, -1, -1):
        grads[f"W{t + 1}"] = delta.T @ acts[t]
        grads[f"b{t + 1}"] = delta.sum(axis=0)
        delta = delta @ Ws[t]
        if t > 0:
            delta = delta * (1.0 - acts[t] * acts[t])
    return delta


class _ModelBase:
    """Shared plumbing: ranking protocol, copying, serialization order."""

    kind = ""

    def rank(self, u: int, candidates, k: int) -> np.ndarray:
        return ranking.top_k(self, u, candidates, k)

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        raise NotImplementedError

    def _tensor_dict(self):
        return dict(self.tensors())

    def copy(self):
        header = self._header()
        tensors = {name: arr.copy() for name, arr in self.tensors()}
        return type(self)._from_tensors(header, tensors)

    def _header(self) -> dict:
        return {
            "kind": self.kind,
            "m": self.m,
            "n": self.n,
            "factors": self.factors,
            "layers": getattr(self, "layers", 0),
            "seed": self.seed,
            "meta": dict(self.meta),
            "tensors": [[name, list(arr.shape)] for name, arr in self.tensors()],
        }


@_register
class NbprModel(_ModelBase):
    """Shallow pairwise ranker: sigma(w1.(U_u*V_i) - w2.(U_u*V_j)).

    The element-wise products of user and item embeddings feed two edge
    weight vectors, one per pair slot. Embedding width is factors/2 so
    the concatenated product layer has `factors` units.
    """

    kind = "nbpr"

    def __init__(self, m, n, factors, seed, meta=None):
        if factors % 2:
            raise ShapeError(f"factors must be even, got {factors}")
        self.m, self.n, self.factors, self.seed = m, n, factors, seed
        self.meta = dict(meta or {})
        k = factors // 2
        rng = Rng(seed)
        self.U = rng.normal((m, k), 0.0, INIT_STD)
        self.V = rng.normal((n, k), 0.0, INIT_STD)
        self.w1 = rng.normal(k, 0.0, INIT_STD)
        self.w2 = rng.normal(k, 0.0, INIT_STD)

    @classmethod
    def _from_tensors(cls, header, tensors):
        self = cls.__new__(cls)
        self.m, self.n = header["m"], header["n"]
        self.factors, self.seed = header["factors"], header["seed"]
        self.meta = dict(header.get("meta", {}))
        self.U, self.V = tensors["U"], tensors["V"]
        self.w1, self.w2 = tensors["w1"], tensors["w2"]
        return self

    def tensors(self):
        return [("U", self.U), ("V", self.V), ("w1", self.w1), ("w2", self.w2)]

    def _scores(self, u, i, j):
        eu = self.U[u]
        return (eu * self.V[i]) @ self.w1 - (eu * self.V[j]) @ self.w2

    def forward(self, u, i, j):
        u, i, j, scalar = _as_batch(u, i, j)
        _check_ids("user", u, self.m)
        _check_ids("item", np.concatenate([i, j]), self.n)
        out = clamp_prob(sigmoid(self._scores(u, i, j)))
        return float(out[0]) if scalar else out

    def loss_and_grads(self, u, i, j, y):
        """Sum of per-triplet BCE plus gradients of the batch-mean loss."""
        B = len(u)
        eu, ei, ej = self.U[u], self.V[i], self.V[j]
        pi = eu * ei
        pj = eu * ej
        z = pi @ self.w1 - pj @ self.w2
        yhat = sigmoid(z)
        loss = float(np.sum(bce_loss(clamp_prob(yhat), y)))
        g = (yhat - y) / B

        grads = {
            "U": np.zeros_like(self.U),
            "V": np.zeros_like(self.V),
            "w1": pi.T @ g,
            "w2": -(pj.T @ g),
        }
        gcol = g[:, None]
        kernels.scatter_add_rows(grads["U"], u, gcol * (self.w1 * ei - self.w2 * ej))
        kernels.scatter_add_rows(grads["V"], i, gcol * (self.w1 * eu))
        kernels.scatter_add_rows(grads["V"], j, gcol * (-(self.w2 * eu)))
        return loss, grads


@_register
class DncrModel(_ModelBase):
    """Deep pairwise ranker over the concat [U_u; V_i; -V_j].

    The concat feeds a tanh tower that halves in width down to `factors`
    units, scored by a single edge weight vector under a sigmoid.
    """

    kind = "dncr"

    def __init__(self, m, n, factors, seed, layers=4, meta=None):
        widths = tower_widths(factors, layers)
        self.m, self.n, self.factors, self.seed = m, n, factors, seed
        self.layers = layers
        self.meta = dict(meta or {})
        d = widths[0] // 3
        rng = Rng(seed)
        self.U = rng.normal((m, d), 0.0, INIT_STD)
        self.V = rng.normal((n, d), 0.0, INIT_STD)
        self.Ws, self.bs = _init_dense(widths, rng)
        self.w = rng.normal(widths[-1], 0.0, INIT_STD)

    @classmethod
    def _from_tensors(cls, header, tensors):
        self = cls.__new__(cls)
        self.m, self.n = header["m"], header["n"]
        self.factors, self.seed = header["factors"], header["seed"]
        self.layers = header["layers"]
        self.meta = dict(header.get("meta", {}))
        self.U, self.V, self.w = tensors["U"], tensors["V"], tensors["w"]
        self.Ws, self.bs = [], []
        for t in range(1, self.layers):
            self.Ws.append(tensors[f"W{t}"])
            self.bs.append(tensors[f"b{t}"])
        return self

    def tensors(self):
        out = [("U", self.U), ("V", self.V)]
        for t, (W, b) in enumerate(zip(self.Ws, self.bs), start=1):
            out.append((f"W{t}", W))
            out.append((f"b{t}", b))
        out.append(("w", self.w))
        return out

    @property
    def d(self):
        return self.U.shape[1]

    def _concat(self, u, i, j):
        return np.concatenate([self.U[u], self.V[i], -self.V[j]], axis=1)

    def forward(self, u, i, j):
        u, i, j, scalar = _as_batch(u, i, j)
        _check_ids("user", u, self.m)
        _check_ids("item", np.concatenate([i, j]), self.n)
        top = _tower_forward(self._concat(u, i, j), self.Ws, self.bs)[-1]
        out = clamp_prob(sigmoid(top @ self.w))
        return float(out[0]) if scalar else out

    def loss_and_grads(self, u, i, j, y):
        B = len(u)
        acts = _tower_forward(self._concat(u, i, j), self.Ws, self.bs)
        top = acts[-1]
        yhat = sigmoid(top @ self.w)
        loss = float(np.sum(bce_loss(clamp_prob(yhat), y)))
        g = (yhat - y) / B

        grads = {"U": np.zeros_like(self.U), "V": np.zeros_like(self.V),
                 "w": top.T @ g}
        delta = g[:, None] * self.w
        if self.Ws:
            delta = delta * (1.0 - top * top)
        delta0 = _tower_backward(acts, self.Ws, delta, grads)

        d = self.d
        kernels.scatter_add_rows(grads["U"], u, delta0[:, :d])
        kernels.scatter_add_rows(grads["V"], i, delta0[:, d:2 * d])
        kernels.scatter_add_rows(grads["V"], j, -delta0[:, 2 * d:])
        return loss, grads


@_register
class NeuprModel(_ModelBase):
    """Fusion of NBPR and DNCR with separate embeddings per part.

    The NBPR part contributes its product layer (width `factors`), the
    DNCR part its tower top (width `factors`); one 2*factors edge weight
    vector scores the concatenation. The two halves are computed with the
    donors' exact operation order, so a fused model with one head half
    zeroed reproduces the surviving donor bit-for-bit.
    """

    kind = "neupr"

    def __init__(self, m, n, factors, seed, layers=4, meta=None):
        if factors % 2:
            raise ShapeError(f"factors must be even, got {factors}")
        widths = tower_widths(factors, layers)
        self.m, self.n, self.factors, self.seed = m, n, factors, seed
        self.layers = layers
        self.meta = dict(meta or {})
        kN = factors // 2
        dD = widths[0] // 3
        rng = Rng(seed)
        self.UN = rng.normal((m, kN), 0.0, INIT_STD)
        self.VN = rng.normal((n, kN), 0.0, INIT_STD)
        self.UD = rng.normal((m, dD), 0.0, INIT_STD)
        self.VD = rng.normal((n, dD), 0.0, INIT_STD)
        self.Ws, self.bs = _init_dense(widths, rng)
        self.w = rng.normal(widths[-1] + factors, 0.0, INIT_STD)

    @classmethod
    def _from_tensors(cls, header, tensors):
        self = cls.__new__(cls)
        self.m, self.n = header["m"], header["n"]
        self.factors, self.seed = header["factors"], header["seed"]
        self.layers = header["layers"]
        self.meta = dict(header.get("meta", {}))
        self.UN, self.VN = tensors["UN"], tensors["VN"]
        self.UD, self.VD = tensors["UD"], tensors["VD"]
        self.w = tensors["w"]
        self.Ws, self.bs = [], []
        for t in range(1, self.layers):
            self.Ws.append(tensors[f"W{t}"])
            self.bs.append(tensors[f"b{t}"])
        return self

    def tensors(self):
        out = [("UN", self.UN), ("VN", self.VN), ("UD", self.UD), ("VD", self.VD)]
        for t, (W, b) in enumerate(zip(self.Ws, self.bs), start=1):
            out.append((f"W{t}", W))
            out.append((f"b{t}", b))
        out.append(("w", self.w))
        return out

    def _head_slices(self):
        kN = self.factors // 2
        return self.w[:kN], self.w[kN:2 * kN], self.w[2 * kN:]

    def _parts(self, u, i, j):
        euN = self.UN[u]
        pi = euN * self.VN[i]
        pj = euN * self.VN[j]
        x = np.concatenate([self.UD[u], self.VD[i], -self.VD[j]], axis=1)
        acts = _tower_forward(x, self.Ws, self.bs)
        return pi, pj, acts

    def forward(self, u, i, j):
        u, i, j, scalar = _as_batch(u, i, j)
        _check_ids("user", u, self.m)
        _check_ids("item", np.concatenate([i, j]), self.n)
        wA, wB, wD = self._head_slices()
        pi, pj, acts = self._parts(u, i, j)
        z = (pi @ wA - pj @ wB) + acts[-1] @ wD
        out = clamp_prob(sigmoid(z))
        return float(out[0]) if scalar else out

    def loss_and_grads(self, u, i, j, y):
        B = len(u)
        wA, wB, wD = self._head_slices()
        pi, pj, acts = self._parts(u, i, j)
        top = acts[-1]
        z = (pi @ wA - pj @ wB) + top @ wD
        yhat = sigmoid(z)
        loss = float(np.sum(bce_loss(clamp_prob(yhat), y)))
        g = (yhat - y) / B
        gcol = g[:, None]

        kN = self.factors // 2
        gw = np.empty_like(self.w)
        gw[:kN] = pi.T @ g
        gw[kN:2 * kN] = -(pj.T @ g)
        gw[2 * kN:] = top.T @ g
        grads = {"UN": np.zeros_like(self.UN), "VN": np.zeros_like(self.VN),
                 "UD": np.zeros_like(self.UD), "VD": np.zeros_like(self.VD),
                 "w": gw}

        euN, eiN, ejN = self.UN[u], self.VN[i], self.VN[j]
        kernels.scatter_add_rows(grads["UN"], u, gcol * (wA * eiN - wB * ejN))
        kernels.scatter_add_rows(grads["VN"], i, gcol * (wA * euN))
        kernels.scatter_add_rows(grads["VN"], j, gcol * (-(wB * euN)))

        delta = gcol * wD
        if self.Ws:
            delta = delta * (1.0 - top * top)
        delta0 = _tower_backward(acts, self.Ws, delta, grads)
        dD = self.UD.shape[1]
        kernels.scatter_add_rows(grads["UD"], u, delta0[:, :dD])
        kernels.scatter_add_rows(grads["VD"], i, delta0[:, dD:2 * dD])
        kernels.scatter_add_rows(grads["VD"], j, -delta0[:, 2 * dD:])
        return loss, grads


def fuse_pretrained(nbpr: NbprModel, dncr: DncrModel, alpha: float) -> NeuprModel:
    """Initialize a NeuPR model from trained NBPR and DNCR donors.

    Embeddings and dense layers are copied; the output weight becomes
    [alpha * nbpr.w1; alpha * nbpr.w2; (1 - alpha) * dncr.w].
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if (nbpr.m, nbpr.n) != (dncr.m, dncr.n):
        raise ShapeError(
            f"embeddings U/V: nbpr is for {nbpr.m}x{nbpr.n}, dncr for {dncr.m}x{dncr.n}"
        )
    if nbpr.factors != dncr.factors:
        raise ShapeError(
            f"output weight w: nbpr has {nbpr.factors} factors, dncr has {dncr.factors}"
        )
    header = {
        "kind": "neupr", "m": nbpr.m, "n": nbpr.n, "factors": nbpr.factors,
        "layers": dncr.layers, "seed": nbpr.seed,
        "meta": {"fused_from": [nbpr.seed, dncr.seed], "alpha": alpha},
    }
    tensors = {
        "UN": nbpr.U.copy(), "VN": nbpr.V.copy(),
        "UD": dncr.U.copy(), "VD": dncr.V.copy(),
        "w": np.concatenate([alpha * nbpr.w1, alpha * nbpr.w2,
                             (1.0 - alpha) * dncr.w]),
    }
    for t, (W, b) in enumerate(zip(dncr.Ws, dncr.bs), start=1):
        tensors[f"W{t}"] = W.copy()
        tensors[f"b{t}"] = b.copy()
    return NeuprModel._from_tensors(header, tensors)


def save_model(model, path) -> None:
    """Write a model file: magic, JSON header, then raw float64 tensors.

    The header lists tensor names and shapes in order; bytes are
    little-endian C-order. No timestamps: equal models produce equal files.
    """
    header = model._header()
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, arr in model.tensors():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path):
    """Read a model file written by save_model; dispatches on model kind."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a model file (bad magic {raw[:4]!r})")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: corrupt model header: {e}") from None
    cls = _REGISTRY.get(header.get("kind"))
    if cls is None:
        raise DataError(f"{path}: unknown model kind {header.get('kind')!r}")
    offset = 8 + hlen
    tensors = {}
    for name, shape in header["tensors"]:
        size = int(np.prod(shape)) * 8
        if offset + size > len(raw):
            raise DataError(f"{path}: truncated tensor {name!r}")
        flat = np.frombuffer(raw[offset:offset + size], dtype="<f8")
        tensors[name] = flat.reshape(shape).astype(np.float64).copy()
        offset += size
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after tensors")
    return cls._from_tensors(header, tensors)
