"""Dense linear algebra, activations, initialization, and Adam.

Plain float64 ndarrays serve as the matrix/vector type; every exported
operation keeps entries finite. 32-bit floats would sink the 1e-4
relative-tolerance gradient checks, and the models here are small enough
that double precision costs nothing that matters.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError
from .rng import Rng

# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before logs.
PROB_EPS = 1e-15

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

INIT_STD = 0.01


def affine(weights: np.ndarray, x: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """weights @ x + bias, with weights laid out (out, in).

    `x` may be a single vector of length `in` or a batch of shape
    (batch, in); the batch case returns (batch, out).
    """
    weights = np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2:
        raise ShapeError(f"weights must be 2-d, got shape {weights.shape}")
    if x.shape[-1] != weights.shape[1]:
        raise ShapeError(
            f"weights shape {weights.shape} cannot multiply input shape {x.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeError(
            f"bias shape {bias.shape} does not match weights shape {weights.shape}"
        )
    return x @ weights.T + bias


def sigmoid(x):
    """Numerically stable logistic function; saturates, never NaN."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def clamp_prob(p):
    """Clip probabilities into [PROB_EPS, 1 - PROB_EPS] for safe logs."""
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def tanh_act(x):
    """Hidden-layer activation."""
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def gaussian_init(rows: int, cols: int, seed, std: float = INIT_STD) -> np.ndarray:
    """(rows, cols) matrix of i.i.d. Normal(0, std**2) entries.

    `seed` may be an integer or an Rng whose stream is consumed.
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"matrix dimensions must be >= 1, got {rows}x{cols}")
    rng = seed if isinstance(seed, Rng) else Rng(seed)
    return rng.normal((rows, cols), 0.0, std)


class AdamState:
    """Per-tensor Adam accumulators and hyperparameters."""

    __slots__ = ("m", "v", "t", "lr", "beta1", "beta2", "eps")

    def __init__(self, shape, lr: float,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update, applied to `params` in place."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"params {params.shape}, grads {grads.shape} and state {state.m.shape} "
            "must share one shape"
        )
    if not params.flags.c_contiguous:
        raise NumericError("params must be C-contiguous for in-place update")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    grads = np.ascontiguousarray(grads, dtype=np.float64)
    kernels.adam_update(
        params.reshape(-1), grads.reshape(-1), state.m.reshape(-1),
        state.v.reshape(-1), state.lr / bc1, state.beta1, state.beta2,
        state.eps, bc2,
    )
    return params


def finite_diff_grad(fn, point: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at `point`."""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    point = np.asarray(point, dtype=np.float64)
    grad = np.empty_like(point)
    flat = point.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = fn(point)
        flat[i] = keep - step
        lo = fn(point)
        flat[i] = keep
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NumericError(
                f"non-finite value while differencing coordinate {i}: "
                f"f(+h)={hi}, f(-h)={lo}"
            )
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def assert_all_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")
