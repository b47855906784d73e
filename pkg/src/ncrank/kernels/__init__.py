"""Hot-loop kernels with a compiled and a pure NumPy backend.

Three operations dominate training time and are worth a compiled path:
negative sampling, row-wise gradient scatter, and the fused Adam update.
Everything else (forward passes, dense layers) is BLAS-bound NumPy and is
shared by both backends, so a training run produces bit-identical results
whichever backend is active.

The compiled backend is used when the extension module built, unless the
environment variable NCRANK_BACKEND forces a choice ("native" or "pure").
Call sites should do `from ncrank import kernels` and call through the
module (`kernels.adam_update(...)`) so that `set_backend` takes effect.
"""

from __future__ import annotations

import os

from . import pyref

ATTEMPTS = pyref.ATTEMPTS

_impl = None
BACKEND = ""


def _load(name: str):
    if name == "pure":
        return pyref
    if name == "native":
        from . import _native  # noqa: PLC0415 (deferred: extension is optional)

        if _native.ATTEMPTS != pyref.ATTEMPTS:
            raise RuntimeError("kernel backends disagree on the sampling draw budget")
        return _native
    raise ValueError(f"unknown kernel backend {name!r} (expected 'native' or 'pure')")


def set_backend(name: str) -> str:
    """Select the active backend by name; returns the previous name."""
    global _impl, BACKEND, scatter_add_rows, adam_update, sample_negatives
    previous = BACKEND
    _impl = _load(name)
    BACKEND = name
    scatter_add_rows = _impl.scatter_add_rows
    adam_update = _impl.adam_update
    sample_negatives = _impl.sample_negatives
    return previous


def _initial_backend() -> str:
    forced = os.environ.get("NCRANK_BACKEND", "").strip().lower()
    if forced in ("native", "pure"):
        return forced
    if forced:
        raise ValueError(f"NCRANK_BACKEND={forced!r} (expected 'native' or 'pure')")
    try:
        _load("native")
    except ImportError:
        return "pure"
    return "native"


set_backend(_initial_backend())
