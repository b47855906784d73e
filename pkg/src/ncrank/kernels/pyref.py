"""Pure NumPy reference implementations of the hot kernels.

The compiled backend (`ncrank.kernels._native`) reproduces these
bit-for-bit: integer kernels are exact by construction, and the float
kernels perform the same elementwise operations in the same order (the
extension is compiled with FP contraction off).
"""

from __future__ import annotations

import numpy as np

from ..rng import _MASK, _mix64_array, _U_GOLDEN, _SHIFT11, _INV_2_53, GOLDEN, mix64

BACKEND_NAME = "pure"

# Fixed per-slot draw budget for negative sampling: slot s, attempt a reads
# stream position start + s*ATTEMPTS + a. Attempt ATTEMPTS-1 is reserved for
# the exact fallback draw, so rejection gets ATTEMPTS-1 tries.
ATTEMPTS = 64


def scatter_add_rows(out: np.ndarray, rows: np.ndarray, contrib: np.ndarray) -> None:
    """out[rows[b]] += contrib[b], accumulated in batch order."""
    np.add.at(out, rows, contrib)


def adam_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: float,
    beta1: float,
    beta2: float,
    eps: float,
    bc2: float,
) -> None:
    """One fused Adam update, in place.

    `step` is lr / (1 - beta1**t) and `bc2` is 1 - beta2**t, both
    precomputed by the caller so that each element sees exactly:

        m = beta1*m + (1-beta1)*g
        v = beta2*v + (1-beta2)*g*g
        p -= step * m / (sqrt(v/bc2) + eps)
    """
    omb1 = 1.0 - beta1
    omb2 = 1.0 - beta2
    m *= beta1
    m += omb1 * grad
    v *= beta2
    v += omb2 * (grad * grad)
    denom = np.sqrt(v / bc2)
    denom += eps
    upd = step * m
    upd /= denom
    param -= upd


def _kth_nonmember(row: np.ndarray, k: int) -> int:
    """The k-th (0-based) item id not present in the sorted id array `row`."""
    j = k
    for it in row:
        if it <= j:
            j += 1
        else:
            break
    return j


def sample_negatives(
    key: int,
    start: int,
    users: np.ndarray,
    offsets: np.ndarray,
    items: np.ndarray,
    n_items: int,
) -> np.ndarray:
    """Draw one non-interacted item per slot by bounded rejection sampling.

    users[s] is the user of slot s; (offsets, items) is a CSR view of the
    per-user interacted item ids, each row sorted ascending. Slot s consumes
    stream positions [start + s*ATTEMPTS, start + (s+1)*ATTEMPTS); callers
    reserve ATTEMPTS draws per slot up front, so the stream advance is
    independent of how many proposals get rejected. If every rejection
    attempt lands on an interacted item (possible only for users who
    interacted with almost the whole catalog), the final reserved draw
    indexes directly into the user's non-interacted set.

    Callers must exclude users with no non-interacted items.
    """
    nslots = len(users)
    out = np.empty(nslots, dtype=np.int64)
    unresolved = np.arange(nslots, dtype=np.int64)
    users = np.asarray(users, dtype=np.int64)

    # Composite (user, item) keys; globally sorted because rows are sorted.
    stride = n_items + 1
    row_users = np.repeat(np.arange(len(offsets) - 1, dtype=np.int64), np.diff(offsets))
    member_keys = row_users * stride + items
    ukey = np.uint64(key)

    for attempt in range(ATTEMPTS - 1):
        if len(unresolved) == 0:
            break
        pos = np.uint64(start + 1 + attempt) + unresolved.astype(np.uint64) * np.uint64(ATTEMPTS)
        vals = _mix64_array(ukey + pos * _U_GOLDEN)
        u = (vals >> _SHIFT11).astype(np.float64) * _INV_2_53
        j = np.minimum((u * n_items).astype(np.int64), n_items - 1)
        qkeys = users[unresolved] * stride + j
        loc = np.searchsorted(member_keys, qkeys)
        loc_c = np.minimum(loc, len(member_keys) - 1)
        member = member_keys[loc_c] == qkeys
        ok = ~member
        out[unresolved[ok]] = j[ok]
        unresolved = unresolved[member]

    for s in unresolved:
        val = mix64((key + (start + 1 + int(s) * ATTEMPTS + ATTEMPTS - 1) * GOLDEN) & _MASK)
        u = int(users[s])
        row = items[offsets[u] : offsets[u + 1]]
        k = val % (n_items - len(row))
        out[s] = _kth_nonmember(row, k)

    return out
