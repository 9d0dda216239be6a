"""Exact (min,max) product and convolution on rank-compressed data.

Once weights are replaced by their ranks, every (min,max) computation is a
pure order computation: these kernels work on small integers and never touch
weight-scale arithmetic, which is why the approximation pipeline built on
top of them has operation counts independent of the weight magnitude.  In
line with the operation-accounting policy, nothing here tallies.

Each operation ships a transparent quadratic/cubic `naive` backend (the
definition, vectorized) and a faster structural backend, bit-identical by
construction and by test:

* product `threshold` backend: one ascending sweep over the rank universe,
  maintaining bit-packed activation sets; each of the 2n^2 entry activations
  is merged once against the opposite side's packed sets, and every output
  pair is written exactly when its first connecting index activates --
  O(n^3/w) word operations instead of n^3 scalar ones;
* convolution `subquadratic` backend: ascending sweep in threshold blocks
  spaced ~sqrt(n/log n) entries apart; candidate output positions come from
  boolean convolutions of the activation indicators, realized carry-free as
  big-integer shift-ORs of each newly activated position against the other
  side's accumulated indicator (each position is convolved once, so the
  whole sweep costs O(n^2/w) word operations), and entries within a block
  resolve their exact value in ascending order.

The reserved top rank (the +inf sentinel of `rank_compress`) participates
as an ordinary maximal rank; decoding restores +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RankMatrix",
    "RankSequence",
    "minmax_product",
    "minmax_convolution",
]


# ----- domain types -----------------------------------------------------------

def _checked_ranks(entries: np.ndarray, top: int, shape_word: str) -> None:
    if top < 1:
        raise ValueError(f"top rank must be >= 1, got {top}")
    if entries.size and not (1 <= int(entries.min()) and int(entries.max()) <= top):
        raise ValueError(f"{shape_word} entries must lie in [1, top={top}]")


@dataclass(frozen=True)
class RankMatrix:
    """Square matrix of integer ranks in [1, top]; rank `top` encodes +inf."""

    n: int
    entries: np.ndarray
    top: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.shape != (self.n, self.n):
            raise ValueError(f"entries must be {self.n}x{self.n}, got {entries.shape}")
        _checked_ranks(entries, self.top, "matrix")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, entries, top: int) -> "RankMatrix":
        entries = np.asarray(entries, dtype=np.int64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {entries.shape}")
        return cls(n=entries.shape[0], entries=entries, top=top)


@dataclass(frozen=True)
class RankSequence:
    """Sequence of integer ranks in [1, top]; rank `top` encodes +inf."""

    n: int
    entries: np.ndarray
    top: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.shape != (self.n,):
            raise ValueError(f"entries must have length {self.n}, got {entries.shape}")
        _checked_ranks(entries, self.top, "sequence")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def of(cls, entries, top: int) -> "RankSequence":
        entries = np.asarray(entries, dtype=np.int64)
        if entries.ndim != 1:
            raise ValueError(f"expected a flat sequence, got shape {entries.shape}")
        return cls(n=entries.shape[0], entries=entries, top=top)


def _common_top(A, B) -> int:
    if A.top != B.top:
        raise ValueError(f"rank universes differ: top {A.top} vs {B.top}")
    return A.top


# ----- min-max product ---------------------------------------------------------

def _product_naive(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    out = np.maximum.outer(a[:, 0], b[0, :])
    for k in range(1, n):
        np.minimum(out, np.maximum.outer(a[:, k], b[k, :]), out=out)
    return out


def _rank_groups(flat: np.ndarray):
    """Positions grouped by value, ascending: list of (rank, positions)."""
    order = np.argsort(flat, kind="stable")
    svals = flat[order]
    cuts = np.nonzero(np.diff(svals))[0] + 1
    groups = np.split(order, cuts)
    starts = [0] + cuts.tolist()
    return [(int(svals[s]), g) for s, g in zip(starts, groups)]


def _product_threshold(a: np.ndarray, b: np.ndarray, n: int, top: int) -> np.ndarray:
    out = np.full((n, n), top, dtype=np.int64)
    # per-index activation sets, one machine-packed bitmask each
    ka = [0] * n           # ka[k]: rows i with a[i, k] active
    kb = [0] * n           # kb[k]: cols j with b[k, j] active
    done = [0] * n         # done[i]: cols j with out[i, j] decided
    done_t = [0] * n       # done_t[j]: rows i with out[i, j] decided
    ga = _rank_groups(a.ravel())
    gb = _rank_groups(b.ravel())
    pa = pb = 0
    while pa < len(ga) or pb < len(gb):
        ra = ga[pa][0] if pa < len(ga) else None
        rb = gb[pb][0] if pb < len(gb) else None
        r = min(x for x in (ra, rb) if x is not None)
        a_ev = ga[pa][1].tolist() if ra == r else ()
        b_ev = gb[pb][1].tolist() if rb == r else ()
        pa += ra == r
        pb += rb == r
        for pos in a_ev:
            ka[pos % n] |= 1 << (pos // n)
        for pos in b_ev:
            kb[pos // n] |= 1 << (pos % n)
        for pos in a_ev:
            i, k = divmod(pos, n)
            new = kb[k] & ~done[i]
            if new:
                done[i] |= new
                row = out[i]
                while new:
                    low = new & -new
                    j = low.bit_length() - 1
                    new ^= low
                    row[j] = r
                    done_t[j] |= 1 << i
        for pos in b_ev:
            k, j = divmod(pos, n)
            new = ka[k] & ~done_t[j]
            if new:
                done_t[j] |= new
                bit = 1 << j
                while new:
                    low = new & -new
                    i = low.bit_length() - 1
                    new ^= low
                    out[i, j] = r
                    done[i] |= bit
    return out


def minmax_product(A: RankMatrix, B: RankMatrix,
                   backend: str = "threshold") -> RankMatrix:
    """C[i,j] = min over k of max{A[i,k], B[k,j]}, exactly.

    backend "naive" is the definitional cubic reference; "threshold" is the
    packed ascending sweep.  Both produce identical matrices.
    """
    if A.n != B.n:
        raise ValueError(f"dimension mismatch: {A.n} vs {B.n}")
    top = _common_top(A, B)
    n = A.n
    if backend == "naive":
        out = _product_naive(A.entries, B.entries, n)
    elif backend == "threshold":
        out = _product_threshold(A.entries, B.entries, n, top)
    else:
        raise ValueError(f"unknown product backend {backend!r}")
    return RankMatrix(n=n, entries=out, top=top)


# ----- min-max convolution ------------------------------------------------------

def _conv_naive(a: np.ndarray, b: np.ndarray, n: int, top: int) -> np.ndarray:
    out = np.full(n, top, dtype=np.int64)
    for i in range(n):
        np.minimum(out[i:], np.maximum(a[i], b[:n - i]), out=out[i:])
    return out


def _conv_subquadratic(a: np.ndarray, b: np.ndarray, n: int, top: int) -> np.ndarray:
    out = np.full(n, top, dtype=np.int64)
    block = max(1, math.ceil(math.sqrt(n / math.log2(n)))) if n > 2 else 1
    # one merged ascending stream of (rank, side, position)
    ranks = np.concatenate([a, b])
    order = np.argsort(ranks, kind="stable").tolist()
    sa = sb = 0                      # activation indicators, one bit per position
    covered = 0
    mask = (1 << n) - 1
    full = False
    for start in range(0, 2 * n, block):
        if full:
            break
        for opos in order[start:start + block]:
            r = int(ranks[opos])
            if opos < n:
                sa |= 1 << opos
                new = ((sb << opos) & mask) & ~covered
            else:
                p = opos - n
                sb |= 1 << p
                new = ((sa << p) & mask) & ~covered
            if new:
                covered |= new
                while new:
                    low = new & -new
                    out[low.bit_length() - 1] = r
                    new ^= low
                if covered == mask:
                    full = True
                    break
    return out


def minmax_convolution(A: RankSequence, B: RankSequence,
                       backend: str = "subquadratic") -> RankSequence:
    """C[k] = min over i+j=k (i, j in [0, n)) of max{A[i], B[j]}, exactly.

    Output length equals the input length n (indices k in [0, n)).  backend
    "naive" is the definitional quadratic reference; "subquadratic" is the
    block sweep.  Both produce identical sequences.
    """
    if A.n != B.n:
        raise ValueError(f"length mismatch: {A.n} vs {B.n}")
    top = _common_top(A, B)
    n = A.n
    if n == 0:
        return RankSequence(n=0, entries=np.empty(0, np.int64), top=top)
    if backend == "naive":
        out = _conv_naive(A.entries, B.entries, n, top)
    elif backend == "subquadratic":
        out = _conv_subquadratic(A.entries, B.entries, n, top)
    else:
        raise ValueError(f"unknown convolution backend {backend!r}")
    return RankSequence(n=n, entries=out, top=top)
