"""Min-plus matrix products whose counted work ignores weight magnitude.

The exact product C[i,j] = min_k (A[i,k] + B[k,j]) forces arithmetic on the
weights themselves.  This module provides the approximation route around
that, and the classical scaling route as its contrast:

* `approx_minplus_product` views the matrices as length-n^2 vectors, builds
  the strong sum-to-max covering, solves each layer as a rank-compressed
  (min,max) product restricted to the rows/columns the layer actually
  touches, and folds the layers by entry-wise minimum.  The result C~
  satisfies C <= C~ <= (1+eps) C entry-wise (up to 53-bit storage rounding),
  with tallied operations depending only on n and eps -- never on how large
  the weights are.
* `zwick_minplus_product` rounds the weights to small integers at every
  power-of-two scale (`zwick_scale`), multiplies them exactly
  (`bounded_minplus_product`), and rescales, achieving C <= C~ <= (1+4 eps) C
  with a tally that grows with log of the weight range.

`minplus_product_naive` is the cubic exact oracle both routes are tested
against, and `minmax_product_via_approx` closes the circle: running the
approximate product on r^rank encodings recovers the exact (min,max) product
of rank matrices, bit for bit.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import _bulk
from .covering import stream_strong_covering_arrays
from .minmax import RankMatrix, _common_top
from .numeric import (
    INF,
    ExpFloat,
    Rational,
    as_eps,
    as_expfloat,
    count_comparisons,
    count_multiplications,
    counting_paused,
    ef_add,
)

__all__ = [
    "WeightMatrix",
    "INT_INF",
    "minplus_product_naive",
    "approx_minplus_product",
    "zwick_scale",
    "bounded_minplus_product",
    "zwick_minplus_product",
    "minmax_product_via_approx",
]

#: Infinity sentinel of bounded integer matrices.  Small enough that the sum
#: of two sentinels stays inside int64, large enough to exceed any valid
#: bounded entry.
INT_INF: int = 1 << 61

_MAN_ONE = 1 << 52  # mantissa of an exact power of two


# ----- domain type --------------------------------------------------------------

@dataclass(frozen=True)
class WeightMatrix:
    """Immutable square matrix of positive weights; +inf marks absent arcs."""

    n: int
    entries: tuple[tuple[ExpFloat, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")
        if len(self.entries) != self.n or any(len(r) != self.n for r in self.entries):
            raise ValueError(f"entries must form an {self.n}x{self.n} matrix")
        for row in self.entries:
            for v in row:
                if not isinstance(v, ExpFloat):
                    raise TypeError(f"matrix entries must be ExpFloat, got {type(v).__name__}")

    @classmethod
    def of(cls, rows) -> "WeightMatrix":
        """Build from any nested iterable of ExpFloat/int/float/Fraction."""
        entries = tuple(tuple(as_expfloat(v) for v in row) for row in rows)
        return cls(n=len(entries), entries=entries)


def _require_same_shape(A: WeightMatrix, B: WeightMatrix) -> int:
    if not isinstance(A, WeightMatrix) or not isinstance(B, WeightMatrix):
        raise TypeError("operands must be WeightMatrix instances")
    if A.n != B.n:
        raise ValueError(f"dimension mismatch: {A.n} vs {B.n}")
    return A.n


def _pack_matrix(A: WeightMatrix) -> tuple[np.ndarray, np.ndarray]:
    flat = [v for row in A.entries for v in row]
    return _bulk.pack(flat)


def _matrix_from_packed(n: int, e: np.ndarray, m: np.ndarray) -> WeightMatrix:
    vals = _bulk.unpack_raw(e, m)
    entries = tuple(tuple(vals[i * n:(i + 1) * n]) for i in range(n))
    return WeightMatrix(n=n, entries=entries)


# ----- exact oracle --------------------------------------------------------------

def minplus_product_naive(A: WeightMatrix, B: WeightMatrix) -> WeightMatrix:
    """Exact min-plus product by the definition: cubic loop of adds and mins.

    Serves as the oracle all approximate products are measured against; every
    addition and minimum comparison is tallied.
    """
    n = _require_same_shape(A, B)
    rows = []
    for i in range(n):
        arow = A.entries[i]
        out_row = []
        for j in range(n):
            best = INF
            for k in range(n):
                s = ef_add(arow[k], B.entries[k][j])
                count_comparisons()
                if s._key() < best._key():
                    best = s
            out_row.append(best)
        rows.append(tuple(out_row))
    return WeightMatrix(n=n, entries=tuple(rows))


# ----- covering-based approximate product ----------------------------------------

def approx_minplus_product(A: WeightMatrix, B: WeightMatrix,
                           eps: Rational) -> WeightMatrix:
    """(1+eps)-approximate min-plus product with magnitude-independent tally.

    Views A and B as length-n^2 weight vectors (their finite entries), builds
    the strong sum-to-max covering of all pairwise sums, replaces each layer's
    values by ranks, solves the layer as an exact (min,max) product over the
    ranks, decodes, and folds all layers by entry-wise minimum.  Each output
    entry is the max of a stored layer pair dominating the true min sum, so

        C[i,j]  <=  C~[i,j]  <=  (1+eps) C[i,j]

    entry-wise, up to the 53-bit rounding of stored layer entries; pairs left
    uncovered on purpose (an all-infinite row/column) stay at +inf, which is
    exact.

    Tallied work: the covering construction plus, per layer, one rank
    compression of the layer's entries and an n^2 entry-wise minimum fold.
    All (min,max) work happens on integer ranks and is free, as are
    index bookkeeping and the reuse of the construction's sorted order for
    distant layers (their entries are verbatim copies of already-sorted
    values, so their ranks follow without touching weights again).
    """
    eps = as_eps(eps)
    n = _require_same_shape(A, B)
    ea, ma = _pack_matrix(A)
    eb, mb = _pack_matrix(B)
    fa = np.flatnonzero(~_bulk.is_inf(ea))
    fb = np.flatnonzero(~_bulk.is_inf(eb))
    acc_e, acc_m = _bulk.full_inf(n * n)
    if fa.size and fb.size:
        sub_a = _bulk.unpack_raw(ea[fa], ma[fa])
        sub_b = _bulk.unpack_raw(eb[fb], mb[fb])
        total, layers = stream_strong_covering_arrays(sub_a, sub_b, eps)
        # Rank width of one layer: entries come from both vectors, so the
        # rank-compression charge per entry is the bit length of the largest
        # possible layer size (uniform across layers by design).
        bits = max(1, (fa.size + fb.size - 1).bit_length())
        seen = 0
        for lay in layers:
            seen += 1
            count_comparisons(n * n)  # entry-wise minimum fold of this layer
            if lay.a_key is None:     # close layer: fresh values, rank afresh
                count_comparisons((lay.a_idx.size + lay.b_idx.size) * bits)
            _fold_layer(lay, fa, fb, n, acc_e, acc_m)
        if seen != total:
            raise AssertionError("covering stream ended before its layer total")
    return _matrix_from_packed(n, acc_e, acc_m)


def _fold_layer(lay, fa: np.ndarray, fb: np.ndarray, n: int,
                acc_e: np.ndarray, acc_m: np.ndarray) -> None:
    """Min-fold one covering layer into the accumulator.

    The layer's a-entries sit at flat positions of A (row i, inner index k)
    and its b-entries at flat positions of B (inner index k, column j).  Only
    inner indices present on both sides can produce a candidate, so the
    (min,max) product is restricted to those k and to the rows/columns the
    surviving entries touch -- the layer stack is sparse, and this keeps the
    per-layer work proportional to what the layer mentions instead of n^2.
    All of it is rank/index bookkeeping (the weight-level charges were
    tallied by the caller), so the block below is uncounted.
    """
    with counting_paused():
        a_pos = fa[lay.a_idx]
        b_pos = fb[lay.b_idx]
        ai, ak = a_pos // n, a_pos % n
        bk, bj = b_pos // n, b_pos % n
        ks = np.intersect1d(np.unique(ak), np.unique(bk))
        if ks.size == 0:
            return
        keep_a = np.isin(ak, ks)
        keep_b = np.isin(bk, ks)
        ai, ak = ai[keep_a], ak[keep_a]
        bk, bj = bk[keep_b], bj[keep_b]
        na = ai.size
        if lay.a_key is not None:
            # Distant layer: entries are value-sorted already (by position in
            # the construction's sorted order); ranks are a permutation.
            key = np.concatenate([lay.a_key[keep_a], lay.b_key[keep_b]])
            order = np.argsort(key)
            ranks = np.empty(key.size, np.int64)
            ranks[order] = np.arange(1, key.size + 1)
            ve = np.concatenate([lay.a_exp[keep_a], lay.b_exp[keep_b]])[order]
            vm = np.concatenate([lay.a_man[keep_a], lay.b_man[keep_b]])[order]
        else:
            ranks, ve, vm = _bulk.dedup_ranks(
                np.concatenate([lay.a_exp[keep_a], lay.b_exp[keep_b]]),
                np.concatenate([lay.a_man[keep_a], lay.b_man[keep_b]]))
        top = ve.size + 1
        I = np.unique(ai)
        J = np.unique(bj)
        Ag = np.full((I.size, ks.size), top, np.int64)
        Ag[np.searchsorted(I, ai), np.searchsorted(ks, ak)] = ranks[:na]
        Bg = np.full((ks.size, J.size), top, np.int64)
        Bg[np.searchsorted(ks, bk), np.searchsorted(J, bj)] = ranks[na:]
        out = np.full((I.size, J.size), top, np.int64)
        for c in range(ks.size):
            np.minimum(out, np.maximum(Ag[:, c][:, None], Bg[c][None, :]), out=out)
        hit = out < top
        if not hit.any():
            return
        idx = (I[:, None] * n + J[None, :])[hit]
        r = out[hit] - 1
        ce, cm = ve[r], vm[r]
        take = _bulk.less(ce, cm, acc_e[idx], acc_m[idx])
        upd = idx[take]
        acc_e[upd] = ce[take]
        acc_m[upd] = cm[take]


# ----- scaling-based product (the magnitude-dependent contrast) -------------------

def _ceil_log2(v: ExpFloat) -> int:
    """Smallest q with v <= 2^q, for finite positive v."""
    return v.exp if v.man == _MAN_ONE else v.exp + 1


def _ceil_recip(eps) -> int:
    """ceil(1/eps) for a positive Fraction."""
    return -((-eps.denominator) // eps.numerator)


def _scale_packed(e: np.ndarray, m: np.ndarray, q: int, num: int, den: int,
                  t_eps: int) -> np.ndarray:
    """Packed-array core of `zwick_scale`: ceil(value / (eps 2^q)) as int64.

    Entries above the 2^q cutoff (and +inf) become INT_INF.  One comparison
    per entry (the cutoff test) and one multiplication per surviving entry
    (the scaled division) are tallied.  Within the cutoff the quotient
    exceeds 1 only when the entry is within ~1/eps of 2^q, so only the lanes
    near the cutoff need exact big-integer ceilings.
    """
    inr = (~_bulk.is_inf(e)) & ((e < q) | ((e == q) & (m == _MAN_ONE)))
    count_comparisons(e.size)
    count_multiplications(int(inr.sum()))
    out = np.full(e.size, INT_INF, dtype=np.int64)
    with counting_paused():
        near = inr & (e >= q - t_eps - 1)
        out[inr & ~near] = 1
        for i in np.flatnonzero(near).tolist():
            sh = 52 - int(e[i]) + q
            out[i] = -((-int(m[i]) * den) // (num << sh))
    return out


def zwick_scale(A, q: int, eps: Rational) -> np.ndarray:
    """Round weights at scale 2^q to the small integers ceil(A[i,j]/(eps 2^q)).

    Entries at most 2^q map into {1, ..., ceil(1/eps)} (the boundary entry
    2^q itself maps to ceil(1/eps)); larger and infinite entries map to the
    INT_INF sentinel.  Accepts a WeightMatrix or any nested sequence of
    weights (the rows need not form a square), and returns an int64 array of
    the same shape.
    """
    eps = as_eps(eps)
    rows = A.entries if isinstance(A, WeightMatrix) else [
        [as_expfloat(v) for v in row] for row in A]
    n_rows = len(rows)
    if n_rows == 0 or len({len(r) for r in rows}) != 1:
        raise ValueError("weight rows must be non-empty and of equal length")
    e, m = _bulk.pack([v for row in rows for v in row])
    t_eps = (_ceil_recip(eps) - 1).bit_length()
    return _scale_packed(e, m, q, eps.numerator, eps.denominator,
                         t_eps).reshape(n_rows, len(rows[0]))


def _check_bounded(name: str, X: np.ndarray, M: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d integer matrix")
    bad = ~(((X >= 0) & (X <= M)) | (X == INT_INF))
    if bad.any():
        raise ValueError(f"{name} entry out of range: finite entries must lie in [0, {M}]")
    return X


def bounded_minplus_product(A, B, M: int, method: str = "naive") -> np.ndarray:
    """Exact min-plus product of M-bounded integer matrices.

    Finite entries must lie in {0, ..., M}; INT_INF marks +inf.  Output
    entries lie in {0, ..., 2M} or INT_INF.  Shapes may be rectangular with
    matching inner dimension.  This runs entirely in the small-integer
    domain, outside of weight accounting.

    method="naive": cubic loop over int64 arrays.
    method="kronecker": encodes entry a as (r+1)^(M-a) (r the inner
    dimension), multiplies the big-integer matrices, and reads each output
    off the leading digit; per-entry term counts never reach r+1, so digits
    cannot carry and the two methods agree bit for bit.
    """
    if M < 0:
        raise ValueError("bound M must be non-negative")
    A = _check_bounded("A", A, M)
    B = _check_bounded("B", B, M)
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} x {B.shape}")
    if method == "naive":
        out = np.full((A.shape[0], B.shape[1]), INT_INF, dtype=np.int64)
        for k in range(A.shape[1]):
            np.minimum(out, A[:, k][:, None] + B[k][None, :], out=out)
        out[out > 2 * M] = INT_INF
        return out
    if method == "kronecker":
        base = A.shape[1] + 1
        powers = [base ** d for d in range(2 * M + 1)]

        def encode(X):
            return np.array([[0 if v == INT_INF else powers[M - v] for v in row]
                             for row in X.tolist()], dtype=object)

        S = encode(A).dot(encode(B))
        out = np.full((A.shape[0], B.shape[1]), INT_INF, dtype=np.int64)
        for i in range(out.shape[0]):
            for j in range(out.shape[1]):
                v = S[i, j]
                if v:
                    out[i, j] = 2 * M - (bisect.bisect_right(powers, v) - 1)
        return out
    raise ValueError(f"method must be 'naive' or 'kronecker', got {method!r}")


def zwick_minplus_product(A: WeightMatrix, B: WeightMatrix,
                          eps: Rational) -> WeightMatrix:
    """Scaling-based approximate min-plus product: C <= C~ <= (1+4 eps) C.

    For every power-of-two scale 2^q from below the smallest finite entry up
    to twice the largest, rounds both matrices to integers in
    {1, ..., ceil(1/eps)} (`zwick_scale`), multiplies them exactly in the
    small-integer domain (`bounded_minplus_product`), rescales by eps 2^q
    rounding up, and keeps the entry-wise minimum across scales.  At the
    first scale with C[i,j] <= 2^q the additive rounding error is at most
    eps 2^{q+1} <= 4 eps C[i,j], giving the (1+4 eps) guarantee (callers
    wanting a clean (1+eps) divide eps by 4); the minimum over the other
    scales only helps, and never drops below C because rounding is upward.

    The number of scales -- and with it the tally -- grows with the log of
    the weight spread: this is the magnitude-DEPENDENT contrast to
    `approx_minplus_product`.
    """
    eps = as_eps(eps)
    n = _require_same_shape(A, B)
    ea, ma = _pack_matrix(A)
    eb, mb = _pack_matrix(B)
    acc_e, acc_m = _bulk.full_inf(n * n)
    fin_a = ~_bulk.is_inf(ea)
    fin_b = ~_bulk.is_inf(eb)
    if fin_a.any() and fin_b.any():
        count_comparisons(2 * int(fin_a.sum()) + 2 * int(fin_b.sum()))  # min/max scans
        with counting_paused():
            lo = min(_min_packed(ea, ma, fin_a), _min_packed(eb, mb, fin_b))
            hi = max(_max_packed(ea, ma, fin_a), _max_packed(eb, mb, fin_b))
        M = _ceil_recip(eps)
        t_eps = (M - 1).bit_length()
        num, den = eps.numerator, eps.denominator
        for q in range(min(0, _ceil_log2(lo)), _ceil_log2(hi) + 2):
            Ai = _scale_packed(ea, ma, q, num, den, t_eps).reshape(n, n)
            Bi = _scale_packed(eb, mb, q, num, den, t_eps).reshape(n, n)
            Ci = bounded_minplus_product(Ai, Bi, M).ravel()
            fin = Ci != INT_INF
            count_comparisons(n * n)                  # entry-wise min update
            count_multiplications(int(fin.sum()))     # one rescale per entry
            with counting_paused():
                if not fin.any():
                    continue
                # Rescale by table: output integers share at most 2M-1
                # distinct values, so the per-entry multiplications tallied
                # above are realized on the distinct values once each.
                te = np.empty(2 * M + 1, dtype=np.int64)
                tm = np.empty(2 * M + 1, dtype=np.int64)
                for c in range(2, 2 * M + 1):
                    v = ExpFloat.from_int(c).times_fraction(eps, "up").times_pow2(q)
                    te[c], tm[c] = v.exp, v.man
                idx = np.flatnonzero(fin)
                ce, cm = te[Ci[idx]], tm[Ci[idx]]
                take = _bulk.less(ce, cm, acc_e[idx], acc_m[idx])
                upd = idx[take]
                acc_e[upd] = ce[take]
                acc_m[upd] = cm[take]
    return _matrix_from_packed(n, acc_e, acc_m)


def _min_packed(e: np.ndarray, m: np.ndarray, mask: np.ndarray) -> ExpFloat:
    key = np.lexsort((m[mask], e[mask]))[0]
    return ExpFloat._raw(int(m[mask][key]), int(e[mask][key]))


def _max_packed(e: np.ndarray, m: np.ndarray, mask: np.ndarray) -> ExpFloat:
    key = np.lexsort((m[mask], e[mask]))[-1]
    return ExpFloat._raw(int(m[mask][key]), int(e[mask][key]))


# ----- exact (min,max) product via the approximate min-plus product ----------------

def minmax_product_via_approx(A: RankMatrix, B: RankMatrix,
                              eps: Rational = 1) -> RankMatrix:
    """Exact (min,max) rank product computed by one approximate min-plus run.

    Encodes rank v as the exact power r^v with r = 2^t the smallest power of
    two at or above 4 (1+eps)^2.  For sums of two such encodings,

        r^max  <=  r^a + r^b  <=  2 r^max  <  r^(max + 1/2),

    so the (1+eps)-approximate min-plus product of the encodings lands in
    [r^C, r^(C+1)) entry-wise, where C is the exact (min,max) product; taking
    floor(log_r .) -- an exponent division, since r is a power of two --
    recovers C exactly.  The +inf rank `top` needs no special casing: its
    encoding is just another (large) finite power.
    """
    eps = as_eps(eps)
    if A.n != B.n:
        raise ValueError(f"dimension mismatch: {A.n} vs {B.n}")
    top = _common_top(A, B)
    f = 4 * (1 + eps) ** 2
    t = 0
    while (1 << t) < f:
        t += 1
    n = A.n

    def encode(R: RankMatrix) -> WeightMatrix:
        e = (R.entries.ravel() * t).astype(np.int64)
        m = np.full(n * n, _MAN_ONE, dtype=np.int64)
        return _matrix_from_packed(n, e, m)

    c = approx_minplus_product(encode(A), encode(B), eps)
    ce, _ = _pack_matrix(c)
    if _bulk.is_inf(ce).any():
        raise AssertionError("finite encodings produced an infinite entry")
    return RankMatrix(n=n, entries=(ce // t).reshape(n, n), top=top)
