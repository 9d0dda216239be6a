"""Vector kernels over (exponent, mantissa) struct-of-arrays weight data.

Internal module.  Arrays of int64 exponents/mantissas mirror lists of
ExpFloat (+inf encoded as exponent 2^62, mantissa 0, which sorts last), so
hot paths run in numpy while staying bit-identical to the scalar ops in
`numeric`.  The float64 addition fast path is exact: IEEE binary64 addition
performs the same nearest-even rounding at 53 bits as `ef_add`, provided the
operands are brought into double range first, which the per-element offset
guarantees.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .numeric import (
    PRECISION,
    ExpFloat,
    GeometricGrid,
    INF,
    _INF_EXP,
    _log2_big,
    count_additions,
    count_multiplications,
    counting_paused,
)

INF_EXP = _INF_EXP
_F52 = float(2**52)


def pack(values: Sequence[ExpFloat]) -> tuple[np.ndarray, np.ndarray]:
    exp = np.fromiter((v.exp for v in values), dtype=np.int64, count=len(values))
    man = np.fromiter((v.man for v in values), dtype=np.int64, count=len(values))
    return exp, man


def unpack(exp: np.ndarray, man: np.ndarray) -> list[ExpFloat]:
    return [INF if e == INF_EXP else ExpFloat(m, e)
            for e, m in zip(exp.tolist(), man.tolist())]


def unpack_raw(exp, man) -> list[ExpFloat]:
    """Trusted unpack for arrays produced by our own kernels: skips the
    constructor validation (bulk layer materialization is creation-bound)."""
    new = ExpFloat.__new__
    set_man = ExpFloat.man.__set__
    set_exp = ExpFloat.exp.__set__

    def mk(m: int, e: int) -> ExpFloat:
        if e == INF_EXP:
            return INF
        out = new(ExpFloat)
        set_man(out, m)
        set_exp(out, e)
        return out

    return list(map(mk, man.tolist(), exp.tolist()))


def full_inf(n: int) -> tuple[np.ndarray, np.ndarray]:
    return (np.full(n, INF_EXP, dtype=np.int64), np.zeros(n, dtype=np.int64))


def is_inf(exp: np.ndarray) -> np.ndarray:
    return exp == INF_EXP


def less(e1, m1, e2, m2) -> np.ndarray:
    """Elementwise value comparison: (e1, m1) < (e2, m2) lexicographically."""
    return (e1 < e2) | ((e1 == e2) & (m1 < m2))


def minimum_update(acc_e: np.ndarray, acc_m: np.ndarray, e, m) -> None:
    """acc := min(acc, other), in place."""
    take = less(e, m, acc_e, acc_m)
    np.copyto(acc_e, e, where=take)
    np.copyto(acc_m, m, where=take)


def dedup_ranks(exp: np.ndarray, man: np.ndarray
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1-based ranks plus the sorted distinct (exp, man) arrays.

    +inf, when present, lands at the top rank automatically thanks to its
    sentinel exponent.
    """
    n = len(exp)
    if n == 0:
        return (np.empty(0, np.int64),) * 3
    order = np.lexsort((man, exp))
    se, sm = exp[order], man[order]
    new = np.empty(n, dtype=bool)
    new[0] = True
    new[1:] = (se[1:] != se[:-1]) | (sm[1:] != sm[:-1])
    gid = np.cumsum(new)
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = gid
    return ranks, se[new], sm[new]


# ----- exact bulk addition ---------------------------------------------------

def bulk_add(e1, m1, e2, m2) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise ef_add; bit-identical to the scalar op, one tally per lane.

    Offsetting both operands by the larger exponent puts every lane within
    double range, where hardware addition *is* 53-bit nearest-even rounding.
    Lanes whose exponent gap exceeds ~1100 clamp the small operand to a
    subnormal/zero, which cannot perturb the result: past a gap of 54 the sum
    already rounds to the larger operand.
    """
    e1 = np.asarray(e1, np.int64); m1 = np.asarray(m1, np.int64)
    e2 = np.asarray(e2, np.int64); m2 = np.asarray(m2, np.int64)
    count_additions(e1.size)
    inf = (e1 == INF_EXP) | (e2 == INF_EXP)
    off = np.where(inf, 0, np.maximum(e1, e2))
    g1 = np.maximum(np.where(inf, 0, e1) - off, -1100).astype(np.int32)
    g2 = np.maximum(np.where(inf, 0, e2) - off, -1100).astype(np.int32)
    a = np.ldexp(m1.astype(np.float64), g1 - (PRECISION - 1))
    b = np.ldexp(m2.astype(np.float64), g2 - (PRECISION - 1))
    s = a + b
    frac, e_out = np.frexp(s)
    man = (frac * float(1 << PRECISION)).astype(np.int64)   # exact: frac has <= 53 bits
    exp = off + e_out.astype(np.int64) - 1
    exp[inf] = INF_EXP
    man[inf] = 0
    return exp, man


# ----- exact bulk rescaling ---------------------------------------------------

def bulk_scale_up(exp, man, num: int, den: int) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise value * (num/den), rounded up at 53 bits; +inf unchanged.

    Bit-identical to ``times_fraction(Fraction(num, den), "up")`` per lane,
    with one tallied multiplication per lane.  Restricted to scale factors in
    [1, 2], which covers the covering-family rescale 1/(1 - 2*eps/5).

    The quotient floor(man*num/den) is recovered exactly from a float
    estimate plus a wraparound-uint64 residual correction; oversized
    numerators/denominators fall back to the scalar op.
    """
    exp = np.asarray(exp, np.int64)
    man = np.asarray(man, np.int64)
    if den < 1 or not (den <= num <= 2 * den):
        raise ValueError("bulk_scale_up requires a scale factor in [1, 2]")
    count_multiplications(exp.size)
    if num == den:
        return exp.copy(), man.copy()
    if max(num, den) >= 1 << 59:
        # exact but slow path for pathological eps denominators
        fr = Fraction(num, den)
        with counting_paused():
            out = [INF if e == INF_EXP else
                   ExpFloat(int(m), int(e)).times_fraction(fr, "up")
                   for e, m in zip(exp.tolist(), man.tolist())]
        return pack(out)
    inf = exp == INF_EXP
    f = num / den
    q = np.floor(man.astype(np.float64) * f).astype(np.int64)
    # residual man*num - q*den fits int64; wraparound arithmetic recovers it
    resid = (man.astype(np.uint64) * np.uint64(num)
             - q.astype(np.uint64) * np.uint64(den)).astype(np.int64)
    adj = resid // den
    q = q + adj
    r = resid - adj * den
    q = q + (r > 0)                      # round up at full precision
    e_out = exp.copy()
    top = np.int64(1 << PRECISION)
    while np.any(q >= top):
        mask = q >= top
        q = np.where(mask, (q + 1) >> 1, q)   # ceil-halving preserves round-up
        e_out = e_out + mask
    q[inf] = 0
    e_out[inf] = INF_EXP
    return e_out, q


# ----- certified bulk grid indices -------------------------------------------

def _log2_estimate(exp: np.ndarray, man: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(estimate, absolute error bound) of log2(value) per finite lane."""
    est = (exp - (PRECISION - 1)).astype(np.float64) + np.log2(man.astype(np.float64))
    err = np.abs(est) * 2.0**-52 + 2.0**-45
    return est, err


def floor_log_bulk(grid: GeometricGrid, exp: np.ndarray, man: np.ndarray,
                   mult: Fraction = Fraction(1)) -> np.ndarray:
    """Per-lane largest k with (1+eps)^k <= value * mult (values finite).

    Float estimates with certified margins; lanes too close to a grid
    boundary (or with oversized exponents) are settled by the scalar
    certified comparison.
    """
    exp = np.asarray(exp, np.int64)
    man = np.asarray(man, np.int64)
    est, err = _log2_estimate(exp, man)
    if mult != 1:
        c = _log2_big(mult.numerator) - _log2_big(mult.denominator)
        est = est + c
        err = err + 2.0**-44 + np.abs(est) * 2.0**-52
    L = grid.log2_base
    t = est / L
    terr = np.abs(t) * (2.0**-44 / L) + err / L
    margin = terr * 4.0 + 2.0**-40
    k = np.floor(t).astype(np.int64)
    flagged = (np.floor(t - margin) != np.floor(t + margin)) \
        | (np.abs(exp) > 2**50)
    for i in np.flatnonzero(flagged):
        k[i] = grid.floor_log(ExpFloat(int(man[i]), int(exp[i])), mult)
    return k


def grid_values(grid: GeometricGrid, d_lo: int, d_hi: int, mode: str = "nearest"
                ) -> tuple[np.ndarray, np.ndarray, int]:
    """Packed (1+eps)^d for d in [d_lo, d_hi]; returns (exp, man, d_lo)."""
    vals = [grid.value(d, mode) for d in range(d_lo, d_hi + 1)]
    e, m = pack(vals)
    return e, m, d_lo
