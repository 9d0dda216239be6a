"""Shared test utilities: covering-family evaluation and sandwich assertions.

The numpy evaluator computes, for every index pair (i, j), the minimum over
layers of max{A^(l)[i], B^(l)[j]} straight from the published family.  A
pure-Python twin (`family_minmax_brute`) exists so the two can be checked
against each other on small instances before either is trusted.  Bound
checking runs a float64 screen with a wide safety band and falls back to
exact Fraction arithmetic on any lane the screen cannot clear.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from tropcover import _bulk
from tropcover._bulk import INF_EXP
from tropcover.numeric import ExpFloat, counting_paused


def random_expfloats(rng, n: int, span_bits: int) -> list[ExpFloat]:
    """n weights >= 1 with uniformly random 53-bit mantissas and binary
    magnitudes spread over span_bits orders."""
    return [ExpFloat((1 << 52) | rng.getrandbits(52), rng.randrange(span_bits + 1))
            for _ in range(n)]


def family_minmax(fam) -> tuple[np.ndarray, np.ndarray]:
    """(exp, man) arrays of shape (n, n): per pair, the min over layers of the
    max entry pair; +inf sentinel where no layer holds both indices."""
    n = fam.n
    acc_e = np.full((n, n), INF_EXP, dtype=np.int64)
    acc_m = np.zeros((n, n), dtype=np.int64)
    with counting_paused():
        for layer in fam.layers:
            if not layer.a_entries or not layer.b_entries:
                continue
            ai = list(layer.a_entries)
            bj = list(layer.b_entries)
            ea, ma = _bulk.pack(list(layer.a_entries.values()))
            eb, mb = _bulk.pack(list(layer.b_entries.values()))
            ea, ma = ea[:, None], ma[:, None]
            take_b = (eb > ea) | ((eb == ea) & (mb > ma))
            ce = np.where(take_b, eb, ea)
            cm = np.where(take_b, mb, ma)
            ix = np.ix_(ai, bj)
            se, sm = acc_e[ix], acc_m[ix]
            better = (ce < se) | ((ce == se) & (cm < sm))
            acc_e[ix] = np.where(better, ce, se)
            acc_m[ix] = np.where(better, cm, sm)
    return acc_e, acc_m


def family_minmax_brute(fam) -> list[list[ExpFloat | None]]:
    """Object-by-object twin of `family_minmax` for cross-validation."""
    n = fam.n
    out: list[list[ExpFloat | None]] = [[None] * n for _ in range(n)]
    for layer in fam.layers:
        for i, av in layer.a_entries.items():
            ak = av._key()
            row = out[i]
            for j, bv in layer.b_entries.items():
                m = bv if bv._key() >= ak else av
                if row[j] is None or m._key() < row[j]._key():
                    row[j] = m
    return out


def _exact_pair_minmax(fam, i: int, j: int) -> Fraction | None:
    best: ExpFloat | None = None
    for layer in fam.layers:
        av = layer.a_entries.get(i)
        bv = layer.b_entries.get(j)
        if av is None or bv is None:
            continue
        m = bv if bv._key() >= av._key() else av
        if best is None or m._key() < best._key():
            best = m
    return None if best is None else best.to_fraction()


SLACK = Fraction(1, 2**40)


def assert_sandwich(A: list[ExpFloat], B: list[ExpFloat], fam,
                    lo: Fraction, hi: Fraction,
                    slack: Fraction = SLACK) -> None:
    """Assert lo*(1-slack) <= minmax/(A[i]+B[j]) <= hi*(1+slack) on all pairs.

    Float64 screen first (relative error < 2^-48, screened with band 2^-44),
    exact Fractions on every lane the screen cannot clear.
    """
    n = fam.n
    acc_e, acc_m = family_minmax(fam)
    uncovered = np.nonzero(acc_e.ravel() == INF_EXP)[0]
    assert uncovered.size == 0, \
        f"pair {divmod(int(uncovered[0]), n)} not covered by any layer"
    with counting_paused():
        eA, mA = _bulk.pack(A)
        eB, mB = _bulk.pack(B)
        se, sm = _bulk.bulk_add(np.repeat(eA, n), np.repeat(mA, n),
                                np.tile(eB, n), np.tile(mB, n))
    lo_exact = lo * (1 - slack)
    hi_exact = hi * (1 + slack)
    diff = np.clip(acc_e.ravel() - se, -1000, 1000).astype(np.float64)
    ratio = (acc_m.ravel() / sm) * np.exp2(diff)
    band = 2.0 ** -44
    ok = (ratio >= float(lo_exact) * (1 + band)) & \
         (ratio <= float(hi_exact) * (1 - band))
    for t in np.nonzero(~ok)[0].tolist():
        i, j = divmod(t, n)
        r = _exact_pair_minmax(fam, i, j) / (A[i].to_fraction() + B[j].to_fraction())
        assert lo_exact <= r <= hi_exact, (
            f"pair ({i},{j}): ratio {float(r):.17g} outside "
            f"[{float(lo_exact):.17g}, {float(hi_exact):.17g}]")
