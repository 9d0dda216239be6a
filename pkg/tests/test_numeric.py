"""Tests for the extended-exponent float, grid bucketing, and rank compression."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tropcover import _bulk
from tropcover.numeric import (
    INF,
    PRECISION,
    ExpFloat,
    GeometricGrid,
    OpCounter,
    bucket_index,
    counting_paused,
    ef_add,
    ef_mul,
    rank_compress,
)

MAN_LO = 1 << (PRECISION - 1)
MAN_HI = 1 << PRECISION


# ----- independent rounding oracle ------------------------------------------

def round_nearest_even_53(fr: Fraction) -> tuple[int, int]:
    """Round a positive Fraction to (man, exp) with man in [2^52, 2^53).

    Pure-Fraction reference implementation, independent of the library's
    integer-shift internals.
    """
    assert fr > 0
    e = fr.numerator.bit_length() - fr.denominator.bit_length()
    while Fraction(2) ** e > fr:
        e -= 1
    while Fraction(2) ** (e + 1) <= fr:
        e += 1
    scaled = fr / Fraction(2) ** (e - 52)          # in [2^52, 2^53)
    man = math.floor(scaled)
    rem = scaled - man
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and man % 2 == 1):
        man += 1
    if man == MAN_HI:
        man = MAN_LO
        e += 1
    return man, e


def ef(x) -> ExpFloat:
    if isinstance(x, ExpFloat):
        return x
    if isinstance(x, int):
        return ExpFloat.from_int(x)
    return ExpFloat.from_float(float(x))


expfloats = st.builds(
    ExpFloat,
    st.integers(min_value=MAN_LO, max_value=MAN_HI - 1),
    st.integers(min_value=-180, max_value=180),
)


# ----- ef_add ----------------------------------------------------------------

def test_add_one_plus_one_is_exact_two():
    s = ef_add(ef(1), ef(1))
    assert s.exp == 1 and s.man == MAN_LO
    assert s == ef(2)


def test_add_infinity_absorbs():
    for x in (ef(1), ef(7.5), INF):
        assert ef_add(x, INF) is INF
        assert ef_add(INF, x) is INF


def test_add_large_gap_returns_larger_operand():
    big = ExpFloat(MAN_LO, 100)          # 2^100
    assert ef_add(big, ef(1)) == big
    assert ef_add(ef(1), big) == big
    # gap of exactly 54 still cannot move the larger operand
    small = ExpFloat(MAN_HI - 1, 100 - 54)
    assert ef_add(big, small) == big


@settings(max_examples=400)
@given(expfloats, expfloats)
def test_add_matches_fraction_oracle(a: ExpFloat, b: ExpFloat):
    got = ef_add(a, b)
    man, exp = round_nearest_even_53(a.to_fraction() + b.to_fraction())
    assert (got.man, got.exp) == (man, exp), (
        f"{a!r} + {b!r}: got man={got.man} exp={got.exp}, "
        f"oracle man={man} exp={exp}"
    )


@settings(max_examples=300)
@given(expfloats, expfloats, expfloats)
def test_add_monotone(a: ExpFloat, b: ExpFloat, c: ExpFloat):
    lo, hi = (a, b) if a <= b else (b, a)
    assert ef_add(lo, c) <= ef_add(hi, c)


def test_add_agrees_with_hardware_doubles():
    rng = random.Random(7)
    for _ in range(500):
        x = rng.uniform(1.0, 2.0) * 2.0 ** rng.randint(0, 500)
        y = rng.uniform(1.0, 2.0) * 2.0 ** rng.randint(0, 500)
        got = ef_add(ExpFloat.from_float(x), ExpFloat.from_float(y))
        assert got == ExpFloat.from_float(x + y), f"x={x!r} y={y!r}"


def test_bulk_add_bit_identical_to_scalar():
    rng = random.Random(11)
    vals_a, vals_b = [], []
    for _ in range(2000):
        ea = rng.randint(-40, 40) if rng.random() < 0.8 else rng.randint(-5000, 5000)
        eb = ea + rng.choice([0, 1, -3, 53, 54, 55, 200, -1500, 2000])
        vals_a.append(ExpFloat(rng.randint(MAN_LO, MAN_HI - 1), ea))
        vals_b.append(INF if rng.random() < 0.02
                      else ExpFloat(rng.randint(MAN_LO, MAN_HI - 1), eb))
    ea_, ma_ = _bulk.pack(vals_a)
    eb_, mb_ = _bulk.pack(vals_b)
    se, sm = _bulk.bulk_add(ea_, ma_, eb_, mb_)
    got = _bulk.unpack(se, sm)
    want = [ef_add(a, b) for a, b in zip(vals_a, vals_b)]
    assert got == want


# ----- ef_mul and scaling ----------------------------------------------------

@settings(max_examples=300)
@given(expfloats, expfloats)
def test_mul_matches_fraction_oracle(a: ExpFloat, b: ExpFloat):
    got = ef_mul(a, b)
    man, exp = round_nearest_even_53(a.to_fraction() * b.to_fraction())
    assert (got.man, got.exp) == (man, exp)


@settings(max_examples=200)
@given(expfloats, st.fractions(min_value=Fraction(1, 100), max_value=100))
def test_times_fraction_up_never_undershoots(a: ExpFloat, fr: Fraction):
    if fr <= 0:
        return
    got = a.times_fraction(fr, mode="up")
    assert got.to_fraction() >= a.to_fraction() * fr
    down = a.times_fraction(fr, mode="down")
    assert down.to_fraction() <= a.to_fraction() * fr


# ----- bucket_index ----------------------------------------------------------

def test_bucket_examples():
    for eps in (0.5, 0.1, 1, Fraction(1, 50)):
        assert bucket_index(ef(1), eps) == 1
    assert bucket_index(ef(2), 1) == 2
    # left-closed boundary: x equal to a representable power of (1 + eps)
    assert bucket_index(ExpFloat.from_float(1.5), 0.5) == 2
    assert bucket_index(ExpFloat.from_float(1.5 * 1.5), 0.5) == 3


def test_bucket_rejects_infinity():
    with pytest.raises(ValueError):
        bucket_index(INF, 0.5)


@settings(max_examples=150, deadline=None)
@given(
    st.integers(min_value=MAN_LO, max_value=MAN_HI - 1),
    st.integers(min_value=-120, max_value=120),
    st.sampled_from([Fraction(1, 2), Fraction(1, 10), Fraction(1, 50), Fraction(1)]),
)
def test_bucket_correct_by_exact_rational_powers(man, exp, eps):
    x = ExpFloat(man, exp)
    d = bucket_index(x, eps)
    base = 1 + eps
    xq = x.to_fraction()
    assert base ** (d - 1) <= xq < base ** d, f"x={x!r} eps={eps} d={d}"


def test_floor_log_bulk_matches_scalar():
    rng = random.Random(3)
    for eps in (Fraction(1, 2), Fraction(1, 10), Fraction(7, 100)):
        grid = GeometricGrid.for_eps(eps)
        vals = [ExpFloat(rng.randint(MAN_LO, MAN_HI - 1), rng.randint(-100, 100))
                for _ in range(300)]
        # sprinkle exact grid points to stress the boundary path
        vals += [grid.value(k) for k in range(-20, 40)]
        e, m = _bulk.pack(vals)
        for mult in (Fraction(1), eps, 1 / eps, Fraction(3, 7)):
            got = _bulk.floor_log_bulk(grid, e, m, mult)
            want = [grid.floor_log(v, mult) for v in vals]
            assert got.tolist() == want, f"eps={eps} mult={mult}"


def test_grid_value_rounding_modes():
    for eps in (Fraction(1, 2), Fraction(1, 10), Fraction(3, 100)):
        grid = GeometricGrid.for_eps(eps)
        base = 1 + eps
        for d in list(range(-40, 60)) + [500, 1201, -377]:
            exact = base ** d
            v = grid.value(d)
            ulp = Fraction(1, 1 << (PRECISION - 1 - v.exp)) if v.exp < PRECISION - 1 \
                else Fraction(1 << (v.exp - (PRECISION - 1)))
            assert abs(v.to_fraction() - exact) <= ulp / 2
            assert grid.value(d, "up").to_fraction() >= exact
            assert grid.value(d, "down").to_fraction() <= exact


# ----- rank compression ------------------------------------------------------

def test_rank_compress_spec_examples():
    ranks, rmap = rank_compress([ef(5), INF, ef(2), ef(2)])
    assert ranks == [2, 3, 1, 1]
    assert rmap.inf_rank == 3
    assert rmap.decode(3) is INF
    assert rmap.decode(2) == ef(5)

    ranks, _ = rank_compress([ef(42)])
    assert ranks == [1]

    ranks, _ = rank_compress([ef(1), ef(2), ef(3)])
    assert ranks == [1, 2, 3]


@settings(max_examples=200)
@given(st.lists(st.one_of(expfloats, st.just(INF)), min_size=1, max_size=40))
def test_rank_compress_is_order_isomorphic(values):
    ranks, rmap = rank_compress(values)
    for i in range(len(values)):
        assert rmap.decode(ranks[i]) == values[i]
        for j in range(len(values)):
            with counting_paused():
                lt_vals = values[i] < values[j]
            assert lt_vals == (ranks[i] < ranks[j])


def test_dedup_ranks_matches_rank_compress():
    rng = random.Random(5)
    vals = [INF if rng.random() < 0.1
            else ExpFloat(rng.randint(MAN_LO, MAN_HI - 1), rng.randint(-5, 5))
            for _ in range(500)]
    ranks, rmap = rank_compress(vals)
    e, m = _bulk.pack(vals)
    branks, ue, um = _bulk.dedup_ranks(e, m)
    assert branks.tolist() == ranks
    decoded = _bulk.unpack(ue, um)
    finite = [v for v in decoded if not v.is_inf]
    assert tuple(finite) == rmap.values


def brute_minmax_product(A, B, n):
    """Reference min-max product over arbitrary totally ordered values."""
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            row.append(min(max(A[i][k], B[k][j]) for k in range(n)))
        out.append(row)
    return out


def test_minmax_on_ranks_decodes_to_minmax_on_values():
    # order isomorphism carries min/max-only computations through ranks
    rng = random.Random(13)
    for n in (1, 2, 3, 5, 8, 16):
        flat = [INF if rng.random() < 0.15
                else ExpFloat(rng.randint(MAN_LO, MAN_HI - 1), rng.randint(0, 60))
                for _ in range(2 * n * n)]
        ranks, rmap = rank_compress(flat)
        A = [flat[i * n:(i + 1) * n] for i in range(n)]
        B = [flat[n * n + i * n:n * n + (i + 1) * n] for i in range(n)]
        Ar = [ranks[i * n:(i + 1) * n] for i in range(n)]
        Br = [ranks[n * n + i * n:n * n + (i + 1) * n] for i in range(n)]
        with counting_paused():
            want = brute_minmax_product(A, B, n)
            got = brute_minmax_product(Ar, Br, n)
        decoded = [[rmap.decode(r) for r in row] for row in got]
        assert decoded == want


# ----- operation counting ----------------------------------------------------

def test_each_weight_op_tallies_exactly_one():
    a, b = ef(3), ef(5)
    with OpCounter() as ops:
        ef_add(a, b)
    assert (ops.additions, ops.comparisons, ops.multiplications) == (1, 0, 0)

    with OpCounter() as ops:
        _ = a < b
    assert (ops.additions, ops.comparisons, ops.multiplications) == (0, 1, 0)

    with OpCounter() as ops:
        ef_mul(a, b)
    assert (ops.additions, ops.comparisons, ops.multiplications) == (0, 0, 1)

    with OpCounter() as ops:
        a.times_fraction(Fraction(3, 2))
    assert ops.multiplications == 1 and ops.total() == 1


def test_counting_pause_and_fixed_sort_charge():
    vals = [ef(k) for k in range(1, 9)]
    with OpCounter() as ops:
        rank_compress(vals)
    assert ops.comparisons == 8 * 3   # n * ceil(log2 n), independent of order
    with OpCounter() as ops:
        with counting_paused():
            ef_add(vals[0], vals[1])
            _ = vals[0] < vals[1]
    assert ops.total() == 0


def test_bulk_add_tallies_lane_count():
    e, m = _bulk.pack([ef(1)] * 17)
    with OpCounter() as ops:
        _bulk.bulk_add(e, m, e, m)
    assert ops.additions == 17


def test_counter_merge_and_reset():
    c1 = OpCounter(additions=2, comparisons=1, multiplications=4)
    c2 = OpCounter(additions=1)
    c1.merge(c2)
    assert c1.total() == 8
    c1.reset()
    assert c1.total() == 0


# ----- fraction-input floor log ----------------------------------------------

@given(
    st.fractions(min_value=Fraction(1, 10**9), max_value=Fraction(10**9)),
    st.sampled_from([Fraction(1, 2), Fraction(1, 10), Fraction(3, 7), Fraction(1)]),
)
@settings(max_examples=200, deadline=None)
def test_floor_log_fraction_matches_exact_powers(x, eps):
    grid = GeometricGrid.for_eps(eps)
    k, exact = grid.floor_log_fraction(x)
    base = 1 + eps
    assert base ** k <= x < base ** (k + 1)
    assert exact == (base ** k == x)


def test_floor_log_fraction_exact_points():
    grid = GeometricGrid.for_eps(Fraction(1, 2))
    for k in (-40, -1, 0, 1, 17):
        assert grid.floor_log_fraction(Fraction(3, 2) ** k) == (k, True)
    assert grid.floor_log_fraction(Fraction(3, 2) ** 5 + Fraction(1, 10**30)) == (5, False)
    with pytest.raises(ValueError):
        grid.floor_log_fraction(Fraction(0))


# ----- bulk rescaling ---------------------------------------------------------

@given(
    st.lists(
        st.tuples(st.integers(min_value=MAN_LO, max_value=MAN_HI - 1),
                  st.integers(min_value=-300, max_value=300)),
        min_size=1, max_size=60,
    ),
    st.sampled_from([(1, 1), (625, 624), (25, 23), (3, 2), (2, 1),
                     (199, 100), (10**15 + 1, 10**15)]),
)
@settings(max_examples=150, deadline=None)
def test_bulk_scale_up_matches_scalar(pairs, factor):
    num, den = factor
    fr = Fraction(num, den)
    vals = [ExpFloat(m, e) for m, e in pairs] + [INF]
    e_in, m_in = _bulk.pack(vals)
    e_out, m_out = _bulk.bulk_scale_up(e_in, m_in, num, den)
    got = _bulk.unpack(e_out, m_out)
    want = [v.times_fraction(fr, "up") if v.is_finite else INF for v in vals]
    assert got == want


def test_bulk_scale_up_boundary_mantissas():
    fr = (3, 2)
    vals = [ExpFloat(MAN_LO, 0), ExpFloat(MAN_HI - 1, 0), ExpFloat(MAN_HI - 2, -5)]
    e, m = _bulk.pack(vals)
    eo, mo = _bulk.bulk_scale_up(e, m, *fr)
    want = [v.times_fraction(Fraction(*fr), "up") for v in vals]
    assert _bulk.unpack(eo, mo) == want


def test_bulk_scale_up_huge_denominator_fallback():
    num = (1 << 61) + 1
    den = 1 << 61
    vals = [ExpFloat(MAN_HI - 1, 10), INF, ExpFloat(MAN_LO, -3)]
    e, m = _bulk.pack(vals)
    with OpCounter() as ops:
        eo, mo = _bulk.bulk_scale_up(e, m, num, den)
    assert ops.multiplications == 3
    want = [v.times_fraction(Fraction(num, den), "up") if v.is_finite else INF
            for v in vals]
    assert _bulk.unpack(eo, mo) == want


def test_bulk_scale_up_counts_and_validates():
    e, m = _bulk.pack([ExpFloat(MAN_LO, 0)] * 9)
    with OpCounter() as ops:
        _bulk.bulk_scale_up(e, m, 7, 6)
    assert ops.multiplications == 9
    with pytest.raises(ValueError):
        _bulk.bulk_scale_up(e, m, 5, 2)   # factor > 2
    with pytest.raises(ValueError):
        _bulk.bulk_scale_up(e, m, 1, 2)   # factor < 1


# ----- raw constructor and eps validation ------------------------------------

def test_raw_constructor_matches_validated():
    x = ExpFloat._raw(MAN_LO + 12345, -77)
    assert x == ExpFloat(MAN_LO + 12345, -77)
    with pytest.raises(AttributeError):
        x.man = 3


def test_as_eps_accepts_rationals_and_rejects_junk():
    from tropcover.numeric import as_eps
    assert as_eps(Fraction(1, 10)) == Fraction(1, 10)
    assert as_eps("0.1") == Fraction(1, 10)
    assert as_eps(1) == 1
    assert as_eps(0.5) == Fraction(1, 2)
    for bad in (0, -1, Fraction(11, 10), "1.5"):
        with pytest.raises(ValueError):
            as_eps(bad)
    for junk in (None, [1], True):
        with pytest.raises(TypeError):
            as_eps(junk)
