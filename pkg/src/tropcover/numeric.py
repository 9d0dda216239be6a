"""Extended-exponent positive floats, geometric-grid bucketing, rank compression.

`ExpFloat` is the weight type used everywhere in this library: a 53-bit
mantissa paired with a wide signed integer exponent, plus a +inf sentinel.
Addition rounds to nearest-even exactly like IEEE binary64, so values behave
like hardware doubles but with essentially unlimited exponent headroom.

`GeometricGrid` answers questions about the grid {(1+eps)^k : k integer}
with certified integer interval arithmetic -- float estimates are used only
as a starting guess and every answer is verified, so bucket indices are exact
no matter how extreme the exponents get.

`OpCounter` tallies weight-level operations (additions, comparisons, scalar
multiplications).  Algorithms in this library are engineered so that the
tallied totals depend on the input size and eps, not on how large the weights
are; the test suite checks exactly that.
"""

from __future__ import annotations

import contextvars
import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence, Union

__all__ = [
    "PRECISION",
    "ExpFloat",
    "INF",
    "OpCounter",
    "RankMap",
    "ef_add",
    "ef_mul",
    "as_eps",
    "bucket_index",
    "rank_compress",
    "GeometricGrid",
]

# ----- representation constants -------------------------------------------

PRECISION = 53                      # mantissa bits, matching binary64
_MAN_LO = 1 << (PRECISION - 1)      # 2^52, smallest normalized mantissa
_MAN_HI = 1 << PRECISION            # 2^53, one past the largest
_INF_EXP = 1 << 62                  # exponent sentinel for +inf (sorts last)
_EXP_LIMIT = 1 << 61                # |exponent| bound for finite values

Rational = Union[int, float, Fraction]


# ----- operation counting ---------------------------------------------------

_ACTIVE: contextvars.ContextVar["OpCounter | None"] = contextvars.ContextVar(
    "tropcover_active_opcounter", default=None
)


@dataclass
class OpCounter:
    """Tally of weight-level arithmetic performed while this counter is active.

    Use as a context manager::

        with OpCounter() as ops:
            run_something()
        print(ops.total())

    Only operations on ExpFloat values are tallied.  Bookkeeping on small
    integers (ranks, bucket indices, event-queue positions) is deliberately
    not: replacing weights by their ranks is precisely how the algorithms
    here stay independent of the weight magnitude, and the counter measures
    the part that touches actual weights.
    """

    additions: int = 0
    comparisons: int = 0
    multiplications: int = 0

    def total(self) -> int:
        return self.additions + self.comparisons + self.multiplications

    def reset(self) -> None:
        self.additions = 0
        self.comparisons = 0
        self.multiplications = 0

    def merge(self, other: "OpCounter") -> None:
        """Fold another counter's tallies into this one (parallel aggregation)."""
        self.additions += other.additions
        self.comparisons += other.comparisons
        self.multiplications += other.multiplications

    def as_dict(self) -> dict[str, int]:
        return {
            "additions": self.additions,
            "comparisons": self.comparisons,
            "multiplications": self.multiplications,
            "total": self.total(),
        }

    def __enter__(self) -> "OpCounter":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)


def count_additions(k: int = 1) -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.additions += k


def count_comparisons(k: int = 1) -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.comparisons += k


def count_multiplications(k: int = 1) -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.multiplications += k


@contextmanager
def counting_paused() -> Iterator[None]:
    """Suspend tallying (for oracle checks and rank-domain bookkeeping)."""
    token = _ACTIVE.set(None)
    try:
        yield
    finally:
        _ACTIVE.reset(token)


# ----- rounding helpers ------------------------------------------------------

def _round_shifted(m: int, shift: int, mode: str, sticky: bool = False) -> int:
    """Round m / 2^shift to an integer. Modes: nearest (ties-to-even), up, down.

    `sticky` signals that the true value is strictly larger than m / 2^shift
    by less than one unit in the last discarded position.
    """
    if shift <= 0:
        if sticky and mode == "up":
            return (m << -shift) + 1
        return m << -shift
    floor = m >> shift
    rem = m & ((1 << shift) - 1)
    if rem == 0 and not sticky:
        return floor
    if mode == "down":
        return floor
    if mode == "up":
        return floor + 1
    half = 1 << (shift - 1)
    if rem > half or (rem == half and (sticky or (floor & 1))):
        return floor + 1
    return floor


def _normalized(M: int, E: int, mode: str = "nearest", sticky: bool = False) -> "ExpFloat":
    """ExpFloat nearest to (or directed-rounded from) the value M * 2^E, M >= 1."""
    extra = M.bit_length() - PRECISION
    man = _round_shifted(M, extra, mode, sticky)
    if man == _MAN_HI:
        man = _MAN_LO
        extra += 1
    return ExpFloat(man, E + PRECISION - 1 + extra)


def _from_ratio(N: int, D: int, E: int, mode: str = "nearest") -> "ExpFloat":
    """Exactly rounded ExpFloat for the value (N / D) * 2^E with N, D >= 1."""
    t = 56 - (N.bit_length() - D.bit_length())
    if t >= 0:
        Q, R = divmod(N << t, D)
    else:
        Q, R = divmod(N, D << -t)
    # Q has ~56 bits, so _normalized truncates and the sticky bit is honored.
    return _normalized(Q, E - t, mode, sticky=(R != 0))


# ----- the weight type -------------------------------------------------------

class ExpFloat:
    """Positive binary float ``man * 2^(exp-52)`` with man in [2^52, 2^53), or +inf.

    Instances are immutable and totally ordered; +inf compares greater than
    every finite value.  All finite library inputs are >= 1 (enforced where
    instances enter as weights, not here -- intermediate quantities such as
    grid powers with negative index legitimately dip below 1).
    """

    __slots__ = ("man", "exp")

    def __init__(self, man: int, exp: int) -> None:
        if exp == _INF_EXP and man == 0:
            pass  # the +inf sentinel
        elif not (_MAN_LO <= man < _MAN_HI):
            raise ValueError(f"mantissa {man} not normalized to [2^52, 2^53)")
        elif not (-_EXP_LIMIT < exp < _EXP_LIMIT):
            raise OverflowError(f"exponent {exp} out of range")
        object.__setattr__(self, "man", man)
        object.__setattr__(self, "exp", exp)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("ExpFloat is immutable")

    # -- constructors --

    @classmethod
    def _raw(cls, man: int, exp: int) -> "ExpFloat":
        """Trusted constructor skipping validation (bulk-array unpacking)."""
        out = object.__new__(cls)
        object.__setattr__(out, "man", man)
        object.__setattr__(out, "exp", exp)
        return out

    @classmethod
    def from_int(cls, k: int) -> "ExpFloat":
        if k < 1:
            raise ValueError("ExpFloat.from_int requires a positive integer")
        return _normalized(k, 0)

    @classmethod
    def from_float(cls, x: float) -> "ExpFloat":
        if math.isinf(x):
            return INF
        if not (x > 0.0) or math.isnan(x):
            raise ValueError(f"ExpFloat requires a positive value, got {x!r}")
        frac, e = math.frexp(x)              # x = frac * 2^e, frac in [0.5, 1)
        man = int(frac * _MAN_HI)
        return ExpFloat(man, e - 1)

    @classmethod
    def from_fraction(cls, fr: Fraction, mode: str = "nearest") -> "ExpFloat":
        if fr <= 0:
            raise ValueError("ExpFloat requires a positive value")
        return _from_ratio(fr.numerator, fr.denominator, 0, mode)

    # -- predicates and conversions --

    @property
    def is_inf(self) -> bool:
        return self.exp == _INF_EXP

    @property
    def is_finite(self) -> bool:
        return self.exp != _INF_EXP

    def to_fraction(self) -> Fraction:
        if self.is_inf:
            raise OverflowError("+inf has no rational value")
        e = self.exp - (PRECISION - 1)
        if e >= 0:
            return Fraction(self.man << e, 1)
        return Fraction(self.man, 1 << -e)

    def to_float(self) -> float:
        """Nearest double (inf when the exponent exceeds the binary64 range)."""
        if self.is_inf:
            return math.inf
        e = self.exp - (PRECISION - 1)
        if self.exp > 1024:
            return math.inf
        if self.exp < -1080:
            return 0.0
        return math.ldexp(self.man, e)

    def __float__(self) -> float:
        return self.to_float()

    # -- total order (tallied as weight comparisons) --

    def _key(self) -> tuple[int, int]:
        return (self.exp, self.man)

    def __lt__(self, other: "ExpFloat") -> bool:
        count_comparisons()
        return self._key() < other._key()

    def __le__(self, other: "ExpFloat") -> bool:
        count_comparisons()
        return self._key() <= other._key()

    def __gt__(self, other: "ExpFloat") -> bool:
        count_comparisons()
        return self._key() > other._key()

    def __ge__(self, other: "ExpFloat") -> bool:
        count_comparisons()
        return self._key() >= other._key()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExpFloat):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    # -- arithmetic --

    def __add__(self, other: "ExpFloat") -> "ExpFloat":
        return ef_add(self, other)

    def __mul__(self, other: "ExpFloat") -> "ExpFloat":
        return ef_mul(self, other)

    def times_fraction(self, fr: Fraction, mode: str = "nearest") -> "ExpFloat":
        """Scale by a positive rational; one tallied multiplication."""
        if fr <= 0:
            raise ValueError("scale must be positive")
        count_multiplications()
        if self.is_inf:
            return INF
        return _from_ratio(self.man * fr.numerator, fr.denominator,
                           self.exp - (PRECISION - 1), mode)

    def times_pow2(self, k: int) -> "ExpFloat":
        """Exact scale by 2^k (exponent bookkeeping, not tallied)."""
        if self.is_inf:
            return INF
        return ExpFloat(self.man, self.exp + k)

    def __repr__(self) -> str:
        if self.is_inf:
            return "ExpFloat(inf)"
        if -60 < self.exp < 60:
            return f"ExpFloat({self.to_float():.17g})"
        return f"ExpFloat({self.man / _MAN_LO:.17g} * 2^{self.exp})"


INF = ExpFloat(0, _INF_EXP)


def as_expfloat(x: "ExpFloat | int | float | Fraction") -> ExpFloat:
    """Coerce ints/floats/Fractions to ExpFloat (exact for ints up to 53 bits)."""
    if isinstance(x, ExpFloat):
        return x
    if isinstance(x, bool):
        raise TypeError("bool is not a weight")
    if isinstance(x, int):
        return ExpFloat.from_int(x)
    if isinstance(x, float):
        return ExpFloat.from_float(x)
    if isinstance(x, Fraction):
        return ExpFloat.from_fraction(x)
    raise TypeError(f"cannot interpret {type(x).__name__} as ExpFloat")


def ef_add(a: ExpFloat, b: ExpFloat) -> ExpFloat:
    """Sum rounded to nearest-even at 53 bits; +inf absorbs.

    When the exponents differ by more than the precision the smaller operand
    is below half an ulp of the larger, so the larger is returned unchanged.
    """
    count_additions()
    if a.is_inf or b.is_inf:
        return INF
    if (a.exp, a.man) < (b.exp, b.man):
        a, b = b, a
    gap = a.exp - b.exp
    if gap > PRECISION + 1:
        return a
    return _normalized((a.man << gap) + b.man, b.exp - (PRECISION - 1))


def ef_mul(a: ExpFloat, b: ExpFloat, mode: str = "nearest") -> ExpFloat:
    """Product rounded at 53 bits; +inf absorbs. One tallied multiplication."""
    count_multiplications()
    if a.is_inf or b.is_inf:
        return INF
    return _normalized(a.man * b.man, a.exp + b.exp - 2 * (PRECISION - 1), mode)


# ----- certified powers of (1 + eps) ----------------------------------------

def _log2_big(n: int) -> float:
    """log2 of a positive integer of any size, good to a few ulps."""
    b = n.bit_length()
    if b <= 53:
        return math.log2(n)
    return (b - 53) + math.log2(n >> (b - 53))


def _cmp_scaled(a: int, b: int, shift: int) -> int:
    """Sign of a - b * 2^shift for positive integers a, b."""
    if shift >= 0:
        b <<= shift
    else:
        a <<= -shift
    return (a > b) - (a < b)


class _Interval:
    """Closed interval [lo * 2^shift, hi * 2^shift] over positive reals."""

    __slots__ = ("lo", "hi", "shift")

    def __init__(self, lo: int, hi: int, shift: int):
        self.lo, self.hi, self.shift = lo, hi, shift

    def renormed(self, prec: int) -> "_Interval":
        b = self.hi.bit_length()
        if b <= prec + 1:
            return self
        s = b - prec
        return _Interval(self.lo >> s, -((-self.hi) >> s), self.shift + s)

    def times(self, other: "_Interval", prec: int) -> "_Interval":
        return _Interval(self.lo * other.lo, self.hi * other.hi,
                         self.shift + other.shift).renormed(prec)

    def inverted(self, prec: int) -> "_Interval":
        t = prec + self.hi.bit_length()
        one = 1 << t
        return _Interval(one // self.hi, -((-one) // self.lo),
                         -t - self.shift).renormed(prec)


class GeometricGrid:
    """Certified arithmetic on the grid {(1+eps)^k : k in Z} for eps in (0, 1].

    Float logarithms provide initial guesses; every decision is settled by
    integer interval arithmetic with escalating precision, falling back to an
    exact big-integer comparison in the (rare) inconclusive case.  Grid work
    is index bookkeeping and is never tallied by OpCounter.
    """

    _instances: dict[Fraction, "GeometricGrid"] = {}

    def __init__(self, eps: Rational) -> None:
        eps = Fraction(eps)
        if not (0 < eps <= 1):
            raise ValueError(f"eps must lie in (0, 1], got {eps}")
        self.eps = eps
        base = 1 + eps
        self.num: int = base.numerator
        self.den: int = base.denominator
        self.log2_base: float = _log2_big(self.num) - _log2_big(self.den)
        self._value_cache: dict[tuple[int, str], ExpFloat] = {}

    @classmethod
    def for_eps(cls, eps: Rational) -> "GeometricGrid":
        key = Fraction(eps)
        grid = cls._instances.get(key)
        if grid is None:
            grid = cls(key)
            cls._instances[key] = grid
        return grid

    # -- interval evaluation of base^k --

    def _interval(self, k: int, prec: int) -> _Interval:
        if k == 0:
            return _Interval(1, 1, 0)
        a = abs(k)
        if self.den & (self.den - 1) == 0:
            base = _Interval(self.num, self.num, -(self.den.bit_length() - 1))
        else:
            t = prec + self.den.bit_length()
            n = self.num << t
            base = _Interval(n // self.den, -((-n) // self.den), -t).renormed(prec)
        acc: _Interval | None = None
        sq = base
        bits = a
        while bits:
            if bits & 1:
                acc = sq if acc is None else acc.times(sq, prec)
            bits >>= 1
            if bits:
                sq = sq.times(sq, prec)
        assert acc is not None
        if k < 0:
            acc = acc.inverted(prec)
        return acc

    def compare(self, k: int, p: int, q: int, E: int) -> int:
        """Sign of (1+eps)^k - v for v = (p / q) * 2^E, exact."""
        for prec in (96, 384, 1536):
            iv = self._interval(k, prec)
            # v < lo * 2^shift  <=>  p * 2^(E - shift) < lo * q
            if _cmp_scaled(iv.lo * q, p, E - iv.shift) > 0:
                return 1
            if _cmp_scaled(iv.hi * q, p, E - iv.shift) < 0:
                return -1
        # exact big-integer comparison
        if k >= 0:
            return _cmp_scaled(self.num ** k * q, p * self.den ** k, E)
        a = -k
        return _cmp_scaled(self.den ** a * q, p * self.num ** a, E)

    def compare_value(self, k: int, x: ExpFloat, mult: Fraction = Fraction(1)) -> int:
        """Sign of (1+eps)^k - x * mult for finite x."""
        return self.compare(k, x.man * mult.numerator, mult.denominator,
                            x.exp - (PRECISION - 1))

    # -- rounded grid values --

    def value(self, k: int, mode: str = "nearest") -> ExpFloat:
        """(1+eps)^k rounded to an ExpFloat under the given mode."""
        key = (k, mode)
        cached = self._value_cache.get(key)
        if cached is not None:
            return cached
        result: ExpFloat | None = None
        for prec in (96, 384, 1536):
            iv = self._interval(k, prec)
            lo_ef = _normalized(iv.lo, iv.shift, mode)
            hi_ef = _normalized(iv.hi, iv.shift, mode)
            if lo_ef == hi_ef:
                result = lo_ef
                break
        if result is None:
            if k >= 0:
                result = _from_ratio(self.num ** k, self.den ** k, 0, mode)
            else:
                a = -k
                result = _from_ratio(self.den ** a, self.num ** a, 0, mode)
        self._value_cache[key] = result
        return result

    # -- floor logarithms (grid indices) --

    def floor_log(self, x: ExpFloat, mult: Fraction = Fraction(1)) -> int:
        """Largest k with (1+eps)^k <= x * mult, for finite positive x * mult."""
        if x.is_inf:
            raise ValueError("floor_log of +inf")
        est = (x.exp - (PRECISION - 1)) + math.log2(x.man)
        if mult != 1:
            est += _log2_big(mult.numerator) - _log2_big(mult.denominator)
        k = math.floor(est / self.log2_base)
        while self.compare_value(k, x, mult) > 0:
            k -= 1
        while self.compare_value(k + 1, x, mult) <= 0:
            k += 1
        return k

    def bucket(self, x: ExpFloat) -> int:
        """The unique d with (1+eps)^(d-1) <= x < (1+eps)^d."""
        return self.floor_log(x) + 1

    def floor_log_fraction(self, x: Fraction) -> tuple[int, bool]:
        """(largest k with (1+eps)^k <= x, whether equality holds), x exact.

        Unlike `floor_log` this takes an arbitrary positive rational, which
        need not be representable as an ExpFloat (e.g. 1/eps^2 when computing
        layer counts).
        """
        if x <= 0:
            raise ValueError("floor_log_fraction requires a positive value")
        est = (_log2_big(x.numerator) - _log2_big(x.denominator)) / self.log2_base
        k = math.floor(est)
        while self.compare(k, x.numerator, x.denominator, 0) > 0:
            k -= 1
        while self.compare(k + 1, x.numerator, x.denominator, 0) <= 0:
            k += 1
        return k, self.compare(k, x.numerator, x.denominator, 0) == 0


def as_eps(eps: "Rational | str") -> Fraction:
    """Validate an approximation parameter and return it as an exact Fraction.

    Accepts Fraction, int, decimal string ("0.1"), or float (taken at its
    exact binary value).  The usable range is (0, 1]: every construction in
    this library is proved for eps in that interval, and callers wanting the
    paper-style small-eps regime simply pass a small value.
    """
    if isinstance(eps, bool):
        raise TypeError("eps must be a positive rational, not bool")
    if isinstance(eps, (int, float, str, Fraction)):
        fr = Fraction(eps)
    else:
        raise TypeError(f"cannot interpret {type(eps).__name__} as eps")
    if not (0 < fr <= 1):
        raise ValueError(f"eps must lie in (0, 1], got {fr}")
    return fr


def bucket_index(x: ExpFloat, eps: Rational) -> int:
    """Index of the half-open geometric cell [(1+eps)^(d-1), (1+eps)^d) holding x."""
    if not isinstance(x, ExpFloat):
        raise TypeError("bucket_index expects an ExpFloat")
    if x.is_inf:
        raise ValueError("bucket_index rejects +inf")
    return GeometricGrid.for_eps(eps).bucket(x)


# ----- rank compression ------------------------------------------------------

@dataclass(frozen=True)
class RankMap:
    """Order-preserving bijection between distinct values and ranks 1..k.

    The rank one past the largest finite value is reserved for +inf whether
    or not +inf occurred in the input.
    """

    values: tuple[ExpFloat, ...]   # sorted distinct finite values
    inf_rank: int                  # == len(values) + 1

    def decode(self, rank: int) -> ExpFloat:
        if rank == self.inf_rank:
            return INF
        if not (1 <= rank < self.inf_rank):
            raise ValueError(f"rank {rank} out of range 1..{self.inf_rank}")
        return self.values[rank - 1]

    def rank_of(self, x: ExpFloat) -> int:
        if x.is_inf:
            return self.inf_rank
        lo, hi = 0, len(self.values)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.values[mid]._key() < x._key():
                lo = mid + 1
            else:
                hi = mid
        if lo == len(self.values) or self.values[lo] != x:
            raise KeyError(f"{x!r} was not among the compressed values")
        return lo + 1


def rank_compress(values: Sequence[ExpFloat]) -> tuple[list[int], RankMap]:
    """Replace values by their 1-based ranks; equal values share a rank.

    Tallies a fixed n*ceil(log2 n) comparison charge for the sort -- the
    deterministic cost of comparison sorting -- rather than whatever the
    library sort happens to perform on the given permutation.
    """
    n = len(values)
    if n:
        count_comparisons(n * max(1, (n - 1).bit_length()))
    with counting_paused():
        distinct = sorted({v._key() for v in values if not v.is_inf})
        index = {key: i + 1 for i, key in enumerate(distinct)}
        inf_rank = len(distinct) + 1
        ranks = [inf_rank if v.is_inf else index[v._key()] for v in values]
    rmap = RankMap(values=tuple(ExpFloat(m, e) for e, m in distinct),
                   inf_rank=inf_rank)
    return ranks, rmap
