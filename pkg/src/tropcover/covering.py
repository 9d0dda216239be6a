"""Sum-to-max covering families.

The constructions here split the n^2 pairwise sums A[i] + B[j] of two
positive weight vectors into a short stack of sparse layer pairs
(A^(l), B^(l)) such that

    min over layers l of  max{A^(l)[i], B^(l)[j]}

sandwiches A[i] + B[j] within a (1 + eps) factor.  That replaces sum-plus-min
structure by max-plus-min structure, and (min,max) computations can be run on
rank-compressed values -- which is what lets every consumer in this library
keep its operation count independent of how large the weights are.

Two regimes are stitched together:

* close pairs, value ratio within [eps, 1/eps]: the A side is bucketed on the
  geometric grid (1+eps)^d and the B side is shifted by the bucket value; the
  trick is that buckets congruent modulo the layer count never interfere, so
  O((1/eps) log(1/eps)) layers suffice (`close_covering`);
* distant pairs: the sorted value multiset is decomposed by recursive middle
  splits into chunks, chunk pairs are spread over two interleaved sub-lists
  to keep unioned outputs separated, and a few geometrically shifted
  transition zones around each chunk boundary catch every far pair
  (`distant_covering_sets`, and its vector form `distant_covering_vectors`);
  for such pairs the max alone approximates the sum.

`sum_to_max_covering` concatenates the two (weak mode: two-sided error) and,
in strong mode, reruns the construction at eps/5 and rescales every stored
entry by 1/(1 - 2*eps/5), turning the guarantee into the clean one-sided
sandwich  A[i]+B[j] <= min_l max <= (1+eps)(A[i]+B[j]).

Layer counts are exact closed forms (`close_layer_count`,
`distant_layer_count`), asserted on every construction.  Construction work on
weights is tallied: sorting and the transition scans charge their fixed
structural comparison budgets, B-side shifts tally one addition per stored
entry, and strong-mode rescaling tallies one multiplication per rescaled
value.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from . import _bulk
from .numeric import (
    ExpFloat,
    GeometricGrid,
    Rational,
    _cmp_scaled,
    as_eps,
    as_expfloat,
    count_comparisons,
    counting_paused,
)

__all__ = [
    "Layer",
    "CoveringFamily",
    "ChunkList",
    "close_covering",
    "distant_covering_sets",
    "distant_covering_vectors",
    "sum_to_max_covering",
    "close_layer_count",
    "distant_layer_count",
]


# ----- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class Layer:
    """One sparse layer pair (A^(l), B^(l)).

    Maps hold only the finite entries; an absent index means +inf, so the
    layer never constrains pairs it does not mention.  `source` records which
    regime produced it ("close" or "distant").
    """

    a_entries: dict[int, ExpFloat]
    b_entries: dict[int, ExpFloat]
    source: str


@dataclass(frozen=True)
class CoveringFamily:
    """The full stack of layers covering all pairs of an (A, B) instance."""

    layers: list[Layer]
    n: int
    eps: Fraction


@dataclass(frozen=True)
class _ArrayLayer:
    """One layer in packed array form, for streamed consumers.

    `a_idx`/`b_idx` are the finite indices in ascending order; the exp/man
    pairs hold the stored entry values in the packed int64 encoding of
    `_bulk`.  Distant layers additionally carry `a_key`/`b_key`: each entry's
    position in the construction's sorted value order, an integer surrogate
    that lets consumers rank a layer's entries without comparing weights
    again (the sort was already charged once, and entry values are verbatim
    copies of the sorted values).  Close layers synthesize new values, so
    their keys are None and consumers must rank them afresh.
    """

    source: str
    a_idx: np.ndarray
    a_exp: np.ndarray
    a_man: np.ndarray
    a_key: np.ndarray | None
    b_idx: np.ndarray
    b_exp: np.ndarray
    b_man: np.ndarray
    b_key: np.ndarray | None


@dataclass(frozen=True)
class ChunkList:
    """Chunks of one level of the distant decomposition.

    Each chunk is a half-open (start, stop) range of positions into the
    sorted (padded) value array; chunks are disjoint, value-ordered, and come
    in sibling pairs, so the count is even.
    """

    chunks: tuple[tuple[int, int], ...]


# ----- closed-form layer counts ------------------------------------------------

def _ceil_log2_recip(eps: Fraction) -> int:
    """ceil(log2(1/eps)) for eps in (0, 1] -- smallest t with 2^t >= 1/eps."""
    t = 0
    while (eps.numerator << t) < eps.denominator:
        t += 1
    return t


def close_layer_count(eps: Rational) -> int:
    """Exact layer count of the close construction: 1 + ceil(2 log_{1+eps}(1/eps))."""
    eps = as_eps(eps)
    grid = GeometricGrid.for_eps(eps)
    k, exact = grid.floor_log_fraction(1 / eps / eps)
    return 1 + (k if exact else k + 1)


def distant_layer_count(n_values: int, eps: Rational) -> int:
    """Exact layer count of the vector distant construction on n_values weights.

    2 sub-lists x 2 for symmetrization x ceil(log2 n_pad) levels x
    (ceil(log2(1/eps)) + 1) shifts; every slot is emitted even when empty.
    """
    eps = as_eps(eps)
    if n_values < 1:
        raise ValueError("n_values must be positive")
    levels = (n_values - 1).bit_length()
    return 4 * levels * (_ceil_log2_recip(eps) + 1)


# ----- input handling -----------------------------------------------------------

def _as_weights(name: str, seq: Sequence) -> list[ExpFloat]:
    out = [as_expfloat(v) for v in seq]
    if not out:
        raise ValueError(f"{name} must be non-empty")
    for v in out:
        if v.is_inf:
            raise ValueError(f"{name} entries must be finite positive weights")
    return out


def _paired_weights(A: Sequence, B: Sequence) -> tuple[list[ExpFloat], list[ExpFloat]]:
    a = _as_weights("A", A)
    b = _as_weights("B", B)
    if len(a) != len(b):
        raise ValueError(f"A and B must have equal length, got {len(a)} and {len(b)}")
    return a, b


# ----- distant covering ----------------------------------------------------------

def _split_pairs(clist: ChunkList) -> tuple[list, list]:
    """Group sibling chunks into (left, right) pairs and alternate whole pairs
    between the two sub-lists, so that consecutive pairs within one sub-list
    skip a full sibling pair -- which is what keeps their values more than a
    1/eps factor apart."""
    c = clist.chunks
    pairs = [(c[2 * k], c[2 * k + 1]) for k in range(len(c) // 2)]
    return pairs[0::2], pairs[1::2]


def _chunk_levels(E: list[int], M: list[int], p: int, q: int) -> Iterator[ChunkList]:
    """Levels of the recursive middle split of the sorted padded multiset.

    A chunk splits when its smallest value is strictly below eps (= p/q)
    times its largest; otherwise all its values are within a 1/eps factor and
    the chunk is dropped -- any far pair inside it was separated earlier.
    """
    n_pad = len(E)
    levels = n_pad.bit_length() - 1
    chunks: list[tuple[int, int]] = [(0, n_pad)]
    for _ in range(levels):
        nxt: list[tuple[int, int]] = []
        for a, b in chunks:
            if _cmp_scaled(M[a] * q, p * M[b - 1], E[b - 1] - E[a]) < 0:
                mid = (a + b) // 2
                nxt.append((a, mid))
                nxt.append((mid, b))
        yield ChunkList(chunks=tuple(nxt))
        chunks = nxt


def _transition_slots(values: list[ExpFloat], eps: Fraction, t_cap: int
                      ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """All transition pairs (X, Y) of the distant decomposition, as sorted
    int64 index arrays into `values`, plus the position of every index in the
    sorted value order (for rank bookkeeping by consumers).

    One slot is emitted per (level, sub-list, shift) -- empty or not -- so
    the output length is exactly 2 * ceil(log2 n_pad) * (t_cap + 1).  For the
    pair of chunks (left, right) with z_min = min(right), shift t keeps
    x in left with x <= eps * 2^t * z_min  and  y in right with
    y >= 2^t * z_min (inclusive, so that the t = 0 zone contains z_min
    itself); the two zones are a 1/eps factor apart by construction.

    Both predicates are monotone along the sorted chunk, so each zone is
    located by binary search on the exact comparator.  Comparisons are
    tallied as the fixed structural budget of the scan, so the tally depends
    only on the input size and eps, never on the values.
    """
    n = len(values)
    p, q = eps.numerator, eps.denominator
    n_pad = 1 << (n - 1).bit_length() if n > 1 else 1
    levels = n_pad.bit_length() - 1
    count_comparisons(n * max(1, (n - 1).bit_length())
                      + (n_pad - 1)
                      + 2 * levels * (t_cap + 1) * n_pad)
    out: list[tuple[np.ndarray, np.ndarray]] = []
    empty = np.empty(0, dtype=np.int64)
    with counting_paused():
        order = sorted(range(n), key=lambda i: values[i]._key())
        keys = [values[i]._key() for i in order]
        keys.extend([keys[-1]] * (n_pad - n))      # pad with copies of the max
        E = [k[0] for k in keys]
        M = [k[1] for k in keys]
        order_arr = np.asarray(order, dtype=np.int64)
        pos_of = np.empty(n, dtype=np.int64)
        pos_of[order_arr] = np.arange(n, dtype=np.int64)
        for clist in _chunk_levels(E, M, p, q):
            for sub in _split_pairs(clist):
                for t in range(t_cap + 1):
                    xs_parts: list[np.ndarray] = []
                    ys_parts: list[np.ndarray] = []
                    for (la, lb), (ra, rb) in sub:
                        ze, zm = E[ra], M[ra]      # z_min of the right chunk
                        # first left position whose value exceeds eps 2^t z_min
                        lo, hi = la, lb
                        while lo < hi:
                            mid = (lo + hi) // 2
                            if _cmp_scaled(M[mid] * q, p * zm, t + ze - E[mid]) <= 0:
                                lo = mid + 1
                            else:
                                hi = mid
                        if (cut := min(lo, n)) > la:
                            xs_parts.append(order_arr[la:cut])
                        # first right position whose value reaches 2^t z_min
                        lo, hi = ra, rb
                        while lo < hi:
                            mid = (lo + hi) // 2
                            if _cmp_scaled(M[mid], zm, t + ze - E[mid]) >= 0:
                                hi = mid
                            else:
                                lo = mid + 1
                        if lo < (stop := min(rb, n)):
                            ys_parts.append(order_arr[lo:stop])
                    xs = np.sort(np.concatenate(xs_parts)) if xs_parts else empty
                    ys = np.sort(np.concatenate(ys_parts)) if ys_parts else empty
                    out.append((xs, ys))
    if len(out) != 2 * levels * (t_cap + 1):
        raise AssertionError("transition slot count deviates from closed form")
    return out, pos_of


def distant_covering_sets(Z: Sequence, eps: Rational
                          ) -> list[tuple[list[int], list[int]]]:
    """Transition pairs (X_l, Y_l) over a weight multiset, as index subsets.

    Every output pair has all cross ratios at least 1/eps apart, and every
    ordered pair x < y with max-ratio at least 2/eps lands in some (X_l, Y_l)
    with x's index in X_l and y's index in Y_l.  Slots are ordered by
    (level, sub-list, shift) and are emitted even when empty, so the count is
    exactly 2 * ceil(log2 n_pad) * (ceil(log2(1/eps)) + 1).
    """
    eps = as_eps(eps)
    values = _as_weights("Z", Z)
    slots, _ = _transition_slots(values, eps, _ceil_log2_recip(eps))
    return [(xs.tolist(), ys.tolist()) for xs, ys in slots]


def _stream_distant_layers(A: list[ExpFloat], B: list[ExpFloat], eps: Fraction,
                           scale: Fraction | None = None) -> Iterator[_ArrayLayer]:
    """Distant layers over the concatenated multiset Z = A ++ B, as arrays.

    Sets are built at doubled eps; their 1/(2 eps) separation then gives the
    (1 - 2 eps) lower bound, while far pairs (ratio outside [eps, 1/eps])
    have set-distance >= 1/eps = 2/(2 eps) and are always captured.  The
    shift budget stays at the vector-level eps so the slot count matches the
    closed form; extra shifts are harmless.  Slots are then symmetrized:
    X' = X_1..X_s, Y_1..Y_s against Y' = Y_1..Y_s, X_1..X_s, which removes
    the x < y orientation of the set construction.
    """
    n = len(A)
    slots, pos_of = _transition_slots(A + B, 2 * eps, _ceil_log2_recip(eps))
    eZ, mZ = _bulk.pack(A + B)
    if scale is not None:
        eZ, mZ = _bulk.bulk_scale_up(eZ, mZ, scale.numerator, scale.denominator)

    def layer(a_side: np.ndarray, b_side: np.ndarray) -> _ArrayLayer:
        ai = a_side[a_side < n]
        bz = b_side[b_side >= n]
        return _ArrayLayer("distant",
                           ai, eZ[ai], mZ[ai], pos_of[ai],
                           bz - n, eZ[bz], mZ[bz], pos_of[bz])

    for xs, ys in slots:
        yield layer(xs, ys)
    for xs, ys in slots:
        yield layer(ys, xs)


def _dictify(stream: Iterator[_ArrayLayer]) -> list[Layer]:
    return [Layer(a_entries=dict(zip(l.a_idx.tolist(),
                                     _bulk.unpack_raw(l.a_exp, l.a_man))),
                  b_entries=dict(zip(l.b_idx.tolist(),
                                     _bulk.unpack_raw(l.b_exp, l.b_man))),
                  source=l.source)
            for l in stream]


def _distant_vectors_family(A: list[ExpFloat], B: list[ExpFloat], eps: Fraction,
                            scale: Fraction | None = None) -> CoveringFamily:
    n = len(A)
    layers = _dictify(_stream_distant_layers(A, B, eps, scale))
    if len(layers) != distant_layer_count(2 * n, eps):
        raise AssertionError("distant layer count deviates from closed form")
    return CoveringFamily(layers=layers, n=n, eps=eps)


def distant_covering_vectors(A: Sequence, B: Sequence, eps: Rational
                             ) -> CoveringFamily:
    """Layers covering all distant pairs (value ratio outside [eps, 1/eps]).

    Every layer keeps entries unchanged (A^(l)[i] is A[i] or absent), all
    finite cross pairs within a layer are at least a 1/(2 eps) factor apart
    -- hence max >= (1 - 2 eps)(A[i] + B[j]) for every pair and layer -- and
    every distant pair has a layer where both survive, where its max is at
    most the sum.
    """
    eps = as_eps(eps)
    a, b = _paired_weights(A, B)
    return _distant_vectors_family(a, b, eps)


# ----- close covering -------------------------------------------------------------

def _stream_close_layers(A: list[ExpFloat], B: list[ExpFloat], eps: Fraction,
                         scale: Fraction | None = None) -> Iterator[_ArrayLayer]:
    """Close layers as arrays, one layer at a time.

    A side: one finite entry per index, the rounded-up bucket value
    (1+eps)^d with (1+eps)^(d-1) <= A[i] < (1+eps)^d, in layer (d-1) mod s.
    B side: B[j] participates in every bucket d whose close zone
    [eps (1+eps)^(d-1), (1+eps)^d / eps) contains it -- a window of s-1 or s
    consecutive d's -- and stores B[j] + (1+eps)^d in layer (d-1) mod s; each
    window meets each residue class at most once, which is what makes the
    per-layer maps single-valued.  The two sides may differ in length.
    """
    grid = GeometricGrid.for_eps(eps)
    s = close_layer_count(eps)
    scale_args = (None if scale is None
                  else (scale.numerator, scale.denominator))

    eA, mA = _bulk.pack(A)
    eB, mB = _bulk.pack(B)
    d_a = _bulk.floor_log_bulk(grid, eA, mA) + 1
    pe_a, pm_a, off_a = _bulk.grid_values(grid, int(d_a.min()), int(d_a.max()), "up")
    ae, am = pe_a[d_a - off_a], pm_a[d_a - off_a]
    if scale_args is not None:
        ae, am = _bulk.bulk_scale_up(ae, am, *scale_args)
    lay_a = (d_a - 1) % s
    order_a = np.argsort(lay_a, kind="stable")   # within a layer: index order
    bounds_a = np.searchsorted(lay_a[order_a], np.arange(s + 1))

    d_lo = _bulk.floor_log_bulk(grid, eB, mB, eps) + 1
    d_hi = _bulk.floor_log_bulk(grid, eB, mB, 1 / eps) + 1
    lens = d_hi - d_lo + 1
    if not ((lens >= s - 1) & (lens <= s)).all():
        raise AssertionError("close window width deviates from {s-1, s}")
    if int(d_lo.min()) <= int(d_hi.max()):
        pe, pm, off = _bulk.grid_values(grid, int(d_lo.min()), int(d_hi.max()), "up")
    else:                                        # every window empty (eps = 1)
        pe, pm, off = np.empty(0, np.int64), np.empty(0, np.int64), 0
    all_j = np.arange(len(B), dtype=np.int64)

    for l in range(s):
        ai = order_a[bounds_a[l]:bounds_a[l + 1]]
        d = d_lo + (l + 1 - d_lo) % s            # the window's d in class l
        keep = d <= d_hi
        js = all_j[keep]
        oe, om = _bulk.bulk_add(eB[js], mB[js], pe[d[keep] - off], pm[d[keep] - off])
        if scale_args is not None:
            oe, om = _bulk.bulk_scale_up(oe, om, *scale_args)
        yield _ArrayLayer("close", ai, ae[ai], am[ai], None, js, oe, om, None)


def _close_family(A: list[ExpFloat], B: list[ExpFloat], eps: Fraction,
                  scale: Fraction | None = None) -> CoveringFamily:
    n = len(A)
    layers = _dictify(_stream_close_layers(A, B, eps, scale))
    if len(layers) != close_layer_count(eps):
        raise AssertionError("close layer count deviates from closed form")
    return CoveringFamily(layers=layers, n=n, eps=eps)


def close_covering(A: Sequence, B: Sequence, eps: Rational) -> CoveringFamily:
    """Layers covering all close pairs (value ratio within [eps, 1/eps]).

    Exactly 1 + ceil(2 log_{1+eps}(1/eps)) layers.  For every pair and layer
    max{A^(l)[i], B^(l)[j]} >= (1 - eps)(A[i] + B[j]), and every close pair
    has a layer -- the one holding A[i]'s bucket -- where the max is at most
    (1 + eps)(A[i] + B[j]).
    """
    eps = as_eps(eps)
    a, b = _paired_weights(A, B)
    return _close_family(a, b, eps)


# ----- combined construction --------------------------------------------------------

def _weak_family(A: list[ExpFloat], B: list[ExpFloat], eps: Fraction,
                 scale: Fraction | None = None) -> CoveringFamily:
    distant = _distant_vectors_family(A, B, eps, scale)
    close = _close_family(A, B, eps, scale)
    layers = distant.layers + close.layers
    if len(layers) != distant_layer_count(2 * len(A), eps) + close_layer_count(eps):
        raise AssertionError("combined layer count deviates from closed form")
    return CoveringFamily(layers=layers, n=len(A), eps=eps)


def sum_to_max_covering(A: Sequence, B: Sequence, eps: Rational,
                        mode: str = "strong") -> CoveringFamily:
    """The combined covering family over all pairs.

    weak mode: distant plus close layers at the given eps; for all pairs and
    layers max >= (1 - 2 eps)(A[i] + B[j]), and every pair has a layer with
    max <= (1 + eps)(A[i] + B[j]).

    strong mode (default): the weak construction at eps/5 with every stored
    entry divided by (1 - 2 eps/5), rounding up; that lifts the lower bound
    to the exact sum, giving for every pair

        A[i] + B[j]  <=  min_l max{A^(l)[i], B^(l)[j]}  <=  (1 + eps)(A[i] + B[j])

    up to the 53-bit rounding of stored entries.
    """
    eps = as_eps(eps)
    if mode not in ("weak", "strong"):
        raise ValueError(f"mode must be 'weak' or 'strong', got {mode!r}")
    a, b = _paired_weights(A, B)
    if mode == "weak":
        return _weak_family(a, b, eps)
    inner_eps = eps / 5
    scale = 1 / (1 - 2 * inner_eps)
    fam = _weak_family(a, b, inner_eps, scale)
    return CoveringFamily(layers=fam.layers, n=fam.n, eps=eps)


def stream_strong_covering_arrays(A: Sequence, B: Sequence, eps: Rational
                                  ) -> tuple[int, Iterator[_ArrayLayer]]:
    """Streaming form of strong-mode `sum_to_max_covering`.

    Returns the exact layer total and an iterator yielding the same layers in
    the same order (distant slots, their mirrors, then the close classes) as
    packed `_ArrayLayer` arrays, without ever materializing the whole family.
    Tallied work is identical to the eager constructor.  Intended for
    consumers that run the construction over length-n^2 vectors, where dicts
    of boxed values would dominate memory.  Unlike the eager constructor the
    two sides may differ in length (nothing in the construction pairs them
    positionally): the distant decomposition runs over the concatenated
    multiset and the close windows are per-entry.
    """
    eps = as_eps(eps)
    a = _as_weights("A", A)
    b = _as_weights("B", B)
    inner = eps / 5
    scale = 1 / (1 - 2 * inner)
    total = distant_layer_count(len(a) + len(b), inner) + close_layer_count(inner)

    def gen() -> Iterator[_ArrayLayer]:
        yield from _stream_distant_layers(a, b, inner, scale)
        yield from _stream_close_layers(a, b, inner, scale)

    return total, gen()
