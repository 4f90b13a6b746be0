"""Closed integer interval sets.

All header dimensions (addresses, ports, protocol numbers, ICMP types) are
handled as sorted tuples of disjoint, non-adjacent ``(lo, hi)`` pairs with
inclusive bounds.  Every public function returns intervals in that normal
form, so structural equality of two interval sets implies set equality.
"""

from __future__ import annotations

from typing import Iterable

Interval = tuple[int, int]
IntervalSet = tuple[Interval, ...]


def normalize(ranges: Iterable[tuple[int, int]]) -> IntervalSet:
    """Sort, merge overlapping and adjacent ranges, drop empty ones."""
    items = sorted((lo, hi) for lo, hi in ranges if lo <= hi)
    merged: list[Interval] = []
    for lo, hi in items:
        if merged and lo <= merged[-1][1] + 1:
            if hi > merged[-1][1]:
                merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return tuple(merged)


def contains(ranges: IntervalSet, value: int) -> bool:
    for lo, hi in ranges:
        if lo <= value <= hi:
            return True
        if lo > value:
            break
    return False


def intersect(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    """Intersection of two normalized interval sets."""
    out: list[Interval] = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo <= hi:
            out.append((lo, hi))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return tuple(out)


def union(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return normalize(list(a) + list(b))


def subtract(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    """Points of ``a`` not in ``b``."""
    out: list[Interval] = []
    for lo, hi in a:
        pieces = [(lo, hi)]
        for blo, bhi in b:
            next_pieces: list[Interval] = []
            for plo, phi in pieces:
                if bhi < plo or blo > phi:
                    next_pieces.append((plo, phi))
                    continue
                if plo < blo:
                    next_pieces.append((plo, blo - 1))
                if phi > bhi:
                    next_pieces.append((bhi + 1, phi))
            pieces = next_pieces
            if not pieces:
                break
        out.extend(pieces)
    return normalize(out)


def is_subset(a: IntervalSet, b: IntervalSet) -> bool:
    """True when every point of ``a`` lies in ``b``.

    Relies on both sets being normalized: a contained interval must then
    fit inside a single interval of ``b``.
    """
    j = 0
    for lo, hi in a:
        while j < len(b) and b[j][1] < lo:
            j += 1
        if j == len(b) or b[j][0] > lo or b[j][1] < hi:
            return False
    return True


def size(ranges: IntervalSet) -> int:
    return sum(hi - lo + 1 for lo, hi in ranges)


def sample(ranges: IntervalSet) -> int:
    """Lowest value in the set (the deterministic representative)."""
    if not ranges:
        raise ValueError("empty interval set has no sample")
    return ranges[0][0]
