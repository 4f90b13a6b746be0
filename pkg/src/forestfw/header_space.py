"""Executable semantics of packet-filter rules.

A :class:`HeaderPoint` stands for the whole class of packets sharing its
header values; rules decide accept/deny per class, so evaluating one point
per class is exact.  A :class:`Predicate` denotes a cross product of
per-dimension range sets.  Three combination strategies are provided:
first match, last match, and the order-free whitelist model the rest of
the system is built on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from forestfw import intervals
from forestfw.intervals import IntervalSet
from forestfw.policy_lang.syntax import (
    Service,
    effective_dports,
    effective_icmp_types,
    effective_sports,
)

ACCEPT = "accept"
DENY = "deny"

ADDR_MAX = (1 << 32) - 1
FULL_ADDR: IntervalSet = ((0, ADDR_MAX),)
FULL_PORT: IntervalSet = ((0, 65535),)
FULL_PROTO: IntervalSet = ((0, 255),)
FULL_ICMP: IntervalSet = ((0, 255),)

# icmp_type is only meaningful when protocol == 1; elsewhere callers pin it
# to this sentinel so cross products stay well-defined.
ICMP_SENTINEL = 0


@dataclass(frozen=True)
class HeaderPoint:
    """One point in packet-header space."""

    src_addr: int = 0
    dst_addr: int = 0
    protocol: int = 6
    sport: int = 0
    dport: int = 0
    icmp_type: int = ICMP_SENTINEL


@dataclass(frozen=True)
class Predicate:
    """A rectangle predicate: per-dimension sorted, disjoint range sets.

    Every dimension must be non-empty; an unconstrained dimension carries
    its full range.
    """

    src: IntervalSet = FULL_ADDR
    dst: IntervalSet = FULL_ADDR
    protocol: IntervalSet = FULL_PROTO
    sport: IntervalSet = FULL_PORT
    dport: IntervalSet = FULL_PORT
    icmp: IntervalSet = FULL_ICMP

    def __post_init__(self) -> None:
        for dim in ("src", "dst", "protocol", "sport", "dport", "icmp"):
            ranges = intervals.normalize(getattr(self, dim))
            if not ranges:
                raise ValueError(f"predicate dimension {dim!r} is empty")
            object.__setattr__(self, dim, ranges)

    def intersect(self, other: "Predicate") -> "Predicate | None":
        """Dimension-wise intersection; None when any dimension empties."""
        dims = {}
        for dim in ("src", "dst", "protocol", "sport", "dport", "icmp"):
            shared = intervals.intersect(getattr(self, dim), getattr(other, dim))
            if not shared:
                return None
            dims[dim] = shared
        return Predicate(**dims)

    def union(self, other: "Predicate") -> "Predicate":
        """Dimension-wise union: the smallest rectangle containing both.

        This is a bounding union (a superset of the pointwise union); it
        preserves the monotonicity of :func:`matches`.
        """
        return Predicate(
            **{
                dim: intervals.union(getattr(self, dim), getattr(other, dim))
                for dim in ("src", "dst", "protocol", "sport", "dport", "icmp")
            }
        )

    def sample_point(self) -> HeaderPoint:
        """Lowest corner of the predicate; always matches it."""
        return HeaderPoint(
            src_addr=intervals.sample(self.src),
            dst_addr=intervals.sample(self.dst),
            protocol=intervals.sample(self.protocol),
            sport=intervals.sample(self.sport),
            dport=intervals.sample(self.dport),
            icmp_type=intervals.sample(self.icmp),
        )


@dataclass(frozen=True)
class MatchRule:
    action: str  # ACCEPT or DENY
    predicate: Predicate
    origin: str = ""


def matches(p: Predicate, x: HeaderPoint) -> bool:
    """True iff every dimension of ``x`` lies in the corresponding set."""
    return (
        intervals.contains(p.protocol, x.protocol)
        and intervals.contains(p.sport, x.sport)
        and intervals.contains(p.dport, x.dport)
        and intervals.contains(p.icmp, x.icmp_type)
        and intervals.contains(p.src, x.src_addr)
        and intervals.contains(p.dst, x.dst_addr)
    )


def eval_first_match(rules: Sequence[MatchRule], x: HeaderPoint) -> str:
    """Decision of the first matching rule; implicit deny-all otherwise."""
    for rule in rules:
        if matches(rule.predicate, x):
            return rule.action
    return DENY


def eval_last_match(rules: Sequence[MatchRule], x: HeaderPoint) -> str:
    """Decision of the last matching rule; implicit deny-all otherwise."""
    decision = DENY
    matched = False
    for rule in rules:
        if matches(rule.predicate, x):
            decision = rule.action
            matched = True
    return decision if matched else DENY


def eval_whitelist(rules: Iterable[MatchRule], x: HeaderPoint) -> str:
    """Order-free evaluation of an accept-only rule set.

    Raises ValueError on a deny rule: the whitelist model has no deny form,
    and silently accepting one would hide a contract violation.
    """
    decision = DENY
    for rule in rules:
        if rule.action != ACCEPT:
            raise ValueError(f"deny rule {rule.origin!r} in whitelist evaluation")
        if decision == DENY and matches(rule.predicate, x):
            decision = ACCEPT
    return decision


def service_predicate(svc: Service) -> Predicate:
    """The header-space rectangle a service stands for (zones excluded).

    For non-ICMP protocols the icmp dimension is pinned to the sentinel;
    for non-TCP/UDP protocols the port dimensions are unconstrained.
    """
    if svc.protocol is None:
        raise ValueError(f"service {svc.name!r} has no concrete protocol")
    proto: IntervalSet = ((svc.protocol, svc.protocol),)
    if svc.protocol == 1:
        return Predicate(
            protocol=proto,
            icmp=tuple(effective_icmp_types(svc)),
        )
    if svc.protocol in (6, 17):
        return Predicate(
            protocol=proto,
            sport=tuple(effective_sports(svc)),
            dport=tuple(effective_dports(svc)),
            icmp=((ICMP_SENTINEL, ICMP_SENTINEL),),
        )
    return Predicate(protocol=proto, icmp=((ICMP_SENTINEL, ICMP_SENTINEL),))
