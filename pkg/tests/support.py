"""Shared test helpers: random inputs and brute-force oracles.

The oracles stay deliberately independent of the library's own set
algebra: accept sets are materialized as dense numpy grids and compared
pointwise.
"""

from __future__ import annotations

import random

import numpy as np

from forestfw.canonical import CanonicalPolicy
from forestfw.header_space import ACCEPT, DENY, HeaderPoint, MatchRule, Predicate
from forestfw.policy_lang.syntax import PortRange, Service

GRID_PORTS = 256  # oracle grids cover ports/types 0..255


def random_range(rng: random.Random, upper: int) -> PortRange:
    lo = rng.randrange(upper)
    hi = rng.randrange(lo, upper)
    return PortRange(lo, hi)


def random_service(rng: random.Random, name: str) -> Service:
    protocol = rng.choice((1, 6, 17))
    if protocol == 1:
        types = tuple(random_range(rng, GRID_PORTS) for _ in range(rng.randint(1, 2)))
        return Service(name, 1, icmp_types=types)
    sports = tuple(random_range(rng, GRID_PORTS) for _ in range(rng.randint(1, 2)))
    dports = tuple(random_range(rng, GRID_PORTS) for _ in range(rng.randint(1, 2)))
    return Service(name, protocol, source_ports=sports, dest_ports=dports)


def random_service_set(rng: random.Random, max_services: int = 5) -> list[Service]:
    return [random_service(rng, f"svc{i}") for i in range(rng.randint(1, max_services))]


def split_cover(rng: random.Random, services: list[Service]) -> list[Service]:
    """An equivalent service set with different rectangle structure."""
    out = []
    for i, svc in enumerate(services):
        if svc.protocol in (6, 17) and rng.random() < 0.8:
            lo, hi = svc.dest_ports[0]
            if hi > lo:
                mid = rng.randrange(lo, hi)
                out.append(Service(f"{svc.name}a{i}", svc.protocol,
                                   source_ports=svc.source_ports,
                                   dest_ports=(PortRange(lo, mid),) + svc.dest_ports[1:]))
                out.append(Service(f"{svc.name}b{i}", svc.protocol,
                                   source_ports=svc.source_ports,
                                   dest_ports=(PortRange(mid + 1, hi),)))
                continue
        out.append(svc)
    rng.shuffle(out)
    return out


# ---------------------------------------------------------------------------
# dense accept-set oracle

def accept_masks(services) -> dict:
    """Dense accept grids: (sport, dport) planes per TCP/UDP, a type row for ICMP."""
    masks = {
        6: np.zeros((GRID_PORTS, GRID_PORTS), dtype=bool),
        17: np.zeros((GRID_PORTS, GRID_PORTS), dtype=bool),
        1: np.zeros(GRID_PORTS, dtype=bool),
    }
    for svc in services:
        if svc.protocol == 1:
            types = svc.icmp_types or (PortRange(0, 255),)
            for lo, hi in types:
                masks[1][lo:min(hi, GRID_PORTS - 1) + 1] = True
        elif svc.protocol in (6, 17):
            for slo, shi in svc.source_ports or (PortRange(0, 65535),):
                for dlo, dhi in svc.dest_ports or (PortRange(0, 65535),):
                    masks[svc.protocol][slo:min(shi, GRID_PORTS - 1) + 1,
                                        dlo:min(dhi, GRID_PORTS - 1) + 1] = True
    return masks


def masks_equal(a: dict, b: dict) -> bool:
    return all(np.array_equal(a[k], b[k]) for k in a)


def masks_subset(a: dict, b: dict) -> bool:
    return all(not np.any(a[k] & ~b[k]) for k in a)


def canonical_masks(policy: CanonicalPolicy) -> dict:
    """Accept grids rebuilt from canonical strips (for cover-exactness)."""
    masks = {
        6: np.zeros((GRID_PORTS, GRID_PORTS), dtype=bool),
        17: np.zeros((GRID_PORTS, GRID_PORTS), dtype=bool),
        1: np.zeros(GRID_PORTS, dtype=bool),
    }
    for sl in policy.slices:
        if sl.protocol == 1:
            assert sl.icmp_type is not None
            if sl.icmp_type < GRID_PORTS:
                masks[1][sl.icmp_type] = True
            continue
        for (dlo, dhi), sports in sl.strips:
            for slo, shi in sports:
                masks[sl.protocol][slo:min(shi, GRID_PORTS - 1) + 1,
                                   dlo:min(dhi, GRID_PORTS - 1) + 1] = True
    return masks


# ---------------------------------------------------------------------------
# exhaustive evaluation grids for match-rule strategies

def rule_grid_points(limit: int = 16) -> list[HeaderPoint]:
    """An exhaustive grid: TCP/UDP port planes plus an ICMP type row."""
    points = []
    for protocol in (6, 17):
        for sport in range(limit):
            for dport in range(limit):
                points.append(HeaderPoint(protocol=protocol, sport=sport, dport=dport))
    for icmp_type in range(limit):
        points.append(HeaderPoint(protocol=1, sport=0, dport=0, icmp_type=icmp_type))
    return points


def random_accept_rules(rng: random.Random, limit: int = 16,
                        max_rules: int = 4) -> list[MatchRule]:
    rules = []
    for i in range(rng.randint(1, max_rules)):
        protocol = rng.choice((1, 6, 17))
        if protocol == 1:
            lo = rng.randrange(limit)
            hi = rng.randrange(lo, limit)
            pred = Predicate(protocol=((1, 1),), icmp=((lo, hi),))
        else:
            slo = rng.randrange(limit)
            shi = rng.randrange(slo, limit)
            dlo = rng.randrange(limit)
            dhi = rng.randrange(dlo, limit)
            pred = Predicate(protocol=((protocol, protocol),),
                             sport=((slo, shi),), dport=((dlo, dhi),),
                             icmp=((0, 0),))
        rules.append(MatchRule(ACCEPT, pred, origin=f"r{i}"))
    return rules


__all__ = [
    "ACCEPT",
    "DENY",
    "GRID_PORTS",
    "accept_masks",
    "canonical_masks",
    "masks_equal",
    "masks_subset",
    "random_accept_rules",
    "random_range",
    "random_service",
    "random_service_set",
    "rule_grid_points",
    "split_cover",
]
