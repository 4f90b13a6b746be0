"""Domain types for the policy language and its expanded form."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from forestfw import intervals

PROTOCOL_NUMBERS: dict[str, int | None] = {
    "tcp": 6,
    "udp": 17,
    "icmp": 1,
    "ospf": 89,
    "ip": None,  # generic; rejected by the validator
}
PROTOCOL_NAMES = {6: "tcp", 17: "udp", 1: "icmp", 89: "ospf"}

PORT_MIN, PORT_MAX = 0, 65535
ICMP_TYPE_MAX = 255


class PortRange(NamedTuple):
    """Inclusive port (or ICMP-type) range; valid values are 0..65535."""

    lo: int
    hi: int

    def __str__(self) -> str:
        return str(self.lo) if self.lo == self.hi else f"{self.lo}-{self.hi}"


FULL_PORT_RANGE = PortRange(PORT_MIN, PORT_MAX)


def port_ranges(raw: Iterable[tuple[int, int]]) -> tuple[PortRange, ...]:
    """Normalize to sorted, disjoint, maximal PortRanges."""
    return tuple(PortRange(lo, hi) for lo, hi in intervals.normalize(raw))


# ---------------------------------------------------------------------------
# attribute values (service bodies, reporting rules)

@dataclass(frozen=True)
class Value:
    """Base class for attribute values; concrete forms below."""


@dataclass(frozen=True)
class VInt(Value):
    n: int


@dataclass(frozen=True)
class VRange(Value):
    lo: int
    hi: int


@dataclass(frozen=True)
class VName(Value):
    name: str


@dataclass(frozen=True)
class VString(Value):
    text: str


@dataclass(frozen=True)
class VList(Value):
    items: tuple[Value, ...]


@dataclass(frozen=True)
class VBlock(Value):
    """Braced value: a sequence of ``key=value`` entries and/or bare values."""

    items: tuple[tuple[str | None, Value], ...]


# ---------------------------------------------------------------------------
# services

@dataclass(frozen=True)
class Service:
    """A traffic service: one IP protocol plus its attribute constraints.

    For TCP/UDP the port attributes default to the full 0-65535 range when
    unspecified.  For ICMP, an empty ``icmp_types`` means "any type".
    ``protocol`` is None only for the prohibited generic ``ip`` form, which
    the validator rejects before anything downstream can see it.
    """

    name: str
    protocol: int | None
    source_ports: tuple[PortRange, ...] = ()  # as written; validator checks bounds
    dest_ports: tuple[PortRange, ...] = ()
    icmp_types: tuple[PortRange, ...] = ()
    comment: str = ""

    def value_key(self) -> tuple:
        """Identity of the service by constraint, ignoring name/comment."""
        return (
            self.protocol,
            intervals.normalize(self.source_ports),
            intervals.normalize(self.dest_ports),
            intervals.normalize(self.icmp_types),
        )

    @property
    def display_name(self) -> str:
        """Name without its import namespace prefix."""
        return self.name.rsplit(".", 1)[-1]

    def protocol_name(self) -> str:
        if self.protocol is None:
            return "ip"
        return PROTOCOL_NAMES.get(self.protocol, str(self.protocol))


FULL_RANGE_SET: tuple[PortRange, ...] = (FULL_PORT_RANGE,)
FULL_ICMP_SET: tuple[PortRange, ...] = (PortRange(0, ICMP_TYPE_MAX),)


def effective_sports(svc: Service) -> tuple[PortRange, ...]:
    """Source ports the service accepts; full range when not applicable."""
    return port_ranges(svc.source_ports) if svc.source_ports else FULL_RANGE_SET


def effective_dports(svc: Service) -> tuple[PortRange, ...]:
    return port_ranges(svc.dest_ports) if svc.dest_ports else FULL_RANGE_SET


def effective_icmp_types(svc: Service) -> tuple[PortRange, ...]:
    return port_ranges(svc.icmp_types) if svc.icmp_types else FULL_ICMP_SET


class ServiceSet:
    """A set of services, deduplicated by constraint value.

    Closed under union (``,``), intersection (``^``) and difference
    (``\\``); all three operate on constraint values, so two identically
    constrained services under different names count once.
    """

    __slots__ = ("_members",)

    def __init__(self, services: Iterable[Service] = ()):
        by_key: dict[tuple, Service] = {}
        for svc in sorted(services, key=lambda s: s.name):
            by_key.setdefault(svc.value_key(), svc)
        self._members = tuple(sorted(by_key.values(), key=lambda s: (s.name, s.value_key())))

    def __iter__(self) -> Iterator[Service]:
        return iter(self._members)

    def __len__(self) -> int:
        return len(self._members)

    def __bool__(self) -> bool:
        return bool(self._members)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ServiceSet):
            return NotImplemented
        return self.value_keys() == other.value_keys()

    def __hash__(self) -> int:
        return hash(frozenset(self.value_keys()))

    def __repr__(self) -> str:
        return f"ServiceSet({[s.name for s in self._members]})"

    def value_keys(self) -> frozenset:
        return frozenset(s.value_key() for s in self._members)

    def union(self, other: "ServiceSet") -> "ServiceSet":
        return ServiceSet(list(self) + list(other))

    def intersection(self, other: "ServiceSet") -> "ServiceSet":
        keys = other.value_keys()
        return ServiceSet(s for s in self if s.value_key() in keys)

    def difference(self, other: "ServiceSet") -> "ServiceSet":
        keys = other.value_keys()
        return ServiceSet(s for s in self if s.value_key() not in keys)


# ---------------------------------------------------------------------------
# set expressions and groups

@dataclass(frozen=True)
class SetExpr:
    """Flat set expression: ``first (op term)*`` with ops ``,`` ``^`` ``\\``.

    The grammar has no grouping; ``^`` and ``\\`` bind tighter than ``,``
    and associate left-to-right.
    """

    first: str
    rest: tuple[tuple[str, str], ...] = ()

    def names(self) -> tuple[str, ...]:
        return (self.first,) + tuple(name for _, name in self.rest)

    def to_source(self) -> str:
        parts = [self.first]
        for op, name in self.rest:
            sep = ", " if op == "," else f" {op} "
            parts.append(f"{sep}{name}")
        return "".join(parts)

    @property
    def is_single_name(self) -> bool:
        return not self.rest


@dataclass(frozen=True)
class ServiceGroup:
    name: str
    expr: SetExpr
    members: ServiceSet


@dataclass(frozen=True)
class PortGroup:
    name: str
    ranges: tuple[PortRange, ...]  # as written; bounds checked by the validator


@dataclass(frozen=True)
class ZoneGroup:
    name: str
    expr: SetExpr
    zones: frozenset[str]  # resolved leaf zone names


@dataclass(frozen=True)
class HighLevelRule:
    """An inter-zone permit: ``left (-> | <->) right : services``."""

    name: str
    left: str
    operator: str  # "->" or "<->"
    right: str
    service_expr: SetExpr
    services: ServiceSet


@dataclass(frozen=True)
class ReportingRule:
    name: str
    attrs: tuple[tuple[str, Value], ...]
    use_case: str | None


class GlobalPolicy(NamedTuple):
    name: str
    rule_group: str
    reporting_rule: str


# ---------------------------------------------------------------------------
# the parsed policy and its expansion

@dataclass
class PolicySpec:
    """A fully name-resolved policy: the expanded, group-free rule source.

    Imported declarations live in the same tables under their namespace
    prefix (``iana_services.http``).  ``decl_order`` preserves source order
    of the main file's declarations for pretty-printing.
    """

    imports: tuple[str, ...] = ()
    declared_model: str | None = None
    services: dict[str, Service] = field(default_factory=dict)
    service_groups: dict[str, ServiceGroup] = field(default_factory=dict)
    port_groups: dict[str, PortGroup] = field(default_factory=dict)
    zone_groups: dict[str, ZoneGroup] = field(default_factory=dict)
    rules: dict[str, HighLevelRule] = field(default_factory=dict)
    rule_groups: dict[str, tuple[str, ...]] = field(default_factory=dict)
    reporting_rules: dict[str, ReportingRule] = field(default_factory=dict)
    global_policy: GlobalPolicy | None = None
    decl_order: tuple[tuple[str, str], ...] = ()
    file: str = field(default="<policy>", compare=False)
    source: str = field(default="", compare=False)
    positions: dict[str, tuple[int, int]] = field(default_factory=dict, compare=False)
    raw_attrs: dict[str, tuple[tuple[str, Value], ...]] = field(default_factory=dict, compare=False)

    def position_of(self, name: str) -> tuple[int, int]:
        return self.positions.get(name, (0, 0))

    def zone_set(self, ref: str) -> frozenset[str]:
        """Leaf zones a zone-or-group reference stands for."""
        group = self.zone_groups.get(ref)
        if group is not None:
            return group.zones
        return frozenset({ref})


@dataclass(frozen=True)
class FlowRule:
    """One expanded permit: a service allowed from src_zone to dst_zone.

    Carries only a permit action; the language has no deny form.  The
    ``src_ref``/``dst_ref`` fields keep the declaration-level names the
    rule was written with, for generated commentary.
    """

    rule_name: str
    src_zone: str
    dst_zone: str
    service: Service
    src_ref: str = ""
    dst_ref: str = ""

    def flow_key(self) -> tuple:
        return (self.rule_name, self.src_zone, self.dst_zone, self.service.name,
                self.service.value_key())
