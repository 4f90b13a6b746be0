"""Rule-overlap and ACL-anomaly detection with concrete counterexamples.

High-level overlaps are pairs of flows from distinct rules that permit a
shared service between the same zone pair; they are reported, never
auto-corrected.  Network-level checks find redundant (fully covered by
earlier permits) and shadowed (never able to match) ACL rules.  An
optional export renders the policy as a small relational model for
external analysis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from forestfw import intervals
from forestfw.header_space import HeaderPoint, Predicate, service_predicate
from forestfw.intervals import Interval, IntervalSet
from forestfw.policy_lang.syntax import (
    FlowRule,
    PolicySpec,
    Service,
    effective_dports,
    effective_icmp_types,
    effective_sports,
    port_ranges,
)

if TYPE_CHECKING:  # avoid a runtime cycle with netgen
    from forestfw.netgen import Acl, AclRule

HIGH_LEVEL_OVERLAP = "high_level_overlap"
ACL_REDUNDANCY = "acl_redundancy"
ACL_SHADOW = "acl_shadow"


@dataclass(frozen=True)
class OverlapWitness:
    src_zone: str
    dst_zone: str
    service: Service  # the non-empty intersection

    def predicate(self) -> Predicate:
        return service_predicate(self.service)

    def sample_point(self) -> HeaderPoint:
        return self.predicate().sample_point()


@dataclass(frozen=True)
class OverlapReport:
    kind: str
    rule_a: str
    rule_b: str
    witnesses: tuple[OverlapWitness, ...] = ()
    detail: str = ""

    def __str__(self) -> str:
        if self.kind == HIGH_LEVEL_OVERLAP:
            parts = []
            for w in self.witnesses:
                svc = w.service
                dims = [f"ip_protocol={svc.protocol}"]
                if svc.protocol in (6, 17) and svc.dest_ports:
                    dims.append("dest_port=" + ",".join(str(r) for r in svc.dest_ports))
                if svc.protocol == 1 and svc.icmp_types:
                    dims.append("icmp_type=" + ",".join(str(r) for r in svc.icmp_types))
                parts.append(f"{w.src_zone}->{w.dst_zone} {' '.join(dims)}")
            return (f"rule overlap: {self.rule_a} x {self.rule_b} "
                    f"({'; '.join(parts)})")
        return f"{self.kind}: {self.rule_a} covered by {self.rule_b}{self.detail}"


def service_intersection(a: Service, b: Service) -> Service | None:
    """Dimension-wise intersection of two services; None when empty."""
    if a.protocol is None or b.protocol is None or a.protocol != b.protocol:
        return None
    name = f"({a.display_name} ^ {b.display_name})"
    if a.protocol == 1:
        shared = intervals.intersect(
            intervals.normalize(effective_icmp_types(a)),
            intervals.normalize(effective_icmp_types(b)),
        )
        if not shared:
            return None
        return Service(name, 1, icmp_types=port_ranges(shared))
    if a.protocol in (6, 17):
        sports = intervals.intersect(
            intervals.normalize(effective_sports(a)), intervals.normalize(effective_sports(b)))
        dports = intervals.intersect(
            intervals.normalize(effective_dports(a)), intervals.normalize(effective_dports(b)))
        if not sports or not dports:
            return None
        return Service(name, a.protocol,
                       source_ports=port_ranges(sports), dest_ports=port_ranges(dports))
    return Service(name, a.protocol)


def find_rule_overlaps(flows: Sequence[FlowRule]) -> list[OverlapReport]:
    """Overlap reports, one per pair of distinct high-level rules.

    Flows expanded from the same rule never self-report.  Output order is
    lexicographic by rule-name pair; witnesses are aggregated and
    deduplicated by value.
    """
    by_conduit: dict[tuple[str, str], list[FlowRule]] = {}
    for flow in flows:
        by_conduit.setdefault((flow.src_zone, flow.dst_zone), []).append(flow)

    found: dict[tuple[str, str], dict[tuple, OverlapWitness]] = {}
    for (src, dst), members in sorted(by_conduit.items()):
        for i, fa in enumerate(members):
            for fb in members[i + 1:]:
                if fa.rule_name == fb.rule_name:
                    continue
                shared = service_intersection(fa.service, fb.service)
                if shared is None:
                    continue
                pair = tuple(sorted((fa.rule_name, fb.rule_name)))
                witness = OverlapWitness(src, dst, shared)
                found.setdefault(pair, {})[(src, dst) + shared.value_key()] = witness

    reports = []
    for (rule_a, rule_b) in sorted(found):
        witnesses = tuple(sorted(found[(rule_a, rule_b)].values(),
                                 key=lambda w: (w.src_zone, w.dst_zone, w.service.name)))
        reports.append(OverlapReport(HIGH_LEVEL_OVERLAP, rule_a, rule_b, witnesses))
    return reports


# ---------------------------------------------------------------------------
# network-level anomaly detection

_STATE_BITS = {"NEW": 0, "ESTABLISHED": 1}

_Region = tuple[IntervalSet, ...]  # proto, src, dst, sport, dport, state
_Box = tuple[Interval, ...]


def _rule_region(rule: "AclRule") -> _Region:
    proto: IntervalSet = ((0, 255),) if rule.protocol is None else ((rule.protocol, rule.protocol),)
    src = intervals.normalize(
        (int(n.network_address), int(n.broadcast_address)) for n in rule.src) or ((0, (1 << 32) - 1),)
    dst = intervals.normalize(
        (int(n.network_address), int(n.broadcast_address)) for n in rule.dst) or ((0, (1 << 32) - 1),)
    sport = intervals.normalize(rule.sport) or ((0, 65535),)
    dport = intervals.normalize(rule.dport) or ((0, 65535),)
    if rule.state:
        state = intervals.normalize((_STATE_BITS[s], _STATE_BITS[s]) for s in rule.state)
    else:
        state = ((0, 1),)
    return (proto, src, dst, sport, dport, state)


def _region_boxes(region: _Region) -> list[_Box]:
    boxes: list[_Box] = [()]
    for dim in region:
        boxes = [box + (iv,) for box in boxes for iv in dim]
    return boxes


def _subtract_box(box: _Box, region: _Region) -> list[_Box]:
    """Disjoint pieces of a simple box not covered by a product-of-unions region."""
    covered: list[IntervalSet] = []
    for iv, dim in zip(box, region):
        shared = intervals.intersect((iv,), dim)
        if not shared:
            return [box]
        covered.append(shared)

    pieces: list[_Box] = []
    prefixes: list[_Box] = [()]  # boxes over dims [0..d) restricted to the covered part
    for d, (iv, dim) in enumerate(zip(box, region)):
        outside = intervals.subtract((iv,), dim)
        for prefix in prefixes:
            for out_iv in outside:
                pieces.append(prefix + (out_iv,) + box[d + 1:])
        prefixes = [p + (c,) for p in prefixes for c in covered[d]]
    return pieces


def _covered(rule_region: _Region, coverers: list[_Region]) -> bool:
    """Is the region fully covered by the union of the coverers?"""
    boxes = _region_boxes(rule_region)
    for coverer in coverers:
        next_boxes: list[_Box] = []
        for box in boxes:
            next_boxes.extend(_subtract_box(box, coverer))
        boxes = next_boxes
        if not boxes:
            return True
    return not boxes


def find_acl_anomalies(acl: "Acl") -> list[OverlapReport]:
    """Redundant and shadowed rules in an ordered network-level ACL.

    The terminal deny-all is the backstop and never reported.  A permit
    fully covered by the union of earlier permits is a redundancy; any
    other rule that can never match is a shadow.
    """
    reports: list[OverlapReport] = []
    rules = list(acl.rules)
    regions = [_rule_region(r) for r in rules]
    for i, rule in enumerate(rules):
        if i == len(rules) - 1 and rule.action == "deny":
            break
        earlier_permits = [regions[j] for j in range(i) if rules[j].action == "permit"]
        provenance = f"{acl.name}[{i}]"
        if rule.action == "permit" and earlier_permits and _covered(regions[i], earlier_permits):
            reports.append(OverlapReport(
                ACL_REDUNDANCY, provenance, f"{acl.name}[0..{i - 1}] permits",
                detail=f" ({rule.comment})" if rule.comment else ""))
            continue
        if i > 0 and _covered(regions[i], regions[:i]):
            reports.append(OverlapReport(
                ACL_SHADOW, provenance, f"{acl.name}[0..{i - 1}]",
                detail=f" ({rule.comment})" if rule.comment else ""))
    return reports


# ---------------------------------------------------------------------------
# relational model export

_ALLOY_HEADER = """\
abstract sig Service {
   ip_protocol: some Int,
   source_port: set String,
   dest_port: set String,
   icmp_type: set Int }

abstract sig PolicyRule {
   zone1: one String,
   zone2: one String,
   operator: some Int,
   service: one Service }

one sig SecurityPolicy { rules: some PolicyRule }

fact {
 all r: PolicyRule | r in SecurityPolicy.rules
 SecurityPolicy.rules = PolicyRule
 all s: Service | some r: PolicyRule | s in r.service }
"""


def _atom(name: str) -> str:
    return name.replace(".", "_")


def emit_alloy(spec: PolicySpec, flows: Iterable[FlowRule]) -> str:
    """Byte-stable relational model of the expanded policy."""
    lines = [_ALLOY_HEADER]
    services: dict[str, Service] = {}
    flow_list = sorted(flows, key=lambda f: f.flow_key())
    for flow in flow_list:
        services.setdefault(flow.service.name, flow.service)

    for name in sorted(services):
        svc = services[name]
        lines.append(f"one sig svc_{_atom(name)} extends Service {{}} {{")
        lines.append(f" ip_protocol = {svc.protocol}")
        sports = ",".join(f'"{r}"' for r in effective_sports(svc)) if svc.protocol in (6, 17) else "none"
        dports = ",".join(f'"{r}"' for r in effective_dports(svc)) if svc.protocol in (6, 17) else "none"
        lines.append(f" source_port = {sports}")
        lines.append(f" dest_port = {dports}")
        if svc.protocol == 1:
            types = ",".join(str(lo) if lo == hi else f"{lo}+{hi}"
                             for lo, hi in effective_icmp_types(svc))
            lines.append(f" icmp_type = {types}")
        else:
            lines.append(" icmp_type = none")
        lines.append("}")
        lines.append("")

    for i, flow in enumerate(flow_list):
        lines.append(f"one sig rule_{i}_{_atom(flow.rule_name)} extends PolicyRule {{}} {{")
        lines.append(f' zone1 = "{flow.src_zone}"')
        lines.append(f' zone2 = "{flow.dst_zone}"')
        lines.append(" operator = 1")
        lines.append(f" service = svc_{_atom(flow.service.name)}")
        lines.append("}")
        lines.append("")

    lines.append("assert no_rule_overlaps {")
    lines.append(" all disj a, b: PolicyRule |")
    lines.append("  a.zone1 != b.zone1 or a.zone2 != b.zone2 or a.service != b.service }")
    lines.append("")
    lines.append("check no_rule_overlaps")
    return "\n".join(lines) + "\n"
