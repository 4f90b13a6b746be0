"""In-process packet-filter simulator.

The simulator walks packets along the conduit paths of the compiled
network, evaluating each traversed firewall's interface ACL first-match,
with a connection table gating ESTABLISHED traffic.  Positive vetting
injects one representative packet per expanded flow (plus the TCP return
leg) and expects delivery; negative vetting scans every ordered zone pair
across a bounded protocol/port space and reports any delivery not implied
by the policy.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from pathlib import Path

from forestfw import intervals
from forestfw.diagnostics import PolicyError
from forestfw.header_space import Predicate
from forestfw.netgen import AclRule, NetworkPolicy, enumerate_paths
from forestfw.policy_lang.syntax import (
    FlowRule,
    PortRange,
    Service,
    effective_dports,
    effective_icmp_types,
    effective_sports,
    port_ranges,
)
from forestfw.topo_model import LOCAL_INTERFACE, Conduit, Zone, ZoneConduitModel

NEW = "NEW"
ESTABLISHED = "ESTABLISHED"


@dataclass(frozen=True)
class Packet:
    """A header point plus ingress zone and connection-state intent."""

    src_addr: int
    dst_addr: int
    protocol: int
    sport: int = 0
    dport: int = 0
    icmp_type: int = 0
    state: str = NEW


@dataclass(frozen=True)
class TraceHop:
    firewall: str
    interface: str
    verdict: str
    rule: str


@dataclass(frozen=True)
class InjectResult:
    delivered: bool
    trace: tuple[TraceHop, ...]
    reason: str = ""


@dataclass(frozen=True)
class VetResult:
    """Per-flow outcome of positive vetting: 1 delivered, 0 failed."""

    rule_name: str
    service: str
    src_zone: str
    dst_zone: str
    outcome: int
    trace: tuple["TraceHop", ...] = ()
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.outcome else "FAIL"
        hops = ",".join(f"{hop.firewall}/{hop.interface}" for hop in self.trace)
        parts = [status, self.rule_name, f"{self.src_zone}->{self.dst_zone}",
                 self.service, hops or "-"]
        if self.detail:
            parts.append(self.detail)
        return " ".join(parts)


@dataclass(frozen=True)
class Leak:
    src_zone: str
    dst_zone: str
    protocol: int
    port: int  # dport, or ICMP type for protocol 1

    def line(self) -> str:
        dim = "icmp_type" if self.protocol == 1 else "dport"
        return (f"LEAK {self.src_zone}->{self.dst_zone} protocol={self.protocol} "
                f"{dim}={self.port}")


@dataclass
class SimNetwork:
    model: ZoneConduitModel
    acl_map: dict[tuple[str, str, str], tuple[AclRule, ...]]
    flows: tuple[FlowRule, ...]
    connections: set[tuple] = field(default_factory=set)

    def reset_connections(self) -> None:
        self.connections.clear()


def from_network_policy(policy: NetworkPolicy) -> SimNetwork:
    acl_map = {}
    for a in policy.assignments:
        acl = policy.acl_by_name(a.firewall, a.acl)
        acl_map[(a.firewall, a.interface, a.direction)] = acl.rules
    return SimNetwork(policy.model, acl_map, policy.flows)


def load_compiled(directory: Path | str) -> SimNetwork:
    """Rebuild the simulated network from a compile output directory.

    Rules come from the vendor-neutral files; the manifest supplies the
    model, interface bindings, and expanded flows.
    """
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise PolicyError(f"no compile manifest under {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    model = ZoneConduitModel()
    for name, data in manifest["zones"].items():
        model.zones[name] = Zone(
            name, data["kind"], frozenset(data.get("members", ())),
            tuple(ipaddress.IPv4Network(c) for c in data["cidrs"]))
    for entry in manifest["conduits"]:
        pair = tuple(sorted(entry["zones"]))
        model.conduits[pair] = Conduit(pair, frozenset(entry["firewalls"]))
    model.firewall_interfaces = {
        fw: dict(ifaces) for fw, ifaces in manifest["firewall_interfaces"].items()
    }

    from forestfw.render import parse_neutral  # local import avoids a cycle

    acls_per_file: dict[str, dict[str, tuple[AclRule, ...]]] = {}
    acl_map: dict[tuple[str, str, str], tuple[AclRule, ...]] = {}
    for a in manifest["assignments"]:
        file_name = a["file"]
        if file_name not in acls_per_file:
            text = (directory / file_name).read_text(encoding="utf-8")
            acls_per_file[file_name] = {acl.name: acl.rules for acl in parse_neutral(text)}
        acl_map[(a["firewall"], a["interface"], a["direction"])] = \
            acls_per_file[file_name][a["acl"]]

    flows = []
    for f in manifest["flows"]:
        svc = f["service"]
        flows.append(FlowRule(
            rule_name=f["rule"], src_zone=f["src_zone"], dst_zone=f["dst_zone"],
            service=Service(
                name=svc["name"], protocol=svc["protocol"],
                source_ports=tuple(PortRange(lo, hi) for lo, hi in svc["source_ports"]),
                dest_ports=tuple(PortRange(lo, hi) for lo, hi in svc["dest_ports"]),
                icmp_types=tuple(PortRange(lo, hi) for lo, hi in svc["icmp_types"]),
            )))
    return SimNetwork(model, acl_map, tuple(flows))


# ---------------------------------------------------------------------------
# rule matching and injection

def _in_ranges(value: int, ranges: tuple[PortRange, ...]) -> bool:
    if not ranges:
        return True  # unconstrained dimension
    for lo, hi in ranges:
        if lo <= value <= hi:
            return True
    return False


def _addr_in(addr: int, nets: tuple[ipaddress.IPv4Network, ...]) -> bool:
    for net in nets:
        if int(net.network_address) <= addr <= int(net.broadcast_address):
            return True
    return False


def rule_matches_packet(rule: AclRule, packet: Packet) -> bool:
    if rule.protocol is not None and rule.protocol != packet.protocol:
        return False
    if rule.state and packet.state not in rule.state:
        return False
    if not _addr_in(packet.src_addr, rule.src) or not _addr_in(packet.dst_addr, rule.dst):
        return False
    if packet.protocol == 1:
        return _in_ranges(packet.icmp_type, rule.dport)
    if packet.protocol in (6, 17):
        return (_in_ranges(packet.sport, rule.sport)
                and _in_ranges(packet.dport, rule.dport))
    return True


def eval_acl(rules: tuple[AclRule, ...], packet: Packet) -> tuple[str, str]:
    """First-match decision plus a description of the deciding rule."""
    for i, rule in enumerate(rules):
        if rule_matches_packet(rule, packet):
            return rule.action, f"[{i}] {rule.action} {rule.comment or rule.origin_service}"
    return "deny", "implicit deny (no match)"


def acl_rule_predicate(rule: AclRule) -> Predicate:
    """Header-space rectangle of an ACL rule (state not represented)."""
    def nets(ranges: tuple[ipaddress.IPv4Network, ...]):
        return intervals.normalize(
            (int(n.network_address), int(n.broadcast_address)) for n in ranges)

    return Predicate(
        src=nets(rule.src) or ((0, (1 << 32) - 1),),
        dst=nets(rule.dst) or ((0, (1 << 32) - 1),),
        protocol=((rule.protocol, rule.protocol),) if rule.protocol is not None else ((0, 255),),
        sport=intervals.normalize(rule.sport) or ((0, 65535),),
        dport=intervals.normalize(rule.dport) or ((0, 65535),),
        icmp=((0, 255),),
    )


def _hop_acl_key(model: ZoneConduitModel, firewall: str, x: str, y: str) -> tuple[str, str, str]:
    """ACL evaluated on firewall `firewall` for traffic crossing x -> y."""
    fwz = model.firewall_zone_of(firewall)
    if x == fwz:
        return (firewall, LOCAL_INTERFACE, "outbound")
    if y == fwz:
        return (firewall, LOCAL_INTERFACE, "inbound")
    return (firewall, model.firewall_interfaces[firewall][x], "inbound")


def inject(net: SimNetwork, packet: Packet, ingress_zone: str) -> InjectResult:
    """Walk a packet from its ingress zone toward its destination zone.

    Delivered iff some valid path accepts it at every traversed firewall.
    ESTABLISHED packets require a connection-table entry created by a
    previously delivered NEW packet of the mirrored flow.
    """
    if ingress_zone not in net.model.zones:
        raise PolicyError(f"unknown ingress zone {ingress_zone!r}")
    dst_zone = net.model.zone_of_address(packet.dst_addr)
    if dst_zone is None:
        raise PolicyError(f"destination address {ipaddress.IPv4Address(packet.dst_addr)} "
                          f"belongs to no zone")

    if packet.state == ESTABLISHED:
        mirror = (packet.protocol, packet.dst_addr, packet.dport,
                  packet.src_addr, packet.sport)
        if mirror not in net.connections:
            return InjectResult(False, (), "no connection entry for ESTABLISHED packet")

    if dst_zone == ingress_zone:
        return InjectResult(True, (), "intra-zone traffic is not filtered")

    paths = enumerate_paths(net.model, ingress_zone, dst_zone,
                            established=packet.state == ESTABLISHED)
    if not paths:
        return InjectResult(False, (), f"no valid path {ingress_zone} -> {dst_zone}")

    last_trace: tuple[TraceHop, ...] = ()
    for path in paths:
        trace: list[TraceHop] = []
        ok = True
        for x, y in zip(path, path[1:]):
            conduit = net.model.conduit_between(x, y)
            assert conduit is not None
            hop_accept = False
            hop_trace: TraceHop | None = None
            for firewall in sorted(conduit.firewalls):
                key = _hop_acl_key(net.model, firewall, x, y)
                action, rule_text = eval_acl(net.acl_map.get(key, ()), packet)
                if action == "permit":
                    hop_accept = True
                    hop_trace = TraceHop(firewall, key[1], "permit", rule_text)
                    break
                hop_trace = TraceHop(firewall, key[1], "deny", rule_text)
            assert hop_trace is not None
            trace.append(hop_trace)
            if not hop_accept:
                ok = False
                break
        last_trace = tuple(trace)
        if ok:
            if packet.state == NEW and packet.protocol == 6:
                net.connections.add((packet.protocol, packet.src_addr, packet.sport,
                                     packet.dst_addr, packet.dport))
            return InjectResult(True, last_trace)
    return InjectResult(False, last_trace, "denied in transit")


# ---------------------------------------------------------------------------
# vetting

def _zone_rep_addr(zone: Zone) -> int:
    if not zone.cidrs:
        raise PolicyError(f"zone {zone.name!r} has no addresses")
    return int(zone.cidrs[0].network_address)


def representative_packet(net: SimNetwork, flow: FlowRule) -> Packet:
    """Deterministic test packet: the lowest in-range value per dimension."""
    svc = flow.service
    src = _zone_rep_addr(net.model.zones[flow.src_zone])
    dst = _zone_rep_addr(net.model.zones[flow.dst_zone])
    if svc.protocol in (6, 17):
        sport = effective_sports(svc)[0].lo
        dport = effective_dports(svc)[0].lo
        return Packet(src, dst, svc.protocol, sport, dport, 0, NEW)
    if svc.protocol == 1:
        icmp_type = effective_icmp_types(svc)[0].lo
        return Packet(src, dst, 1, 0, 0, icmp_type, NEW)
    return Packet(src, dst, svc.protocol or 0, 0, 0, 0, NEW)


def vet_positive(net: SimNetwork) -> list[VetResult]:
    """Inject every expanded flow's representative packet; expect delivery.

    TCP flows additionally require the reverse ESTABLISHED packet to pass
    once the forward NEW packet has been delivered.
    """
    results = []
    for flow in net.flows:
        net.reset_connections()
        packet = representative_packet(net, flow)
        forward = inject(net, packet, flow.src_zone)
        outcome = 1 if forward.delivered else 0
        detail = "" if forward.delivered else f"forward: {forward.reason or 'denied'}"
        trace = forward.trace
        if forward.delivered and flow.service.protocol == 6:
            reverse = Packet(packet.dst_addr, packet.src_addr, 6,
                             packet.dport, packet.sport, 0, ESTABLISHED)
            back = inject(net, reverse, flow.dst_zone)
            if not back.delivered:
                outcome = 0
                detail = f"return: {back.reason or 'denied'}"
                trace = forward.trace + back.trace
        results.append(VetResult(flow.rule_name, flow.service.name,
                                 flow.src_zone, flow.dst_zone, outcome,
                                 trace, detail))
    net.reset_connections()
    return results


@dataclass(frozen=True)
class ScanSpec:
    protocols: tuple[int, ...] = (1, 6, 17)
    ports: tuple[PortRange, ...] = (PortRange(0, 1023),)

    def port_values(self):
        for lo, hi in intervals.normalize(self.ports):
            yield from range(lo, hi + 1)


SCAN_SPORT = 49152  # fixed ephemeral source port for scan packets


def default_scan_spec(net: SimNetwork) -> ScanSpec:
    """Ports 0-1023 plus every explicitly declared port of the policy."""
    ranges: list[tuple[int, int]] = [(0, 1023)]
    full = (0, 65535)
    for flow in net.flows:
        for r in flow.service.dest_ports + flow.service.source_ports:
            if tuple(r) != full:
                ranges.append(tuple(r))
    return ScanSpec((1, 6, 17), port_ranges(ranges))


def _service_accepts(svc: Service, packet: Packet) -> bool:
    if svc.protocol != packet.protocol:
        return False
    if svc.protocol == 1:
        return _in_ranges(packet.icmp_type, effective_icmp_types(svc))
    if svc.protocol in (6, 17):
        return (_in_ranges(packet.sport, effective_sports(svc))
                and _in_ranges(packet.dport, effective_dports(svc)))
    return True


@dataclass
class _PairPlan:
    """Precomputed evaluation plan for one ordered zone pair."""

    src_addr: int
    dst_addr: int
    # per path: list of hops; per hop: list of (rules filtered by address)
    paths: list[list[list[AclRule]]]
    services: list[Service]


def _pair_plan(net: SimNetwork, src_zone: str, dst_zone: str) -> _PairPlan:
    src_addr = _zone_rep_addr(net.model.zones[src_zone])
    dst_addr = _zone_rep_addr(net.model.zones[dst_zone])
    paths = []
    for path in enumerate_paths(net.model, src_zone, dst_zone):
        hops = []
        for x, y in zip(path, path[1:]):
            conduit = net.model.conduit_between(x, y)
            assert conduit is not None
            per_firewall = []
            for firewall in sorted(conduit.firewalls):
                key = _hop_acl_key(net.model, firewall, x, y)
                rules = [r for r in net.acl_map.get(key, ())
                         if _addr_in(src_addr, r.src) and _addr_in(dst_addr, r.dst)]
                per_firewall.append(rules)
            hops.append(per_firewall)
        paths.append(hops)
    services = [f.service for f in net.flows
                if f.src_zone == src_zone and f.dst_zone == dst_zone]
    return _PairPlan(src_addr, dst_addr, paths, services)


def vet_negative(net: SimNetwork, scan: ScanSpec | None = None) -> list[Leak]:
    """Exhaustive scan over zone pairs; report deliveries the policy never implied."""
    scan = scan or default_scan_spec(net)
    port_values = list(scan.port_values())
    leaks: list[Leak] = []
    zones = sorted(net.model.zones)
    for src_zone in zones:
        for dst_zone in zones:
            if src_zone == dst_zone:
                continue
            plan = _pair_plan(net, src_zone, dst_zone)
            if not plan.paths:
                continue
            for protocol in scan.protocols:
                for value in port_values:
                    if protocol == 1 and value > 255:
                        continue
                    packet = Packet(
                        plan.src_addr, plan.dst_addr, protocol,
                        SCAN_SPORT, 0 if protocol == 1 else value,
                        value if protocol == 1 else 0, NEW)
                    if not _plan_delivers(plan, packet):
                        continue
                    if any(_service_accepts(svc, packet) for svc in plan.services):
                        continue
                    leaks.append(Leak(src_zone, dst_zone, protocol, value))
    return leaks


def _plan_delivers(plan: _PairPlan, packet: Packet) -> bool:
    for hops in plan.paths:
        delivered = True
        for per_firewall in hops:
            hop_accept = False
            for rules in per_firewall:
                action = "deny"
                for rule in rules:
                    if rule_matches_packet(rule, packet):
                        action = rule.action
                        break
                if action == "permit":
                    hop_accept = True
                    break
            if not hop_accept:
                delivered = False
                break
        if delivered:
            return True
    return False
