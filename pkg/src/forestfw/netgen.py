"""Compilation of the expanded policy onto a topology.

Every flow is installed on every conduit of every valid path between its
zones (defence in depth), translated into vendor-neutral ACL rules by
substituting zone CIDRs, and supplemented with the return-path and
multicast rules stateful protocols and OSPF need.  Per firewall, rules
group into ACLs bound inbound on the interface where the traffic enters;
a firewall's own management traffic lands on its local input/output
filtering stage instead of a forwarding interface.  Every ACL ends in the
terminal deny-all and every generated ACL is bound to an interface.
"""

from __future__ import annotations

import ipaddress
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from forestfw.canonical import check_best_practice
from forestfw.checker import find_rule_overlaps
from forestfw.diagnostics import CompileError, Diagnostic, PolicyError, has_errors
from forestfw.policy_lang.expand import expand_rules
from forestfw.policy_lang.syntax import (
    FlowRule,
    PolicySpec,
    PortRange,
    VBlock,
    VName,
    Value,
    effective_dports,
    effective_sports,
    port_ranges,
)
from forestfw.policy_lang.validate import validate_spec
from forestfw.topo_model import (
    LOCAL_INTERFACE,
    Topology,
    ZoneConduitModel,
    build_zone_firewall_model,
    crosscheck_model,
    derive_zone_conduit,
)

ANY_NET = ipaddress.IPv4Network("0.0.0.0/0")
OSPF_PROTOCOL = 89
OSPF_NEIGHBOUR_NETS = (ipaddress.IPv4Network("224.0.0.5/32"),
                       ipaddress.IPv4Network("224.0.0.6/32"))

STATE_NEW = "NEW"
STATE_ESTABLISHED = "ESTABLISHED"


@dataclass(frozen=True)
class AclRule:
    """A vendor-neutral five-tuple-plus-state rule.

    ``protocol`` None is the ``ip`` wildcard and only ever appears on the
    terminal deny.  For ICMP rules the dport ranges carry the permitted
    ICMP types (empty = any); the simulator and renderers share that
    encoding.
    """

    action: str  # "permit" | "deny"
    protocol: int | None
    src: tuple[ipaddress.IPv4Network, ...]
    dst: tuple[ipaddress.IPv4Network, ...]
    sport: tuple[PortRange, ...] = ()
    dport: tuple[PortRange, ...] = ()
    state: tuple[str, ...] = ()
    log: bool = False
    comment: str = ""
    origin_rule: str = field(default="", compare=False)
    origin_service: str = field(default="", compare=False)
    service_comment: str = field(default="", compare=False)
    flow_dir: str = field(default="forward", compare=False)  # forward | return | aux

    def match_key(self) -> tuple:
        return (self.action, self.protocol, self.src, self.dst,
                self.sport, self.dport, self.state, self.log)


TERMINAL_DENY = AclRule(action="deny", protocol=None, src=(ANY_NET,), dst=(ANY_NET,))


@dataclass(frozen=True)
class Acl:
    name: str
    rules: tuple[AclRule, ...]


@dataclass(frozen=True)
class InterfaceAssignment:
    firewall: str
    interface: str
    direction: str  # "inbound" | "outbound"
    acl: str


@dataclass
class CompileOptions:
    ospf: bool = False
    best_practice: PolicySpec | None = None
    declared_model: ZoneConduitModel | None = None


@dataclass
class NetworkPolicy:
    """The compiled result: the model, per-conduit rules, ACLs, bindings."""

    model: ZoneConduitModel
    flows: tuple[FlowRule, ...]
    conduit_rules: dict[tuple[str, str], tuple[AclRule, ...]]
    acls: dict[str, tuple[Acl, ...]]  # per firewall
    assignments: tuple[InterfaceAssignment, ...]
    options: CompileOptions
    spec: PolicySpec
    # verification reporting also logs terminal denies; the neutral format
    # renders the deny in its fixed form, so the flag lives here and the
    # device templates consume it
    log_denies: bool = False

    def acl_by_name(self, firewall: str, name: str) -> Acl:
        for acl in self.acls[firewall]:
            if acl.name == name:
                return acl
        raise KeyError(f"{firewall} has no ACL {name!r}")

    def firewalls(self) -> list[str]:
        return sorted(self.acls)


# ---------------------------------------------------------------------------
# path selection

def enumerate_paths(model: ZoneConduitModel, src: str, dst: str,
                    established: bool = False) -> list[list[str]]:
    """All practical zone paths from src to dst, lexicographically ordered.

    Excluded paths: any with a Firewall-Zone as interior node (firewalls
    do not forward their own zone's traffic onward), any whose realization
    would cross some firewall interface twice (loops around firewalls),
    and, for new traffic originating at a Firewall-Zone, any destination
    not directly adjacent to that firewall.  Return traffic of an
    established connection retraces a forward path backwards, so
    ``established`` lifts the origination restriction.
    """
    if src == dst:
        raise ValueError("path endpoints must differ")
    if not model.firewall_interfaces:
        raise ValueError("path enumeration needs a topology-derived model")
    for zone in (src, dst):
        if zone not in model.zones:
            raise PolicyError(f"unknown zone {zone!r} in path query")

    if not established and model.zones[src].kind == "firewall":
        firewall = next(iter(model.zones[src].members))
        if dst not in model.firewall_interfaces.get(firewall, {}):
            return []

    paths: list[list[str]] = []

    def dfs(current: str, path: list[str]) -> None:
        if current == dst:
            paths.append(list(path))
            return
        for nxt in model.neighbors(current):
            if nxt in path:
                continue
            if nxt != dst and model.zones[nxt].kind == "firewall":
                continue  # cannot transit a Firewall-Zone
            path.append(nxt)
            dfs(nxt, path)
            path.pop()

    dfs(src, [src])
    valid = [p for p in sorted(paths) if _realizable_without_loops(model, p)]
    return valid


def _crossings(model: ZoneConduitModel, hop: tuple[str, str], firewall: str) -> tuple:
    """Interfaces the packet crosses on one firewall for one conduit hop."""
    x, y = hop
    fwz = model.firewall_zone_of(firewall)
    entry = LOCAL_INTERFACE if x == fwz else model.firewall_interfaces[firewall][x]
    exit_ = LOCAL_INTERFACE if y == fwz else model.firewall_interfaces[firewall][y]
    return ((firewall, entry), (firewall, exit_))


def _realizable_without_loops(model: ZoneConduitModel, path: list[str]) -> bool:
    hops = list(zip(path, path[1:]))
    conduits = []
    for a, b in hops:
        conduit = model.conduit_between(a, b)
        if conduit is None or not conduit.firewalls:
            return False
        conduits.append(conduit)
    for combo in itertools.product(*(sorted(c.firewalls) for c in conduits)):
        seen: set = set()
        ok = True
        for hop, firewall in zip(hops, combo):
            for crossing in _crossings(model, hop, firewall):
                if crossing in seen:
                    ok = False
                    break
                seen.add(crossing)
            if not ok:
                break
        if ok:
            return True
    return False


# ---------------------------------------------------------------------------
# rule translation

def translate_rule(flow: FlowRule,
                   zone_cidrs: Mapping[str, Sequence[ipaddress.IPv4Network]],
                   log: bool = False, comment: str = "") -> list[AclRule]:
    """One permit per (src CIDR, dst CIDR) pair of the flow's zones."""
    src_cidrs = tuple(zone_cidrs.get(flow.src_zone, ()))
    dst_cidrs = tuple(zone_cidrs.get(flow.dst_zone, ()))
    if not src_cidrs:
        raise PolicyError(f"zone {flow.src_zone!r} has no addresses")
    if not dst_cidrs:
        raise PolicyError(f"zone {flow.dst_zone!r} has no addresses")
    svc = flow.service
    if svc.protocol is None:
        raise PolicyError(f"service {svc.name!r} has no concrete protocol")
    if svc.protocol in (6, 17):
        sport = effective_sports(svc)
        dport = effective_dports(svc)
    elif svc.protocol == 1:
        sport = ()
        dport = port_ranges(svc.icmp_types)  # empty = any type
    else:
        sport = ()
        dport = ()
    rules = []
    for src in sorted(src_cidrs, key=_net_key):
        for dst in sorted(dst_cidrs, key=_net_key):
            rules.append(AclRule(
                action="permit", protocol=svc.protocol, src=(src,), dst=(dst,),
                sport=sport, dport=dport, log=log, comment=comment,
                origin_rule=flow.rule_name, origin_service=svc.name,
                service_comment=svc.comment,
            ))
    return rules


def _net_key(net: ipaddress.IPv4Network) -> tuple[int, int]:
    return (int(net.network_address), net.prefixlen)


def _mirror(rule: AclRule, comment: str) -> AclRule:
    return AclRule(
        action="permit", protocol=rule.protocol,
        src=rule.dst, dst=rule.src, sport=rule.dport, dport=rule.sport,
        state=(STATE_ESTABLISHED,) if rule.protocol == 6 else (),
        log=rule.log, comment=comment,
        origin_rule=rule.origin_rule, origin_service=rule.origin_service,
        service_comment=rule.service_comment,
        flow_dir="return",
    )


def ospf_supplementary_rules(log: bool = False) -> list[AclRule]:
    """Multicast permits that let OSPF neighbour relationships form."""
    return [
        AclRule(action="permit", protocol=OSPF_PROTOCOL, src=(ANY_NET,), dst=(net,),
                log=log, comment="enable OSPF neighbour relationships", flow_dir="aux")
        for net in OSPF_NEIGHBOUR_NETS
    ]


def add_supplementary_rules(rules: Sequence[AclRule], flow: FlowRule,
                            options: CompileOptions) -> list[AclRule]:
    """Attach connection state and synthesize return-path rules.

    TCP forwards become stateful (NEW,ESTABLISHED) with a mirrored
    ESTABLISHED-only return; UDP gets a stateless mirror.  ICMP gets no
    synthetic return: echo replies must be enabled explicitly.  With the
    OSPF option the neighbour multicast permits are appended.
    """
    protocol = flow.service.protocol
    out: list[AclRule] = []
    returns: list[AclRule] = []
    for rule in rules:
        return_comment = rule.comment.replace("(forward path)", "(return path)")
        if protocol == 6:
            forward = AclRule(
                action=rule.action, protocol=rule.protocol, src=rule.src, dst=rule.dst,
                sport=rule.sport, dport=rule.dport,
                state=(STATE_NEW, STATE_ESTABLISHED),
                log=rule.log, comment=rule.comment,
                origin_rule=rule.origin_rule, origin_service=rule.origin_service,
                service_comment=rule.service_comment,
            )
            out.append(forward)
            returns.append(_mirror(forward, return_comment))
        elif protocol == 17:
            out.append(rule)
            returns.append(_mirror(rule, return_comment))
        else:
            out.append(rule)
    out.extend(returns)
    if options.ospf:
        out.extend(ospf_supplementary_rules())
    return out


# ---------------------------------------------------------------------------
# compilation

def _logged_rule_groups(spec: PolicySpec) -> frozenset[str]:
    """Rule groups whose permits get log flags, per verification reporting."""
    if spec.global_policy is None:
        return frozenset()
    reporting = spec.reporting_rules.get(spec.global_policy.reporting_rule)
    if reporting is None or reporting.use_case != "verification":
        return frozenset()
    named: set[str] = set()
    for key, value in reporting.attrs:
        if key == "granularity.policy":
            named.update(_block_names(value, "rule_or_group"))
    return frozenset(named)


def _block_names(value: Value, key: str) -> list[str]:
    names = []
    if isinstance(value, VBlock):
        for k, v in value.items:
            if k == key and isinstance(v, VBlock):
                names.extend(n.name for _, n in v.items if isinstance(n, VName))
            elif k == key and isinstance(v, VName):
                names.append(v.name)
    return names


def _service_display(spec: PolicySpec, flow: FlowRule) -> str:
    rule = spec.rules.get(flow.rule_name)
    if rule is not None and rule.service_expr.is_single_name:
        return rule.service_expr.first.rsplit(".", 1)[-1].upper()
    if rule is not None:
        return rule.service_expr.to_source().upper()
    return flow.service.display_name.upper()


def _flow_comment(spec: PolicySpec, flow: FlowRule) -> str:
    src = flow.src_ref or flow.src_zone
    dst = flow.dst_ref or flow.dst_zone
    return f"enable {src} to {dst} {_service_display(spec, flow)} traffic (forward path)"


def compile_policy(spec: PolicySpec, topo: Topology,
                   options: CompileOptions | None = None) -> NetworkPolicy:
    """Compile a validated policy against a topology into ACLs.

    Verification tiers gate compilation: validation errors, a declared
    model mismatch, rule overlaps, best-practice violations, or a flow
    with no valid path all abort with the aggregated diagnostics.
    """
    options = options or CompileOptions()
    diags: list[Diagnostic] = list(validate_spec(spec))
    if has_errors(diags):
        raise CompileError(diags)

    model = derive_zone_conduit(build_zone_firewall_model(topo))
    if options.declared_model is not None:
        mismatch = crosscheck_model(model, options.declared_model)
        if mismatch is not None:
            diags.append(Diagnostic("error", f"security model mismatch: {mismatch}"))
            raise CompileError(diags)

    flows = expand_rules(spec)
    for flow in flows:
        for zone in (flow.src_zone, flow.dst_zone):
            if zone not in model.zones:
                diags.append(Diagnostic(
                    "error", f"rule {flow.rule_name!r} references zone {zone!r} "
                             f"not present in the derived model"))
    if has_errors(diags):
        raise CompileError(diags)

    overlaps = find_rule_overlaps(flows)
    for report in overlaps:
        diags.append(Diagnostic("error", str(report)))
    if options.best_practice is not None:
        for violation in check_best_practice(flows, model.zones, options.best_practice):
            diags.append(Diagnostic("error", str(violation)))
    if has_errors(diags):
        raise CompileError(diags)

    zone_cidrs = {name: zone.cidrs for name, zone in model.zones.items()}
    logged_groups = _logged_rule_groups(spec)
    logged_rules: set[str] = set()
    for group in logged_groups:
        logged_rules.update(spec.rule_groups.get(group, ()))
        if group in spec.rules:
            logged_rules.add(group)
    verification_logging = bool(logged_rules)

    paths_cache: dict[tuple[str, str], list[list[str]]] = {}
    buckets: dict[tuple[str, str, str], list[AclRule]] = {}
    conduit_rules: dict[tuple[str, str], list[AclRule]] = {}

    def bucket(firewall: str, interface: str, direction: str) -> list[AclRule]:
        return buckets.setdefault((firewall, interface, direction), [])

    for flow in flows:
        pair = (flow.src_zone, flow.dst_zone)
        if pair not in paths_cache:
            paths_cache[pair] = enumerate_paths(model, *pair)
        paths = paths_cache[pair]
        if not paths:
            diags.append(Diagnostic(
                "error", f"no valid path for flow {flow.rule_name!r}: "
                         f"{flow.src_zone} -> {flow.dst_zone} ({flow.service.name})"))
            continue

        log = flow.rule_name in logged_rules
        translated = translate_rule(flow, zone_cidrs, log=log,
                                    comment=_flow_comment(spec, flow))
        supplemented = add_supplementary_rules(translated, flow, options)
        forward = [r for r in supplemented if r.flow_dir == "forward"]
        returns = [r for r in supplemented if r.flow_dir == "return"]

        for path in paths:
            for x, y in zip(path, path[1:]):
                conduit = model.conduit_between(x, y)
                assert conduit is not None
                conduit_rules.setdefault((x, y), []).extend(forward)
                conduit_rules.setdefault((y, x), []).extend(returns)
                for firewall in sorted(conduit.firewalls):
                    fwz = model.firewall_zone_of(firewall)
                    ifaces = model.firewall_interfaces[firewall]
                    if x == fwz:
                        bucket(firewall, LOCAL_INTERFACE, "outbound").extend(forward)
                        bucket(firewall, LOCAL_INTERFACE, "inbound").extend(returns)
                    elif y == fwz:
                        bucket(firewall, LOCAL_INTERFACE, "inbound").extend(forward)
                        bucket(firewall, LOCAL_INTERFACE, "outbound").extend(returns)
                    else:
                        bucket(firewall, ifaces[x], "inbound").extend(forward)
                        bucket(firewall, ifaces[y], "inbound").extend(returns)
    if has_errors(diags):
        raise CompileError(diags)

    # every active interface carries an ACL, even if it is deny-only
    for firewall in sorted(model.firewall_interfaces):
        ifaces = model.firewall_interfaces[firewall]
        if not ifaces:
            continue  # disconnected firewall: no conduits, no ACLs
        for iface in sorted(set(ifaces.values())):
            bucket(firewall, iface, "inbound")
        bucket(firewall, LOCAL_INTERFACE, "inbound")
        bucket(firewall, LOCAL_INTERFACE, "outbound")

    ospf_rules = ospf_supplementary_rules() if options.ospf else []

    acls: dict[str, list[Acl]] = {}
    assignments: list[InterfaceAssignment] = []
    for firewall in sorted({fw for fw, _, _ in buckets}):
        counter = 0
        for (fw, iface, direction) in sorted(buckets):
            if fw != firewall:
                continue
            counter += 1
            name = f"acl_{counter}"
            rules = _assemble(buckets[(fw, iface, direction)])
            if ospf_rules and iface != LOCAL_INTERFACE:
                rules.extend(ospf_rules)
            rules.append(TERMINAL_DENY)
            acls.setdefault(firewall, []).append(Acl(name, tuple(rules)))
            assignments.append(InterfaceAssignment(firewall, iface, direction, name))

    return NetworkPolicy(
        model=model,
        flows=tuple(flows),
        conduit_rules={pair: tuple(_assemble(rules))
                       for pair, rules in sorted(conduit_rules.items())},
        acls={fw: tuple(acl_list) for fw, acl_list in acls.items()},
        assignments=tuple(assignments),
        options=options,
        spec=spec,
        log_denies=verification_logging,
    )


def _rule_sort_key(rule: AclRule) -> tuple:
    return (
        rule.origin_rule,
        rule.origin_service,
        rule.flow_dir,
        tuple(_net_key(n) for n in rule.src),
        tuple(_net_key(n) for n in rule.dst),
        rule.protocol if rule.protocol is not None else 256,
        rule.dport,
        rule.sport,
        rule.state,
    )


def _assemble(rules: Iterable[AclRule]) -> list[AclRule]:
    """Deterministic order, duplicates (by match effect) dropped."""
    out: list[AclRule] = []
    seen: set = set()
    for rule in sorted(rules, key=_rule_sort_key):
        key = rule.match_key()
        if key in seen:
            continue
        seen.add(key)
        out.append(rule)
    return out
