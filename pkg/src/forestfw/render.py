"""Deterministic text rendering of a compiled policy.

The vendor-neutral format is the reference representation: one ``INFO``
header per ACL, ``remark~`` comment lines, and ``~``-separated rule lines
ending in the fixed terminal ``deny~ip~from~any~to~any~sport~~dport~~state~``.
It round-trips exactly through :func:`parse_neutral`.  Device targets
(an iptables-like and an ASA-like dialect) are rendered from template
files with substitution slots and carry rule provenance as comments.
"""

from __future__ import annotations

import ipaddress
import json
import re
from dataclasses import dataclass
from pathlib import Path

from forestfw.diagnostics import PolicyError
from forestfw.netgen import (
    Acl,
    AclRule,
    InterfaceAssignment,
    NetworkPolicy,
)
from forestfw.policy_lang.syntax import PROTOCOL_NAMES, PROTOCOL_NUMBERS, PolicySpec, PortRange
from forestfw.topo_model import LOCAL_INTERFACE

NEUTRAL_HEADER = "INFO Vendor neutral network-level ruleset for ACL: "
TERMINAL_DENY_LINE = "deny~ip~from~any~to~any~sport~~dport~~state~"

_TEMPLATE_DIR = Path(__file__).parent / "templates"
VENDORS = ("neutral", "iptables_like", "asa_like")


# ---------------------------------------------------------------------------
# vendor-neutral format

def _ports_text(ranges: tuple[PortRange, ...]) -> str:
    if not ranges:
        return ""
    parts = [str(r.lo) if r.lo == r.hi else f"'{r.lo}-{r.hi}'" for r in ranges]
    return "[" + ", ".join(parts) + "]"


def _addr_text(nets: tuple[ipaddress.IPv4Network, ...]) -> str:
    if len(nets) == 1 and nets[0].prefixlen == 0:
        return "any"
    return ",".join(str(n) for n in nets)


def _proto_text(protocol: int | None) -> str:
    if protocol is None:
        return "ip"
    return PROTOCOL_NAMES.get(protocol, str(protocol))


def render_rule_neutral(rule: AclRule) -> str:
    if rule.action == "deny" and rule.protocol is None:
        return TERMINAL_DENY_LINE
    fields = [
        rule.action,
        _proto_text(rule.protocol),
        "from",
        _addr_text(rule.src),
        "to",
        _addr_text(rule.dst),
        "sport",
        _ports_text(rule.sport),
        "dport",
        _ports_text(rule.dport),
        "state",
        ",".join(rule.state),
    ]
    line = "~".join(fields)
    if rule.log:
        line += "~log"
    return line


def render_neutral(acl: Acl) -> str:
    """The vendor-neutral ruleset text for one ACL."""
    lines = [NEUTRAL_HEADER + acl.name]
    last_comment = None
    for rule in acl.rules:
        if rule.comment and rule.comment != last_comment:
            lines.append(f"  remark~{rule.comment}")
        if rule.comment:
            last_comment = rule.comment
        lines.append("  " + render_rule_neutral(rule))
    return "\n".join(lines) + "\n"


def render_neutral_file(policy: NetworkPolicy, firewall: str) -> str:
    """All of a firewall's ACLs in assignment order."""
    return "\n".join(render_neutral(acl) for acl in policy.acls[firewall])


def _parse_ports(text: str) -> tuple[PortRange, ...]:
    text = text.strip()
    if not text:
        return ()
    if not (text.startswith("[") and text.endswith("]")):
        raise PolicyError(f"malformed port list {text!r}")
    inner = text[1:-1].strip()
    if not inner:
        return ()
    ranges = []
    for part in inner.split(","):
        part = part.strip().strip("'")
        if "-" in part:
            lo, hi = part.split("-", 1)
            ranges.append(PortRange(int(lo), int(hi)))
        else:
            ranges.append(PortRange(int(part), int(part)))
    return tuple(ranges)


def _parse_addr(text: str) -> tuple[ipaddress.IPv4Network, ...]:
    if text == "any":
        return (ipaddress.IPv4Network("0.0.0.0/0"),)
    return tuple(ipaddress.IPv4Network(part) for part in text.split(","))


def parse_neutral(text: str) -> list[Acl]:
    """Inverse of render_neutral over a whole neutral file."""
    acls: list[Acl] = []
    name: str | None = None
    rules: list[AclRule] = []
    comment = ""

    def flush() -> None:
        nonlocal rules
        if name is not None:
            acls.append(Acl(name, tuple(rules)))
        rules = []

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith(NEUTRAL_HEADER):
            flush()
            name = line[len(NEUTRAL_HEADER):].strip()
            comment = ""
            continue
        if line.startswith("remark~"):
            comment = line[len("remark~"):]
            continue
        if name is None:
            raise PolicyError(f"rule line before any ACL header: {line!r}")
        fields = line.split("~")
        if len(fields) not in (12, 13):
            raise PolicyError(f"malformed neutral rule line: {line!r}")
        action, proto, kw_from, src, kw_to, dst, kw_sport, sport, kw_dport, dport, kw_state, state = fields[:12]
        if (kw_from, kw_to, kw_sport, kw_dport, kw_state) != ("from", "to", "sport", "dport", "state"):
            raise PolicyError(f"malformed neutral rule line: {line!r}")
        log = len(fields) == 13 and fields[12] == "log"
        protocol = PROTOCOL_NUMBERS[proto] if proto in PROTOCOL_NUMBERS else int(proto)
        rules.append(AclRule(
            action=action,
            protocol=protocol,
            src=_parse_addr(src),
            dst=_parse_addr(dst),
            sport=_parse_ports(sport),
            dport=_parse_ports(dport),
            state=tuple(s for s in state.split(",") if s),
            log=log,
            comment=comment,
        ))
    flush()
    return acls


# ---------------------------------------------------------------------------
# device templates

@dataclass(frozen=True)
class DeviceTemplate:
    vendor_id: str
    sections: dict[str, str]

    def format(self, section: str, **slots: str) -> str:
        return self.sections[section].format(**slots)


def load_template(vendor_id: str, templates_dir: Path | None = None) -> DeviceTemplate:
    root = Path(templates_dir) if templates_dir else _TEMPLATE_DIR
    path = root / f"{vendor_id}.tmpl"
    if not path.is_file():
        raise PolicyError(f"no template for vendor {vendor_id!r} under {root}")
    sections: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("[") and line.endswith("]"):
            if current is not None:
                sections[current] = "\n".join(buf).strip("\n")
            current = line[1:-1]
            buf = []
        else:
            buf.append(line)
    if current is not None:
        sections[current] = "\n".join(buf).strip("\n")
    return DeviceTemplate(vendor_id, sections)


def _iptables_matches(rule: AclRule) -> list[str]:
    """Match-expression variants for one rule (one per port-range combo)."""
    base = ""
    if rule.protocol is not None:
        base += f" -p {_proto_text(rule.protocol)}"
    src = _addr_text(rule.src)
    dst = _addr_text(rule.dst)
    if src != "any":
        base += f" -s {src}"
    if dst != "any":
        base += f" -d {dst}"
    state = f" -m state --state {','.join(rule.state)}" if rule.state else ""

    def port_flag(flag: str, r: PortRange) -> str:
        return f" {flag} {r.lo}" if r.lo == r.hi else f" {flag} {r.lo}:{r.hi}"

    variants: list[str] = []
    if rule.protocol in (6, 17):
        sports = rule.sport or (PortRange(0, 65535),)
        dports = rule.dport or (PortRange(0, 65535),)
        for sp in sports:
            for dp in dports:
                piece = base
                if sp != PortRange(0, 65535):
                    piece += port_flag("--sport", sp)
                if dp != PortRange(0, 65535):
                    piece += port_flag("--dport", dp)
                variants.append(piece + state)
    elif rule.protocol == 1 and rule.dport:
        for lo, hi in rule.dport:
            for icmp_type in range(lo, hi + 1):
                variants.append(base + f" --icmp-type {icmp_type}" + state)
    else:
        variants.append(base + state)
    return variants


def render_device(policy: NetworkPolicy, firewall: str, vendor_id: str,
                  templates_dir: Path | None = None) -> str:
    """Render one firewall's configuration for a device target."""
    if vendor_id == "neutral":
        return render_neutral_file(policy, firewall)
    if vendor_id not in VENDORS:
        raise PolicyError(f"unknown vendor {vendor_id!r}")
    if firewall not in policy.acls:
        raise PolicyError(f"unknown firewall {firewall!r}")
    template = load_template(vendor_id, templates_dir)
    assignments = [a for a in policy.assignments if a.firewall == firewall]
    if vendor_id == "iptables_like":
        return _render_iptables(policy, firewall, template, assignments)
    return _render_asa(policy, firewall, template, assignments)


def _provenance(rule: AclRule) -> str:
    """``<rule_name>: <service comment>`` so nobody wonders why a rule exists."""
    if not rule.origin_rule:
        return ""
    what = rule.service_comment or rule.origin_service
    return f"{rule.origin_rule}: {what}"


def _render_iptables(policy: NetworkPolicy, firewall: str, template: DeviceTemplate,
                     assignments: list[InterfaceAssignment]) -> str:
    out = [template.format("header", firewall=firewall)]
    for a in assignments:
        out.append(template.format("chain_decl", acl=a.acl))
    for a in assignments:
        if a.interface == LOCAL_INTERFACE:
            section = "bind_input" if a.direction == "inbound" else "bind_output"
            out.append(template.format(section, acl=a.acl))
        else:
            out.append(template.format("bind_forward", interface=a.interface, acl=a.acl))
    for a in assignments:
        acl = policy.acl_by_name(firewall, a.acl)
        last_comment = None
        for rule in acl.rules:
            if rule.comment and rule.comment != last_comment:
                out.append(template.format("remark", text=rule.comment))
                last_comment = rule.comment
            provenance = _provenance(rule)
            if provenance:
                out.append(template.format("remark", text=provenance))
            target = "ACCEPT" if rule.action == "permit" else "DROP"
            log = rule.log or (rule.action == "deny" and policy.log_denies)
            for match in _iptables_matches(rule):
                if log:
                    out.append(template.format("log_rule", acl=a.acl, match=match,
                                               prefix=f"{a.acl}: "))
                out.append(template.format("rule", acl=a.acl, match=match, target=target))
    out.append(template.format("footer"))
    return "\n".join(out) + "\n"


def _asa_ports(rule: AclRule) -> list[str]:
    if rule.protocol in (6, 17):
        variants = []
        sports = rule.sport or (PortRange(0, 65535),)
        dports = rule.dport or (PortRange(0, 65535),)
        for sp in sports:
            for dp in dports:
                text = ""
                if sp != PortRange(0, 65535):
                    text += f" range {sp.lo} {sp.hi}" if sp.lo != sp.hi else f" eq {sp.lo}"
                # ASA puts the source operator before the destination address,
                # but this sketch keeps both after for readability
                if dp != PortRange(0, 65535):
                    text += f" range {dp.lo} {dp.hi}" if dp.lo != dp.hi else f" eq {dp.lo}"
                variants.append(text)
        return variants
    if rule.protocol == 1 and rule.dport:
        return [f" {lo}" if lo == hi else f" range {lo} {hi}" for lo, hi in rule.dport]
    return [""]


def _render_asa(policy: NetworkPolicy, firewall: str, template: DeviceTemplate,
                assignments: list[InterfaceAssignment]) -> str:
    out = [template.format("header", firewall=firewall)]
    for a in assignments:
        acl = policy.acl_by_name(firewall, a.acl)
        last_comment = None
        for rule in acl.rules:
            if rule.comment and rule.comment != last_comment:
                out.append(template.format("remark", acl=a.acl, text=rule.comment))
                last_comment = rule.comment
            provenance = _provenance(rule)
            if provenance:
                out.append(template.format("remark", acl=a.acl, text=provenance))
            src = "any" if _addr_text(rule.src) == "any" else _addr_text(rule.src)
            dst = "any" if _addr_text(rule.dst) == "any" else _addr_text(rule.dst)
            for ports in _asa_ports(rule):
                out.append(template.format(
                    "rule", acl=a.acl, action=rule.action,
                    proto=_proto_text(rule.protocol), src=src, dst=dst, ports=ports,
                    log=" log" if rule.log else ""))
    for a in assignments:
        direction = "in" if a.direction == "inbound" else "out"
        out.append(template.format("bind", acl=a.acl, direction=direction,
                                   interface=a.interface))
    out.append(template.format("footer"))
    return "\n".join(out) + "\n"


_IPT_BIND_FORWARD = re.compile(r"^-A FORWARD -i (\S+) -j (\S+)$")
_IPT_BIND_LOCAL = re.compile(r"^-A (INPUT|OUTPUT) -j (\S+)$")
_IPT_RULE = re.compile(r"^-A (\S+)(.*) -j (ACCEPT|DROP)$")


def parse_iptables_like(text: str) -> tuple[dict[str, list[AclRule]],
                                            list[tuple[str, str, str]]]:
    """Load the iptables-like rendering back into rules and bindings.

    Semantics-preserving, not structure-preserving: multi-range rules come
    back as one rule per range, which decides identically.  LOG lines and
    comments are skipped.  Bindings are (interface, direction, acl) with
    the local stages mapped from INPUT/OUTPUT.
    """
    acls: dict[str, list[AclRule]] = {}
    bindings: list[tuple[str, str, str]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(("#", ":", "*")) or line == "COMMIT":
            continue
        bind = _IPT_BIND_FORWARD.match(line)
        if bind:
            bindings.append((bind.group(1), "inbound", bind.group(2)))
            continue
        bind = _IPT_BIND_LOCAL.match(line)
        if bind:
            direction = "inbound" if bind.group(1) == "INPUT" else "outbound"
            bindings.append((LOCAL_INTERFACE, direction, bind.group(2)))
            continue
        rule_m = _IPT_RULE.match(line)
        if rule_m is None:
            if "-j LOG" in line:
                continue
            raise PolicyError(f"unrecognized iptables-like line: {line!r}")
        chain, match, target = rule_m.groups()
        acls.setdefault(chain, []).append(_iptables_rule(match, target))
    return acls, bindings


def _iptables_rule(match: str, target: str) -> AclRule:
    tokens = match.split()
    protocol: int | None = None
    src = (ipaddress.IPv4Network("0.0.0.0/0"),)
    dst = (ipaddress.IPv4Network("0.0.0.0/0"),)
    sport: tuple[PortRange, ...] = ()
    dport: tuple[PortRange, ...] = ()
    state: tuple[str, ...] = ()
    i = 0

    def port_of(text: str) -> PortRange:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return PortRange(int(lo), int(hi))
        return PortRange(int(text), int(text))

    while i < len(tokens):
        flag = tokens[i]
        if flag == "-p":
            name = tokens[i + 1]
            protocol = PROTOCOL_NUMBERS[name] if name in PROTOCOL_NUMBERS else int(name)
            i += 2
        elif flag == "-s":
            src = _parse_addr(tokens[i + 1])
            i += 2
        elif flag == "-d":
            dst = _parse_addr(tokens[i + 1])
            i += 2
        elif flag == "--sport":
            sport = (port_of(tokens[i + 1]),)
            i += 2
        elif flag == "--dport":
            dport = (port_of(tokens[i + 1]),)
            i += 2
        elif flag == "--icmp-type":
            dport = (PortRange(int(tokens[i + 1]), int(tokens[i + 1])),)
            i += 2
        elif flag == "-m" and i + 1 < len(tokens) and tokens[i + 1] == "state":
            i += 2
        elif flag == "--state":
            state = tuple(tokens[i + 1].split(","))
            i += 2
        else:
            raise PolicyError(f"unrecognized iptables-like match flag {flag!r}")
    return AclRule(
        action="permit" if target == "ACCEPT" else "deny",
        protocol=protocol, src=src, dst=dst, sport=sport, dport=dport, state=state)


# ---------------------------------------------------------------------------
# compile manifest and LoC metrics

def build_manifest(policy: NetworkPolicy) -> dict:
    """Machine-readable summary the simulator reconstructs the network from."""
    model = policy.model
    return {
        "zones": {
            name: {"kind": zone.kind, "members": sorted(zone.members),
                   "cidrs": [str(c) for c in zone.cidrs]}
            for name, zone in sorted(model.zones.items())
        },
        "conduits": [
            {"zones": list(pair), "firewalls": sorted(conduit.firewalls)}
            for pair, conduit in sorted(model.conduits.items())
        ],
        "firewall_interfaces": {
            fw: dict(sorted(ifaces.items()))
            for fw, ifaces in sorted(model.firewall_interfaces.items())
        },
        "assignments": [
            {"firewall": a.firewall, "interface": a.interface,
             "direction": a.direction, "acl": a.acl,
             "file": f"{a.firewall}.neutral.acl"}
            for a in policy.assignments
        ],
        "flows": [
            {
                "rule": flow.rule_name,
                "src_zone": flow.src_zone,
                "dst_zone": flow.dst_zone,
                "service": {
                    "name": flow.service.name,
                    "protocol": flow.service.protocol,
                    "source_ports": [[r.lo, r.hi] for r in flow.service.source_ports],
                    "dest_ports": [[r.lo, r.hi] for r in flow.service.dest_ports],
                    "icmp_types": [[r.lo, r.hi] for r in flow.service.icmp_types],
                },
            }
            for flow in policy.flows
        ],
        "options": {"ospf": policy.options.ospf, "log_denies": policy.log_denies},
    }


def manifest_json(policy: NetworkPolicy) -> str:
    return json.dumps(build_manifest(policy), indent=1, sort_keys=True) + "\n"


def _count_loc(text: str, comment_prefixes: tuple[str, ...]) -> int:
    count = 0
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not any(stripped.startswith(p) for p in comment_prefixes):
            count += 1
    return count


@dataclass(frozen=True)
class LocMetrics:
    high_level_loc: int
    device_loc: int

    @property
    def ratio(self) -> float:
        return self.device_loc / self.high_level_loc if self.high_level_loc else 0.0


def loc_metrics(spec: PolicySpec, policy: NetworkPolicy) -> LocMetrics:
    """Line counts: the policy source versus the rendered device configs."""
    high = max(1, _count_loc(spec.source, ("//",)))
    device = sum(
        _count_loc(render_device(policy, fw, "iptables_like"), ("#",))
        for fw in policy.firewalls()
    )
    return LocMetrics(high, device)
