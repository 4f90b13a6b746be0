"""Semantic validation of a parsed policy.

Validation returns diagnostics rather than raising: an empty list means
the policy is clean.  Generic services (all-TCP, all-UDP, all-IP) are
errors by design; nothing downstream accepts a policy that still carries
them.
"""

from __future__ import annotations

from forestfw.diagnostics import Diagnostic
from forestfw.policy_lang.syntax import (
    PORT_MAX,
    ICMP_TYPE_MAX,
    PolicySpec,
    Service,
)

_PORT_FIELDS = ("source_ports", "dest_ports")


def _is_generic(svc: Service) -> str | None:
    """Name of the prohibited generic form this service amounts to, if any."""
    if svc.protocol is None:
        return "all-IP"
    if svc.protocol in (6, 17):
        full = all(
            ranges == ((0, PORT_MAX),) or ranges == ()
            for ranges in (svc.source_ports, svc.dest_ports)
        )
        # the parser fills defaults, so "no constraint" shows up as full ranges
        if full:
            return "all-TCP" if svc.protocol == 6 else "all-UDP"
    return None


def validate_spec(spec: PolicySpec) -> list[Diagnostic]:
    """Check a parsed spec; diagnostics are the return value."""
    diags: list[Diagnostic] = []

    def add(severity: str, name: str, message: str) -> None:
        line, col = spec.position_of(name)
        diags.append(Diagnostic(severity, message, spec.file, line, col))

    for name, svc in spec.services.items():
        generic = _is_generic(svc)
        if generic is not None:
            add("error", name, f"generic service {generic} prohibited ({name!r})")
        for field in _PORT_FIELDS + ("icmp_types",):
            upper = ICMP_TYPE_MAX if field == "icmp_types" else PORT_MAX
            label = "ICMP type" if field == "icmp_types" else "port"
            for lo, hi in getattr(svc, field):
                if lo > hi:
                    add("error", name, f"empty {label} range {lo}-{hi} in service {name!r}")
                elif lo < 0 or hi > upper:
                    add("error", name,
                        f"{label} range {lo}-{hi} outside 0-{upper} in service {name!r}")
        if svc.protocol not in (6, 17) and (svc.source_ports or svc.dest_ports):
            add("error", name, f"port attributes on non-TCP/UDP service {name!r}")
        if svc.protocol != 1 and svc.icmp_types:
            add("error", name, f"icmp.type attribute on non-ICMP service {name!r}")
        if svc.protocol is not None and not (0 <= svc.protocol <= 255):
            add("error", name, f"protocol number {svc.protocol} outside 0-255")

    for name, group in spec.port_groups.items():
        for lo, hi in group.ranges:
            if lo > hi:
                add("error", name, f"empty port range {lo}-{hi} in port group {name!r}")
            elif lo < 0 or hi > PORT_MAX:
                add("error", name, f"port range {lo}-{hi} outside 0-{PORT_MAX} "
                                   f"in port group {name!r}")

    # duplicate zone-group values waste reader attention; flag them
    by_value: dict[frozenset[str], str] = {}
    for name, group in spec.zone_groups.items():
        prior = by_value.get(group.zones)
        if prior is not None:
            add("warning", name,
                f"zone group {name!r} duplicates the members of {prior!r}")
        else:
            by_value[group.zones] = name

    for name, rule in spec.rules.items():
        left = spec.zone_set(rule.left)
        right = spec.zone_set(rule.right)
        shared = left & right
        if shared:
            add("error", name,
                f"rule {name!r} endpoints overlap on zone(s) {', '.join(sorted(shared))}")
        if not rule.services:
            add("error", name, f"rule {name!r} resolves to an empty service set")
        if not left or not right:
            add("error", name, f"rule {name!r} references an empty zone group")

    return diags
