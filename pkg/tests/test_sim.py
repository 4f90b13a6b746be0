import ipaddress
import random

import pytest

from forestfw.diagnostics import PolicyError
from forestfw.header_space import HeaderPoint, eval_first_match, MatchRule, ACCEPT, DENY
from forestfw.netgen import AclRule, CompileOptions, compile_policy
from forestfw.policy_lang.syntax import PortRange
from forestfw.sim import (
    ESTABLISHED,
    NEW,
    Packet,
    ScanSpec,
    SimNetwork,
    acl_rule_predicate,
    default_scan_spec,
    from_network_policy,
    inject,
    representative_packet,
    rule_matches_packet,
    vet_negative,
    vet_positive,
)


def addr(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


SCADA_HOST = addr("10.0.0.17")
CORP_HOST = addr("10.0.0.1")


@pytest.fixture()
def net(compiled_plant) -> SimNetwork:
    return from_network_policy(compiled_plant)


def test_https_from_scada_to_corp_delivered(net):
    packet = Packet(SCADA_HOST, CORP_HOST, 6, 40000, 443, 0, NEW)
    result = inject(net, packet, "z3")
    assert result.delivered
    assert [hop.firewall for hop in result.trace] == ["R2", "R1"]
    assert all(hop.verdict == "permit" for hop in result.trace)


def test_unpermitted_port_dropped_at_first_firewall(net):
    packet = Packet(SCADA_HOST, CORP_HOST, 6, 40000, 8080, 0, NEW)
    result = inject(net, packet, "z3")
    assert not result.delivered
    assert result.trace[-1].firewall == "R2"
    assert result.trace[-1].verdict == "deny"


def test_removing_the_https_rule_blocks_delivery(compiled_plant):
    # fault injection: strip the scada->corp HTTPS permits out of every ACL
    net = from_network_policy(compiled_plant)
    filtered = {}
    for key, rules in net.acl_map.items():
        filtered[key] = tuple(
            r for r in rules
            if not (r.action == "permit" and r.protocol == 6
                    and r.dport == (PortRange(443, 443),)
                    and any(n.network_address == ipaddress.IPv4Address("10.0.0.16")
                            for n in r.src)))
    net.acl_map = filtered
    packet = Packet(SCADA_HOST, CORP_HOST, 6, 40000, 443, 0, NEW)
    result = inject(net, packet, "z3")
    assert not result.delivered


def test_established_without_prior_new_dropped(net):
    packet = Packet(CORP_HOST, SCADA_HOST, 6, 443, 40000, 0, ESTABLISHED)
    result = inject(net, packet, "z1")
    assert not result.delivered
    assert "no connection entry" in result.reason


def test_established_after_new_delivered(net):
    net.reset_connections()
    forward = Packet(SCADA_HOST, CORP_HOST, 6, 40000, 443, 0, NEW)
    assert inject(net, forward, "z3").delivered
    reverse = Packet(CORP_HOST, SCADA_HOST, 6, 443, 40000, 0, ESTABLISHED)
    assert inject(net, reverse, "z1").delivered


def test_destination_outside_every_zone_rejected(net):
    with pytest.raises(PolicyError, match="belongs to no zone"):
        inject(net, Packet(SCADA_HOST, addr("192.0.2.1"), 6, 1, 2), "z3")


def test_unknown_ingress_zone_rejected(net):
    with pytest.raises(PolicyError, match="unknown ingress zone"):
        inject(net, Packet(SCADA_HOST, CORP_HOST, 6, 1, 2), "nowhere")


def test_vet_positive_fixture_all_pass(net):
    results = vet_positive(net)
    assert len(results) == len(net.flows)
    assert all(r.outcome == 1 for r in results)


def test_vet_positive_reports_fault_injection(compiled_plant):
    net = from_network_policy(compiled_plant)
    # delete every oracle_sqlnet permit (dport 1521) from every ACL
    net.acl_map = {
        key: tuple(r for r in rules if r.dport != (PortRange(1521, 1521),))
        for key, rules in net.acl_map.items()
    }
    results = vet_positive(net)
    failed = {r.rule_name for r in results if r.outcome == 0}
    assert failed == {"corp_scada_oracle"}


def test_vet_negative_fixture_clean(net):
    scan = ScanSpec(ports=(PortRange(0, 1023), PortRange(8080, 8080),
                           PortRange(24500, 24600)))
    assert vet_negative(net, scan) == []


def test_vet_negative_catches_generic_permit(compiled_plant):
    net = from_network_policy(compiled_plant)
    generic = AclRule(
        action="permit", protocol=6,
        src=(ipaddress.IPv4Network("0.0.0.0/0"),),
        dst=(ipaddress.IPv4Network("0.0.0.0/0"),))
    net.acl_map = {key: (generic,) + rules for key, rules in net.acl_map.items()}
    leaks = vet_negative(net, ScanSpec(protocols=(6,), ports=(PortRange(0, 64),)))
    assert len(leaks) > 100


def test_scan_restricted_to_enabled_ports_is_clean(net):
    scan = ScanSpec(protocols=(6,), ports=(PortRange(443, 443),))
    assert vet_negative(net, scan) == []


def test_default_scan_spec_includes_referenced_ports(net):
    spec = default_scan_spec(net)
    values = set(spec.port_values())
    assert 0 in values and 1023 in values
    assert 1521 in values           # oracle_sqlnet
    assert 24500 in values and 24600 in values  # ftp_data
    assert 65535 not in values      # full ranges are not "referenced ports"


def test_representative_packet_is_lowest_corner(net):
    flow = next(f for f in net.flows if f.service.display_name == "ftp_data")
    packet = representative_packet(net, flow)
    assert packet.dport == 24500
    assert packet.sport == 0
    assert packet.state == NEW


def test_stateful_discipline_no_established_before_new(net):
    net.reset_connections()
    reverse = Packet(CORP_HOST, SCADA_HOST, 6, 443, 40001, 0, ESTABLISHED)
    assert not inject(net, reverse, "z1").delivered
    forward = Packet(SCADA_HOST, CORP_HOST, 6, 40001, 443, 0, NEW)
    assert inject(net, forward, "z3").delivered
    assert inject(net, reverse, "z1").delivered


def test_single_firewall_agrees_with_first_match_semantics():
    """inject() over a one-firewall chain equals eval_first_match on its ACL."""
    from forestfw.topo_model import load_topology
    from test_topo_model import CHAIN

    topo = load_topology(CHAIN)
    source = """
import system.services.iana_services;
zone_group left { z1 }
zone_group right { z3 }
policy_rule a { left -> right : iana_services.https }
policy_rule b { left -> right : iana_services.dns_udp }
reporting_rule rep { use_case=verification; }
rule_group g { a, b }
policy p { g; rep; }
"""
    from forestfw.policy_lang import parse_policy
    policy = compile_policy(parse_policy(source), topo)
    net = from_network_policy(policy)

    acl = net.acl_map[("fw", "p0", "inbound")]  # z1-facing interface
    match_rules = [
        MatchRule(ACCEPT if r.action == "permit" else DENY, acl_rule_predicate(r))
        for r in acl
    ]
    src, dst = addr("10.1.0.1"), addr("10.3.0.1")
    rng = random.Random(17)
    for _ in range(400):
        protocol = rng.choice((6, 17))
        sport, dport = rng.randrange(0, 1024), rng.randrange(0, 1024)
        packet = Packet(src, dst, protocol, sport, dport, 0, NEW)
        point = HeaderPoint(src, dst, protocol, sport, dport, 0)
        delivered = inject(net, packet, "z1").delivered
        assert delivered == (eval_first_match(match_rules, point) == ACCEPT)


def test_accept_relation_equals_flow_relation_over_scan_space(net):
    """Delivered iff implied, for every zone pair and scanned header."""
    from forestfw.sim import SCAN_SPORT, _pair_plan, _plan_delivers, _service_accepts

    ports = [0, 21, 22, 25, 53, 80, 443, 514, 1023, 1521, 8080, 24500, 24600]
    zones = sorted(net.model.zones)
    for src in zones:
        for dst in zones:
            if src == dst:
                continue
            plan = _pair_plan(net, src, dst)
            if not plan.paths:
                # unroutable pairs must also have no flows expecting delivery
                assert plan.services == []
                continue
            for protocol in (1, 6, 17):
                for value in ports:
                    if protocol == 1 and value > 255:
                        continue
                    packet = Packet(plan.src_addr, plan.dst_addr, protocol,
                                    SCAN_SPORT, 0 if protocol == 1 else value,
                                    value if protocol == 1 else 0, NEW)
                    delivered = _plan_delivers(plan, packet)
                    implied = any(_service_accepts(s, packet) for s in plan.services)
                    assert delivered == implied, (src, dst, protocol, value)


def test_rule_matches_packet_wildcards():
    anynet = (ipaddress.IPv4Network("0.0.0.0/0"),)
    deny_all = AclRule(action="deny", protocol=None, src=anynet, dst=anynet)
    for protocol in (1, 6, 17, 89):
        assert rule_matches_packet(deny_all, Packet(1, 2, protocol, 3, 4, 5, NEW))
    stateful = AclRule(action="permit", protocol=6, src=anynet, dst=anynet,
                       state=("ESTABLISHED",))
    assert not rule_matches_packet(stateful, Packet(1, 2, 6, 3, 4, 0, NEW))
    assert rule_matches_packet(stateful, Packet(1, 2, 6, 3, 4, 0, ESTABLISHED))
