"""Topology ingestion and Zone-Conduit model construction.

Topologies arrive as GraphML: nodes carry ``kind`` (host, subnet,
firewall, carrier), an optional ``zone`` label, and a comma-separated
``cidr`` list; edges carry optional ``if_a``/``if_b`` interface names.
The Zone-Firewall model groups devices into disjoint zones (labels become
regular zones, each firewall gets a dedicated Firewall-Zone, unlabeled
subnets between serial firewalls become Abstract-Zones, ``carrier`` nodes
become Carrier-Zones) and records which firewall interface faces each
zone.  Conduits then join zones separated by a single firewall, giving
the graph the compiler and simulator walk.
"""

from __future__ import annotations

import ipaddress
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable

from forestfw.diagnostics import PolicyError

DEVICE_KINDS = ("host", "subnet", "firewall", "carrier")
ZONE_KINDS = ("regular", "firewall", "abstract", "carrier")

LOCAL_INTERFACE = "local"  # the firewall's own input/output filtering stage


@dataclass(frozen=True)
class Device:
    name: str
    kind: str
    zone_label: str | None = None
    cidrs: tuple[ipaddress.IPv4Network, ...] = ()


@dataclass(frozen=True)
class Link:
    dev_a: str
    if_a: str
    dev_b: str
    if_b: str


@dataclass
class Topology:
    devices: dict[str, Device] = field(default_factory=dict)
    links: list[Link] = field(default_factory=list)

    def neighbors(self, name: str) -> list[tuple[str, str]]:
        """(peer device, local interface) pairs for a device."""
        out = []
        for link in self.links:
            if link.dev_a == name:
                out.append((link.dev_b, link.if_a))
            elif link.dev_b == name:
                out.append((link.dev_a, link.if_b))
        return out


@dataclass(frozen=True)
class Zone:
    name: str
    kind: str
    members: frozenset[str]
    cidrs: tuple[ipaddress.IPv4Network, ...] = ()


@dataclass(frozen=True)
class Conduit:
    zones: tuple[str, str]  # sorted endpoint pair
    firewalls: frozenset[str]


@dataclass
class ZoneConduitModel:
    zones: dict[str, Zone] = field(default_factory=dict)
    conduits: dict[tuple[str, str], Conduit] = field(default_factory=dict)
    # firewall -> zone -> interface facing that zone; absent for declared models
    firewall_interfaces: dict[str, dict[str, str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def conduit_between(self, a: str, b: str) -> Conduit | None:
        return self.conduits.get(tuple(sorted((a, b))))

    def neighbors(self, zone: str) -> list[str]:
        out = []
        for (a, b) in self.conduits:
            if a == zone:
                out.append(b)
            elif b == zone:
                out.append(a)
        return sorted(out)

    def firewall_zone_of(self, firewall: str) -> str | None:
        for zone in self.zones.values():
            if zone.kind == "firewall" and firewall in zone.members:
                return zone.name
        return None

    def zone_of_address(self, addr: int | str) -> str | None:
        ip = ipaddress.IPv4Address(addr)
        for zone in sorted(self.zones.values(), key=lambda z: z.name):
            if any(ip in cidr for cidr in zone.cidrs):
                return zone.name
        return None


# Zone-Firewall model: the precursor carrying zones + firewall adjacencies.
@dataclass
class ZoneFirewallModel:
    zones: dict[str, Zone] = field(default_factory=dict)
    # firewall -> zone -> interface name facing that zone
    adjacency: dict[str, dict[str, str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# GraphML ingestion

def _graphml_attrs(root: ET.Element) -> dict[str, str]:
    """Map GraphML key ids to attribute names."""
    ns = _ns(root)
    mapping = {}
    for key in root.findall(f"{ns}key"):
        key_id = key.get("id")
        attr = key.get("attr.name") or key_id
        if key_id:
            mapping[key_id] = attr
    return mapping


def _ns(root: ET.Element) -> str:
    if root.tag.startswith("{"):
        return root.tag[: root.tag.index("}") + 1]
    return ""


def _data_of(elem: ET.Element, keymap: dict[str, str], ns: str) -> dict[str, str]:
    out = {}
    for data in elem.findall(f"{ns}data"):
        key = data.get("key") or ""
        out[keymap.get(key, key)] = (data.text or "").strip()
    return out


def load_topology(document: str) -> Topology:
    """Parse a GraphML topology document."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise PolicyError(f"malformed GraphML: {exc}", "<topology>") from exc
    ns = _ns(root)
    keymap = _graphml_attrs(root)
    graph = root.find(f"{ns}graph")
    if graph is None:
        raise PolicyError("GraphML document has no <graph>", "<topology>")

    topo = Topology()
    for node in graph.findall(f"{ns}node"):
        name = node.get("id") or ""
        data = _data_of(node, keymap, ns)
        kind = data.get("kind", "")
        if kind not in DEVICE_KINDS:
            raise PolicyError(f"device {name!r} has unknown kind {kind!r}", "<topology>")
        zone_label = data.get("zone") or None
        if kind == "firewall" and zone_label:
            raise PolicyError(
                f"firewall {name!r} carries a zone label; firewalls get "
                f"Firewall-Zones automatically", "<topology>")
        cidrs = tuple(
            ipaddress.IPv4Network(c.strip())
            for c in data.get("cidr", "").split(",") if c.strip()
        )
        if kind in ("subnet", "host", "carrier") and not cidrs:
            raise PolicyError(f"{kind} {name!r} carries no CIDR", "<topology>")
        if name in topo.devices:
            raise PolicyError(f"duplicate device {name!r}", "<topology>")
        topo.devices[name] = Device(name, kind, zone_label, cidrs)

    auto_port: dict[str, int] = {}
    used: dict[str, set[str]] = {}

    def interface(dev: str, explicit: str | None) -> str:
        if explicit:
            name = explicit
        else:
            auto_port[dev] = auto_port.get(dev, 0)
            name = f"p{auto_port[dev]}"
            auto_port[dev] += 1
        if name in used.setdefault(dev, set()):
            raise PolicyError(f"duplicate interface {name!r} on device {dev!r}", "<topology>")
        used[dev].add(name)
        return name

    for edge in graph.findall(f"{ns}edge"):
        a, b = edge.get("source") or "", edge.get("target") or ""
        for dev in (a, b):
            if dev not in topo.devices:
                raise PolicyError(f"link references unknown device {dev!r}", "<topology>")
        data = _data_of(edge, keymap, ns)
        topo.links.append(Link(a, interface(a, data.get("if_a")),
                               b, interface(b, data.get("if_b"))))
    return topo


def load_declared_model(document: str) -> ZoneConduitModel:
    """Parse a declared Zone-Conduit model: nodes are zones, edges conduits."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise PolicyError(f"malformed GraphML: {exc}", "<declared-model>") from exc
    ns = _ns(root)
    keymap = _graphml_attrs(root)
    graph = root.find(f"{ns}graph")
    if graph is None:
        raise PolicyError("GraphML document has no <graph>", "<declared-model>")

    model = ZoneConduitModel()
    for node in graph.findall(f"{ns}node"):
        name = node.get("id") or ""
        data = _data_of(node, keymap, ns)
        kind = data.get("kind", "regular")
        if kind not in ZONE_KINDS:
            raise PolicyError(f"zone {name!r} has unknown kind {kind!r}", "<declared-model>")
        model.zones[name] = Zone(name, kind, frozenset())
    for edge in graph.findall(f"{ns}edge"):
        a, b = edge.get("source") or "", edge.get("target") or ""
        for zone in (a, b):
            if zone not in model.zones:
                raise PolicyError(f"conduit references unknown zone {zone!r}",
                                  "<declared-model>")
        pair = tuple(sorted((a, b)))
        model.conduits[pair] = Conduit(pair, frozenset())
    return model


# ---------------------------------------------------------------------------
# model construction

def build_zone_firewall_model(topo: Topology) -> ZoneFirewallModel:
    """Group devices into disjoint zones and record firewall adjacencies."""
    model = ZoneFirewallModel()
    firewalls = [d for d in topo.devices.values() if d.kind == "firewall"]

    # regular zones from labels (hosts may inherit their subnet's label)
    zone_members: dict[str, list[Device]] = {}
    labelled: dict[str, str] = {}
    for dev in topo.devices.values():
        if dev.kind in ("subnet", "host", "carrier") and dev.zone_label:
            zone_members.setdefault(dev.zone_label, []).append(dev)
            labelled[dev.name] = dev.zone_label
    for dev in topo.devices.values():
        if dev.kind == "host" and not dev.zone_label:
            subnet_labels = {
                labelled[peer]
                for peer, _ in topo.neighbors(dev.name)
                if peer in labelled and topo.devices[peer].kind == "subnet"
            }
            if len(subnet_labels) != 1:
                raise PolicyError(
                    f"host {dev.name!r} has neither a zone label nor exactly one "
                    f"labelled subnet", "<topology>")
            label = subnet_labels.pop()
            zone_members[label].append(dev)
            labelled[dev.name] = label

    for label in sorted(zone_members):
        members = zone_members[label]
        kind = "carrier" if any(d.kind == "carrier" for d in members) else "regular"
        cidrs = tuple(sorted((c for d in members for c in d.cidrs),
                             key=lambda n: (int(n.network_address), n.prefixlen)))
        model.zones[label] = Zone(label, kind, frozenset(d.name for d in members), cidrs)

    # unlabeled carrier nodes become their own Carrier-Zones
    carrier_n = 0
    for dev in topo.devices.values():
        if dev.kind == "carrier" and not dev.zone_label:
            carrier_n += 1
            name = f"cz{carrier_n}"
            _check_fresh(model, name, dev.name)
            model.zones[name] = Zone(name, "carrier", frozenset({dev.name}), dev.cidrs)
            labelled[dev.name] = name

    # one Firewall-Zone per firewall, numbered in document order
    for i, fw in enumerate(firewalls, start=1):
        name = f"fwz{i}"
        _check_fresh(model, name, fw.name)
        model.zones[name] = Zone(name, "firewall", frozenset({fw.name}), fw.cidrs)
        labelled[fw.name] = name

    # unlabeled subnets between serial firewalls become Abstract-Zones
    abstract_n = 0
    for dev in topo.devices.values():
        if dev.kind != "subnet" or dev.zone_label:
            continue
        adjacent_fws = {peer for peer, _ in topo.neighbors(dev.name)
                        if topo.devices[peer].kind == "firewall"}
        if len(adjacent_fws) < 2:
            raise PolicyError(
                f"subnet {dev.name!r} has no zone label and does not lie between "
                f"two firewalls; cannot classify", "<topology>")
        abstract_n += 1
        name = f"az{abstract_n}"
        _check_fresh(model, name, dev.name)
        model.zones[name] = Zone(name, "abstract", frozenset({dev.name}), dev.cidrs)
        labelled[dev.name] = name

    _check_zone_disjointness(model.zones.values())

    # firewall adjacencies: which interface faces which zone
    for fw in firewalls:
        peers = topo.neighbors(fw.name)
        if not peers:
            model.warnings.append(f"firewall {fw.name!r} has no links; it realizes no conduits")
        adjacency: dict[str, str] = {}
        for peer, iface in sorted(peers, key=lambda p: (p[1], p[0])):
            zone = labelled.get(peer)
            if zone is None:
                raise PolicyError(f"device {peer!r} linked to firewall {fw.name!r} "
                                  f"belongs to no zone", "<topology>")
            adjacency.setdefault(zone, iface)
        model.adjacency[fw.name] = adjacency
    return model


def _check_fresh(model: ZoneFirewallModel, name: str, device: str) -> None:
    if name in model.zones:
        raise PolicyError(
            f"zone label {name!r} collides with the generated zone for {device!r}",
            "<topology>")


def _check_zone_disjointness(zones: Iterable[Zone]) -> None:
    seen: list[Zone] = []
    for zone in zones:
        for other in seen:
            if zone.members & other.members:
                raise PolicyError(f"device in both zones {zone.name!r} and {other.name!r}",
                                  "<topology>")
            for a in zone.cidrs:
                for b in other.cidrs:
                    if a.overlaps(b):
                        raise PolicyError(
                            f"zone CIDRs overlap: {a} ({zone.name}) and {b} ({other.name})",
                            "<topology>")
        seen.append(zone)


def derive_zone_conduit(zf: ZoneFirewallModel) -> ZoneConduitModel:
    """Define conduits on the Zone-Firewall model.

    Two zones adjacent through a single firewall share a conduit realized
    by every such firewall; each Firewall-Zone gets a conduit to each zone
    its firewall touches.
    """
    model = ZoneConduitModel(zones=dict(zf.zones), warnings=list(zf.warnings))
    model.firewall_interfaces = {fw: dict(adj) for fw, adj in zf.adjacency.items()}

    realizers: dict[tuple[str, str], set[str]] = {}
    fwz_by_firewall = {next(iter(z.members)): z.name
                       for z in zf.zones.values() if z.kind == "firewall"}
    for fw, adjacency in zf.adjacency.items():
        fwz = fwz_by_firewall[fw]
        adjacent = sorted(adjacency)
        for i, a in enumerate(adjacent):
            realizers.setdefault(tuple(sorted((fwz, a))), set()).add(fw)
            for b in adjacent[i + 1:]:
                realizers.setdefault(tuple(sorted((a, b))), set()).add(fw)

    for pair in sorted(realizers):
        model.conduits[pair] = Conduit(pair, frozenset(realizers[pair]))
    return model


# ---------------------------------------------------------------------------
# cross-check and export

@dataclass(frozen=True)
class ModelMismatch:
    missing_zones: tuple[str, ...]
    extra_zones: tuple[str, ...]
    missing_conduits: tuple[tuple[str, str], ...]
    extra_conduits: tuple[tuple[str, str], ...]

    def __str__(self) -> str:
        parts = []
        if self.missing_zones:
            parts.append("zones missing from the declared model: "
                         + ", ".join(self.missing_zones))
        if self.extra_zones:
            parts.append("declared zones not derived from the topology: "
                         + ", ".join(self.extra_zones))
        if self.missing_conduits:
            parts.append("conduits missing from the declared model: "
                         + ", ".join(f"{a}-{b}" for a, b in self.missing_conduits))
        if self.extra_conduits:
            parts.append("declared conduits not derived from the topology: "
                         + ", ".join(f"{a}-{b}" for a, b in self.extra_conduits))
        return "; ".join(parts)


def crosscheck_model(derived: ZoneConduitModel,
                     declared: ZoneConduitModel) -> ModelMismatch | None:
    """None when zone and conduit sets agree; otherwise the differences."""
    derived_zones = set(derived.zones)
    declared_zones = set(declared.zones)
    derived_conduits = set(derived.conduits)
    declared_conduits = set(declared.conduits)
    if derived_zones == declared_zones and derived_conduits == declared_conduits:
        return None
    return ModelMismatch(
        missing_zones=tuple(sorted(derived_zones - declared_zones)),
        extra_zones=tuple(sorted(declared_zones - derived_zones)),
        missing_conduits=tuple(sorted(derived_conduits - declared_conduits)),
        extra_conduits=tuple(sorted(declared_conduits - derived_conduits)),
    )


_DOT_SHAPES = {"regular": "ellipse", "firewall": "box", "abstract": "diamond",
               "carrier": "hexagon"}


def export_graph(model: ZoneConduitModel, flavor: str) -> str:
    """Deterministic DOT rendering of the model.

    ``zone_conduit`` shows zones and conduits; ``zone_firewall`` shows
    non-firewall zones connected to the firewall boxes that touch them.
    """
    if flavor not in ("zone_firewall", "zone_conduit"):
        raise ValueError(f"unknown graph flavor {flavor!r}")
    lines = [f"graph {flavor} {{"]
    if flavor == "zone_conduit":
        for name in sorted(model.zones):
            zone = model.zones[name]
            lines.append(f'  "{name}" [kind="{zone.kind}" shape="{_DOT_SHAPES[zone.kind]}"];')
        for (a, b) in sorted(model.conduits):
            fws = ",".join(sorted(model.conduits[(a, b)].firewalls))
            label = f' [label="{fws}"]' if fws else ""
            lines.append(f'  "{a}" -- "{b}"{label};')
    else:
        fw_zones = {name: zone for name, zone in model.zones.items() if zone.kind == "firewall"}
        for name in sorted(model.zones):
            zone = model.zones[name]
            if zone.kind == "firewall":
                fw = next(iter(zone.members))
                lines.append(f'  "{fw}" [kind="firewall" shape="box"];')
            else:
                lines.append(f'  "{name}" [kind="{zone.kind}" shape="{_DOT_SHAPES[zone.kind]}"];')
        edges = set()
        for name, zone in sorted(fw_zones.items()):
            fw = next(iter(zone.members))
            for peer in model.neighbors(name):
                if model.zones[peer].kind != "firewall":
                    edges.add((fw, peer))
        for fw, peer in sorted(edges):
            lines.append(f'  "{fw}" -- "{peer}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
