"""Recursive-descent parser, import resolver, and pretty-printer.

Parsing happens in two phases: the syntactic pass collects raw
declarations (imports already merged under their namespace prefix), and a
resolution pass builds the fully name-resolved :class:`PolicySpec`, with
set expressions evaluated, port-group references substituted, and every
name checked against the declaration registry.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from forestfw.diagnostics import PolicyError
from forestfw.policy_lang.lexer import Token, tokenize
from forestfw.policy_lang.syntax import (
    PROTOCOL_NUMBERS,
    FULL_PORT_RANGE,
    GlobalPolicy,
    HighLevelRule,
    PolicySpec,
    PortGroup,
    PortRange,
    ReportingRule,
    Service,
    ServiceGroup,
    ServiceSet,
    SetExpr,
    Value,
    VBlock,
    VInt,
    VList,
    VName,
    VRange,
    VString,
    ZoneGroup,
)

Importer = Callable[[str], str]

_LIBRARY_ROOT = Path(__file__).parent / "library"

_SET_OPS = (",", "^", "\\")


def default_importer(search_paths: tuple[Path, ...] = ()) -> Importer:
    """Resolve dotted library names to source text.

    ``system.services.iana_services`` maps to
    ``system/services/iana_services.policyml`` under each search path,
    falling back to the built-in library shipped with the package.
    """

    def resolve(dotted: str) -> str:
        rel = Path(*dotted.split(".")).with_suffix(".policyml")
        for root in tuple(search_paths) + (_LIBRARY_ROOT,):
            candidate = Path(root) / rel
            if candidate.is_file():
                return candidate.read_text(encoding="utf-8")
        raise PolicyError(f"unresolved import {dotted!r}")

    return resolve


# ---------------------------------------------------------------------------
# raw declarations from the syntactic pass

@dataclass
class _RawDecl:
    kind: str  # service | service_group | port_group | zone_group | policy_rule | rule_group | reporting_rule | policy
    name: str
    line: int
    col: int
    file: str
    attrs: tuple[tuple[str, Value], ...] = ()
    expr: SetExpr | None = None
    ranges: tuple[PortRange, ...] = ()
    left: str = ""
    operator: str = ""
    right: str = ""
    members: tuple[str, ...] = ()


class _TokenStream:
    def __init__(self, tokens: list[Token], file: str):
        self.tokens = tokens
        self.file = file
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, value: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    def accept(self, kind: str, value: str | None = None) -> Token | None:
        if self.at(kind, value):
            return self.next()
        return None

    def expect(self, kind: str, value: str | None = None, hint: str = "") -> Token:
        tok = self.peek()
        if tok.kind == kind and (value is None or tok.value == value):
            return self.next()
        expected = hint or (value if value is not None else kind)
        got = tok.value or tok.kind
        raise PolicyError(f"expected {expected!r}, got {got!r}", self.file, tok.line, tok.col)

    def error(self, message: str) -> PolicyError:
        tok = self.peek()
        return PolicyError(message, self.file, tok.line, tok.col)


@dataclass
class _RawFile:
    imports: list[str]
    declared_model: str | None
    decls: list[_RawDecl]


def _parse_file(text: str, file: str) -> _RawFile:
    ts = _TokenStream(tokenize(text, file), file)
    imports: list[str] = []
    declared_model: str | None = None
    decls: list[_RawDecl] = []

    while not ts.at("eof"):
        tok = ts.peek()
        if tok.kind != "kw":
            raise ts.error(f"expected a declaration keyword, got {tok.value!r}")
        if tok.value == "import":
            ts.next()
            imports.append(_parse_dotted(ts))
            ts.expect("punct", ";")
        elif tok.value == "load_zone_conduit_model":
            ts.next()
            path = ts.expect("string", hint="model path string")
            if declared_model is not None:
                raise PolicyError("duplicate load_zone_conduit_model", file, path.line, path.col)
            declared_model = path.value
            ts.accept("punct", ";")
        else:
            decls.append(_parse_decl(ts))
    return _RawFile(imports, declared_model, decls)


def _expect_name(ts: _TokenStream) -> str:
    """A name segment; keywords are legal identifiers inside bodies."""
    tok = ts.peek()
    if tok.kind in ("ident", "kw"):
        ts.next()
        return tok.value
    raise ts.error(f"expected a name, got {tok.value or tok.kind!r}")


def _parse_dotted(ts: _TokenStream) -> str:
    parts = [_expect_name(ts)]
    while ts.accept("punct", "."):
        parts.append(_expect_name(ts))
    return ".".join(parts)


def _parse_decl(ts: _TokenStream) -> _RawDecl:
    kw = ts.next()
    name = ts.expect("ident", hint="declaration name")
    decl = _RawDecl(kind=kw.value, name=name.value, line=name.line, col=name.col, file=ts.file)
    ts.expect("punct", "{")
    if kw.value in ("service", "reporting_rule"):
        decl.attrs = _parse_attrs(ts)
    elif kw.value in ("service_group", "zone_group"):
        decl.expr = _parse_setexpr(ts)
    elif kw.value == "port_group":
        decl.ranges = _parse_ranges(ts)
    elif kw.value == "policy_rule":
        decl.left = _parse_dotted(ts)
        op = ts.peek()
        if op.kind == "punct" and op.value in ("->", "<->"):
            ts.next()
            decl.operator = op.value
        else:
            raise ts.error("expected '->' or '<->'")
        decl.right = _parse_dotted(ts)
        ts.expect("punct", ":")
        decl.expr = _parse_setexpr(ts)
    elif kw.value == "rule_group":
        members = [_parse_dotted(ts)]
        while ts.accept("punct", ","):
            members.append(_parse_dotted(ts))
        decl.members = tuple(members)
    elif kw.value == "policy":
        rule_group = ts.expect("ident", hint="rule-group name").value
        ts.expect("punct", ";")
        reporting = ts.expect("ident", hint="reporting-rule name").value
        ts.accept("punct", ";")  # trailing separator is optional in the wild
        decl.members = (rule_group, reporting)
    else:  # pragma: no cover - keyword set is closed
        raise ts.error(f"unsupported declaration {kw.value!r}")
    ts.expect("punct", "}")
    return decl


def _parse_attrs(ts: _TokenStream) -> tuple[tuple[str, Value], ...]:
    attrs: list[tuple[str, Value]] = []
    while not ts.at("punct", "}"):
        key = _parse_dotted(ts)
        ts.expect("punct", "=")
        attrs.append((key, _parse_value(ts)))
        ts.expect("punct", ";")
    return tuple(attrs)


def _parse_value(ts: _TokenStream) -> Value:
    first = _parse_value_atom(ts)
    if not ts.at("punct", ","):
        return first
    items = [first]
    while ts.accept("punct", ","):
        items.append(_parse_value_atom(ts))
    return VList(tuple(items))


def _parse_value_atom(ts: _TokenStream) -> Value:
    tok = ts.peek()
    if tok.kind == "int":
        ts.next()
        if ts.accept("punct", "-"):
            hi = ts.expect("int", hint="range upper bound")
            return VRange(int(tok.value), int(hi.value))
        return VInt(int(tok.value))
    if tok.kind in ("ident", "kw"):
        ts.next()
        return VName(tok.value)
    if tok.kind == "string":
        ts.next()
        return VString(tok.value)
    if tok.kind == "punct" and tok.value == "{":
        ts.next()
        items: list[tuple[str | None, Value]] = []
        while not ts.at("punct", "}"):
            if ts.peek().kind in ("ident", "kw") and _peek_is_assignment(ts):
                key = _parse_dotted(ts)
                ts.expect("punct", "=")
                items.append((key, _parse_value(ts)))
            else:
                items.append((None, _parse_value_atom(ts)))
            if not (ts.accept("punct", ";") or ts.accept("punct", ",")):
                break
        ts.expect("punct", "}")
        return VBlock(tuple(items))
    raise ts.error(f"expected a value, got {tok.value or tok.kind!r}")


def _peek_is_assignment(ts: _TokenStream) -> bool:
    # lookahead across a dotted key for '='
    i = ts.pos
    toks = ts.tokens
    while i < len(toks) and toks[i].kind in ("ident", "kw"):
        i += 1
        if i < len(toks) and toks[i].kind == "punct" and toks[i].value == ".":
            i += 1
            continue
        break
    return i < len(toks) and toks[i].kind == "punct" and toks[i].value == "="


def _parse_setexpr(ts: _TokenStream) -> SetExpr:
    first = _parse_dotted(ts)
    rest: list[tuple[str, str]] = []
    while ts.peek().kind == "punct" and ts.peek().value in _SET_OPS:
        op = ts.next().value
        rest.append((op, _parse_dotted(ts)))
    return SetExpr(first, tuple(rest))


def _parse_ranges(ts: _TokenStream) -> tuple[PortRange, ...]:
    ranges: list[PortRange] = []
    while True:
        lo = ts.expect("int", hint="port number")
        if ts.accept("punct", "-"):
            hi = ts.expect("int", hint="range upper bound")
            ranges.append(PortRange(int(lo.value), int(hi.value)))
        else:
            ranges.append(PortRange(int(lo.value), int(lo.value)))
        if not ts.accept("punct", ","):
            break
    return tuple(ranges)


# ---------------------------------------------------------------------------
# import merging

def _prefix_decls(decls: list[_RawDecl], prefix: str) -> list[_RawDecl]:
    """Qualify declarations from an imported file with ``prefix.``.

    References within the imported file to its own names are rewritten to
    the qualified form so they keep resolving after the merge.
    """
    own = {d.name for d in decls}

    def q(name: str) -> str:
        return f"{prefix}.{name}" if name in own else name

    def q_expr(expr: SetExpr | None) -> SetExpr | None:
        if expr is None:
            return None
        return SetExpr(q(expr.first), tuple((op, q(n)) for op, n in expr.rest))

    def q_value(value: Value) -> Value:
        if isinstance(value, VName):
            return VName(q(value.name))
        if isinstance(value, VList):
            return VList(tuple(q_value(v) for v in value.items))
        if isinstance(value, VBlock):
            return VBlock(tuple((k, q_value(v)) for k, v in value.items))
        return value

    out = []
    for d in decls:
        out.append(
            _RawDecl(
                kind=d.kind,
                name=f"{prefix}.{d.name}",
                line=d.line,
                col=d.col,
                file=d.file,
                attrs=tuple((k, q_value(v)) for k, v in d.attrs),
                expr=q_expr(d.expr),
                ranges=d.ranges,
                left=q(d.left),
                operator=d.operator,
                right=q(d.right),
                members=tuple(q(m) for m in d.members),
            )
        )
    return out


def _collect(text: str, file: str, importer: Importer, seen: dict[str, bool]) -> _RawFile:
    raw = _parse_file(text, file)
    merged: list[_RawDecl] = []
    for dotted in raw.imports:
        if dotted in seen:
            if not seen[dotted]:
                raise PolicyError(f"import cycle through {dotted!r}", file)
            continue
        seen[dotted] = False
        imported = _collect(importer(dotted), dotted, importer, seen)
        seen[dotted] = True
        prefix = dotted.rsplit(".", 1)[-1]
        merged.extend(_prefix_decls(imported.decls, prefix))
    merged.extend(raw.decls)
    return _RawFile(raw.imports, raw.declared_model, merged)


# ---------------------------------------------------------------------------
# resolution

_PORT_ATTRS = {
    "tcp.source_port": ("source_ports", 6),
    "tcp.dest_port": ("dest_ports", 6),
    "udp.source_port": ("source_ports", 17),
    "udp.dest_port": ("dest_ports", 17),
    "icmp.type": ("icmp_types", 1),
}


class _Resolver:
    def __init__(self, raw: _RawFile, file: str, source: str, main_decls: list[_RawDecl]):
        self.raw = raw
        self.spec = PolicySpec(
            imports=tuple(raw.imports),
            declared_model=raw.declared_model,
            file=file,
            source=source,
        )
        self.registry: dict[str, _RawDecl] = {}
        self.main_names = {d.name for d in main_decls}
        self._svc_sets: dict[str, ServiceSet] = {}
        self._zone_sets: dict[str, frozenset[str]] = {}
        self._resolving: list[str] = []

    def err(self, decl: _RawDecl, message: str) -> PolicyError:
        return PolicyError(message, decl.file, decl.line, decl.col)

    def run(self) -> PolicySpec:
        for decl in self.raw.decls:
            if decl.name in self.registry:
                raise self.err(decl, f"duplicate declaration of {decl.name!r}")
            self.registry[decl.name] = decl
            self.spec.positions[decl.name] = (decl.line, decl.col)

        for decl in self.raw.decls:
            if decl.kind == "port_group":
                self.spec.port_groups[decl.name] = PortGroup(decl.name, decl.ranges)
        for decl in self.raw.decls:
            if decl.kind == "service":
                self.spec.services[decl.name] = self._build_service(decl)
                self.spec.raw_attrs[decl.name] = decl.attrs
        for decl in self.raw.decls:
            if decl.kind == "service_group":
                self._service_set(decl.name)
        for decl in self.raw.decls:
            if decl.kind == "zone_group":
                self._zone_set(decl.name)
        for decl in self.raw.decls:
            if decl.kind == "policy_rule":
                self._build_rule(decl)
        for decl in self.raw.decls:
            if decl.kind == "reporting_rule":
                self._build_reporting(decl)
        for decl in self.raw.decls:
            if decl.kind == "rule_group":
                for member in decl.members:
                    if self.registry.get(member, _MISSING).kind != "policy_rule":
                        raise self.err(decl, f"rule group {decl.name!r} references "
                                             f"undeclared policy rule {member!r}")
                self.spec.rule_groups[decl.name] = decl.members
        for decl in self.raw.decls:
            if decl.kind == "policy":
                if self.spec.global_policy is not None:
                    raise self.err(decl, "duplicate policy declaration")
                rg, rr = decl.members
                if self.registry.get(rg, _MISSING).kind != "rule_group":
                    raise self.err(decl, f"policy references undeclared rule group {rg!r}")
                if self.registry.get(rr, _MISSING).kind != "reporting_rule":
                    raise self.err(decl, f"policy references undeclared reporting rule {rr!r}")
                self.spec.global_policy = GlobalPolicy(decl.name, rg, rr)

        self.spec.decl_order = tuple(
            (d.kind, d.name) for d in self.raw.decls if d.name in self.main_names
        )
        return self.spec

    # -- services

    def _build_service(self, decl: _RawDecl) -> Service:
        protocol: int | None = None
        protocol_seen = False
        ports: dict[str, tuple[PortRange, ...]] = {}
        port_attr_protos: dict[str, int] = {}
        comment = ""
        seen: set[str] = set()
        for key, value in decl.attrs:
            if key in seen:
                raise self.err(decl, f"duplicate attribute {key!r} in service {decl.name!r}")
            seen.add(key)
            if key == "protocol":
                protocol_seen = True
                protocol = self._protocol_value(decl, value)
            elif key in _PORT_ATTRS:
                field_name, proto = _PORT_ATTRS[key]
                ports[field_name] = ports.get(field_name, ()) + self._range_value(decl, value)
                port_attr_protos[key] = proto
            elif key == "comment":
                if not isinstance(value, VString):
                    raise self.err(decl, "comment value must be a string")
                comment = value.text
            else:
                raise self.err(decl, f"unknown service attribute {key!r}")
        if not protocol_seen:
            raise self.err(decl, f"service {decl.name!r} must declare a protocol")
        svc = Service(
            name=decl.name,
            protocol=protocol,
            source_ports=ports.get("source_ports", ()),
            dest_ports=ports.get("dest_ports", ()),
            icmp_types=ports.get("icmp_types", ()),
            comment=comment,
        )
        # TCP/UDP default the unspecified port dimensions to the full range
        if protocol in (6, 17):
            if not svc.source_ports:
                svc = Service(svc.name, svc.protocol, (FULL_PORT_RANGE,), svc.dest_ports,
                              svc.icmp_types, svc.comment)
            if not svc.dest_ports:
                svc = Service(svc.name, svc.protocol, svc.source_ports, (FULL_PORT_RANGE,),
                              svc.icmp_types, svc.comment)
        return svc

    def _protocol_value(self, decl: _RawDecl, value: Value) -> int | None:
        if isinstance(value, VName):
            if value.name not in PROTOCOL_NUMBERS:
                raise self.err(decl, f"unknown protocol {value.name!r}")
            return PROTOCOL_NUMBERS[value.name]
        if isinstance(value, VInt):
            return value.n
        raise self.err(decl, "protocol value must be a protocol name or number")

    def _range_value(self, decl: _RawDecl, value: Value) -> tuple[PortRange, ...]:
        if isinstance(value, VInt):
            return (PortRange(value.n, value.n),)
        if isinstance(value, VRange):
            return (PortRange(value.lo, value.hi),)
        if isinstance(value, VName):
            group = self.spec.port_groups.get(value.name)
            if group is None:
                raise self.err(decl, f"undeclared port group {value.name!r}")
            return group.ranges
        if isinstance(value, VList):
            out: tuple[PortRange, ...] = ()
            for item in value.items:
                out += self._range_value(decl, item)
            return out
        raise self.err(decl, "port value must be a port, range, or port-group name")

    # -- set expressions

    def _service_set(self, name: str) -> ServiceSet:
        if name in self._svc_sets:
            return self._svc_sets[name]
        decl = self.registry.get(name)
        if decl is None:
            raise PolicyError(f"undeclared name {name!r}")
        if decl.kind == "service":
            return ServiceSet([self.spec.services[name]])
        if decl.kind != "service_group":
            raise self.err(decl, f"{decl.kind} {name!r} used where a service was expected")
        if name in self._resolving:
            raise self.err(decl, f"cycle in service group nesting through {name!r}")
        self._resolving.append(name)
        assert decl.expr is not None
        members = self._eval_expr(decl, decl.expr, self._service_term_set)
        self._resolving.pop()
        self._svc_sets[name] = members
        self.spec.service_groups[name] = ServiceGroup(name, decl.expr, members)
        return members

    def _service_term_set(self, decl: _RawDecl, name: str) -> ServiceSet:
        if name not in self.registry:
            raise self.err(decl, f"undeclared name {name!r}")
        return self._service_set(name)

    def _eval_expr(self, decl: _RawDecl, expr: SetExpr, term):
        segments = [term(decl, expr.first)]
        for op, name in expr.rest:
            value = term(decl, name)
            if op == ",":
                segments.append(value)
            elif op == "^":
                segments[-1] = segments[-1].intersection(value)
            else:
                segments[-1] = segments[-1].difference(value)
        result = segments[0]
        for seg in segments[1:]:
            result = result.union(seg)
        return result

    # -- zone groups

    def _zone_set(self, name: str) -> frozenset[str]:
        if name in self._zone_sets:
            return self._zone_sets[name]
        decl = self.registry.get(name)
        if decl is None:
            # not declared anywhere: a leaf zone name from the security model
            return frozenset({name})
        if decl.kind != "zone_group":
            raise self.err(decl, f"{decl.kind} {name!r} used where a zone was expected")
        if name in self._resolving:
            raise self.err(decl, f"cycle in zone group nesting through {name!r}")
        self._resolving.append(name)
        assert decl.expr is not None
        zones = self._eval_expr(decl, decl.expr, lambda d, n: _ZoneTerm(self._zone_set(n)))
        self._resolving.pop()
        resolved = zones.value
        self._zone_sets[name] = resolved
        self.spec.zone_groups[name] = ZoneGroup(name, decl.expr, resolved)
        return resolved

    # -- rules and reporting

    def _build_rule(self, decl: _RawDecl) -> None:
        for side in (decl.left, decl.right):
            found = self.registry.get(side)
            if found is not None and found.kind != "zone_group":
                raise self.err(decl, f"{found.kind} {side!r} used where a zone was expected")
        assert decl.expr is not None
        services = self._eval_expr(decl, decl.expr, self._service_term_set)
        self.spec.rules[decl.name] = HighLevelRule(
            name=decl.name,
            left=decl.left,
            operator=decl.operator,
            right=decl.right,
            service_expr=decl.expr,
            services=services,
        )

    def _build_reporting(self, decl: _RawDecl) -> None:
        use_case: str | None = None
        for key, value in decl.attrs:
            if key == "use_case":
                if not isinstance(value, VName):
                    raise self.err(decl, "use_case must be an identifier")
                use_case = value.name
            elif key == "granularity.network":
                for name in _block_names(value, "zone_or_group"):
                    if self.registry.get(name, _MISSING).kind != "zone_group":
                        raise self.err(decl, f"reporting rule references undeclared "
                                             f"zone group {name!r}")
            elif key == "granularity.policy":
                for name in _block_names(value, "rule_or_group"):
                    if self.registry.get(name, _MISSING).kind not in ("rule_group", "policy_rule"):
                        raise self.err(decl, f"reporting rule references undeclared "
                                             f"rule group {name!r}")
        self.spec.reporting_rules[decl.name] = ReportingRule(decl.name, decl.attrs, use_case)
        self.spec.raw_attrs[decl.name] = decl.attrs


class _ZoneTerm:
    """Frozen-set wrapper giving zone sets the same algebra as ServiceSet."""

    __slots__ = ("value",)

    def __init__(self, value: frozenset[str]):
        self.value = value

    def union(self, other: "_ZoneTerm") -> "_ZoneTerm":
        return _ZoneTerm(self.value | other.value)

    def intersection(self, other: "_ZoneTerm") -> "_ZoneTerm":
        return _ZoneTerm(self.value & other.value)

    def difference(self, other: "_ZoneTerm") -> "_ZoneTerm":
        return _ZoneTerm(self.value - other.value)


_MISSING = _RawDecl(kind="<missing>", name="", line=0, col=0, file="")


def _block_names(value: Value, key: str) -> list[str]:
    """Names under ``key={...}`` entries of a granularity block value."""
    names: list[str] = []
    if isinstance(value, VBlock):
        for k, v in value.items:
            if k == key and isinstance(v, VBlock):
                for _, inner in v.items:
                    if isinstance(inner, VName):
                        names.append(inner.name)
            elif k == key and isinstance(v, VName):
                names.append(v.name)
    return names


# ---------------------------------------------------------------------------
# public entry points

def parse_policy(text: str, importer: Importer | None = None,
                 file: str = "<policy>") -> PolicySpec:
    """Parse policy source into a fully name-resolved PolicySpec."""
    importer = importer or default_importer()
    main = _parse_file(text, file)
    raw = _collect(text, file, importer, seen={})
    return _Resolver(raw, file, text, main.decls).run()


def resolve_service_expr(expr: SetExpr, spec: PolicySpec) -> ServiceSet:
    """Evaluate a set expression against an already-resolved spec."""
    segments: list[ServiceSet] = []

    def term(name: str) -> ServiceSet:
        if name in spec.services:
            return ServiceSet([spec.services[name]])
        if name in spec.service_groups:
            return spec.service_groups[name].members
        raise PolicyError(f"undeclared name {name!r}")

    current = term(expr.first)
    for op, name in expr.rest:
        value = term(name)
        if op == ",":
            segments.append(current)
            current = value
        elif op == "^":
            current = current.intersection(value)
        else:
            current = current.difference(value)
    segments.append(current)
    result = segments[0]
    for seg in segments[1:]:
        result = result.union(seg)
    return result


# ---------------------------------------------------------------------------
# pretty printer

def _value_source(value: Value) -> str:
    if isinstance(value, VInt):
        return str(value.n)
    if isinstance(value, VRange):
        return f"{value.lo}-{value.hi}"
    if isinstance(value, VName):
        return value.name
    if isinstance(value, VString):
        return f'"{value.text}"'
    if isinstance(value, VList):
        return ",".join(_value_source(v) for v in value.items)
    if isinstance(value, VBlock):
        inner = "; ".join(
            f"{k}={_value_source(v)}" if k else _value_source(v) for k, v in value.items
        )
        return "{" + inner + "}"
    raise TypeError(f"unprintable value {value!r}")


def pretty_print(spec: PolicySpec) -> str:
    """Emit canonical policy source that parses back to an equal spec."""
    lines: list[str] = []
    for dotted in spec.imports:
        lines.append(f"import {dotted};")
    if spec.imports:
        lines.append("")
    if spec.declared_model is not None:
        lines.append(f'load_zone_conduit_model "{spec.declared_model}"')
        lines.append("")
    for kind, name in spec.decl_order:
        if kind == "service":
            attrs = " ".join(f"{k}={_value_source(v)};" for k, v in spec.raw_attrs[name])
            lines.append(f"service {name} {{ {attrs} }}")
        elif kind == "service_group":
            lines.append(f"service_group {name} {{ {spec.service_groups[name].expr.to_source()} }}")
        elif kind == "port_group":
            ranges = ", ".join(str(r) for r in spec.port_groups[name].ranges)
            lines.append(f"port_group {name} {{ {ranges} }}")
        elif kind == "zone_group":
            lines.append(f"zone_group {name} {{ {spec.zone_groups[name].expr.to_source()} }}")
        elif kind == "policy_rule":
            rule = spec.rules[name]
            lines.append(
                f"policy_rule {name} {{ {rule.left} {rule.operator} {rule.right} : "
                f"{rule.service_expr.to_source()} }}"
            )
        elif kind == "rule_group":
            lines.append(f"rule_group {name} {{ {', '.join(spec.rule_groups[name])} }}")
        elif kind == "reporting_rule":
            attrs = " ".join(f"{k}={_value_source(v)};" for k, v in spec.raw_attrs[name])
            lines.append(f"reporting_rule {name} {{ {attrs} }}")
        elif kind == "policy":
            gp = spec.global_policy
            assert gp is not None and gp.name == name
            lines.append(f"policy {name} {{ {gp.rule_group}; {gp.reporting_rule}; }}")
    return "\n".join(lines) + "\n"
