"""Command-line front end: check, compile, simulate, graph.

Exit codes: 0 success, 1 findings (validation, overlap, best-practice,
model mismatch, vetting failures), 2 usage or I/O errors.  ``compile``
never writes anything when a verification stage fails; output lands in
the target directory atomically.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
from pathlib import Path

from forestfw import canonical, checker, render, sim
from forestfw.diagnostics import CompileError, PolicyError, has_errors
from forestfw.netgen import CompileOptions, compile_policy
from forestfw.policy_lang import default_importer, expand_rules, parse_policy, validate_spec
from forestfw.policy_lang.syntax import PolicySpec, PortRange
from forestfw.topo_model import (
    ZoneConduitModel,
    build_zone_firewall_model,
    crosscheck_model,
    derive_zone_conduit,
    export_graph,
    load_declared_model,
    load_topology,
)

OK = 0
FINDINGS = 1
USAGE = 2


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


class _UsageError(Exception):
    pass


def _load_policy(path: Path) -> PolicySpec:
    importer = default_importer(search_paths=(path.parent,))
    return parse_policy(_read(path), importer, file=str(path))


def _load_declared(spec: PolicySpec, policy_path: Path) -> ZoneConduitModel | None:
    if spec.declared_model is None:
        return None
    model_path = policy_path.parent / spec.declared_model
    return load_declared_model(_read(model_path))


def _derive_model(topology_path: Path):
    topo = load_topology(_read(topology_path))
    model = derive_zone_conduit(build_zone_firewall_model(topo))
    return topo, model


def cmd_check(args: argparse.Namespace) -> int:
    policy_path = Path(args.policy)
    spec = _load_policy(policy_path)
    findings = False

    diags = validate_spec(spec)
    for diag in diags:
        print(diag)
    if has_errors(diags):
        return FINDINGS

    topo, model = _derive_model(Path(args.topology))
    for warning in model.warnings:
        print(f"{args.topology}:0:0: warning: {warning}")
    declared = _load_declared(spec, policy_path)
    if declared is not None:
        mismatch = crosscheck_model(model, declared)
        if mismatch is not None:
            print(f"{policy_path}:0:0: error: security model mismatch: {mismatch}")
            return FINDINGS

    flows = expand_rules(spec)
    for flow in flows:
        for zone in (flow.src_zone, flow.dst_zone):
            if zone not in model.zones:
                print(f"{policy_path}:0:0: error: rule {flow.rule_name!r} references "
                      f"zone {zone!r} not present in the derived model")
                findings = True
    if findings:
        return FINDINGS

    overlaps = checker.find_rule_overlaps(flows)
    for report in overlaps:
        print(f"{policy_path}:0:0: error: {report}")
        findings = True

    if args.best_practice:
        bp_spec = _load_policy(Path(args.best_practice))
        for violation in canonical.check_best_practice(flows, model.zones, bp_spec):
            print(f"{policy_path}:0:0: error: {violation}")
            findings = True

    if args.emit_alloy:
        Path(args.emit_alloy).write_text(checker.emit_alloy(spec, flows), encoding="utf-8")

    if findings:
        return FINDINGS
    print(f"OK: {len(flows)} flows, no overlaps"
          + (", best practice satisfied" if args.best_practice else ""))
    return OK


def cmd_compile(args: argparse.Namespace) -> int:
    policy_path = Path(args.policy)
    spec = _load_policy(policy_path)
    topo = load_topology(_read(Path(args.topology)))
    options = CompileOptions(
        ospf=args.ospf,
        best_practice=_load_policy(Path(args.best_practice)) if args.best_practice else None,
        declared_model=_load_declared(spec, policy_path),
    )
    policy = compile_policy(spec, topo, options)

    out_dir = Path(args.out)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".forestfw-", dir=out_dir.parent or Path(".")))
    try:
        templates = Path(args.templates) if args.templates else None
        for firewall in policy.firewalls():
            (staging / f"{firewall}.neutral.acl").write_text(
                render.render_neutral_file(policy, firewall), encoding="utf-8")
            (staging / f"{firewall}.iptables.txt").write_text(
                render.render_device(policy, firewall, "iptables_like", templates),
                encoding="utf-8")
            (staging / f"{firewall}.asa.txt").write_text(
                render.render_device(policy, firewall, "asa_like", templates),
                encoding="utf-8")
        (staging / "zone_firewall.dot").write_text(
            export_graph(policy.model, "zone_firewall"), encoding="utf-8")
        (staging / "zone_conduit.dot").write_text(
            export_graph(policy.model, "zone_conduit"), encoding="utf-8")
        (staging / "manifest.json").write_text(render.manifest_json(policy), encoding="utf-8")
        metrics = render.loc_metrics(spec, policy)
        (staging / "metrics.txt").write_text(
            f"high_level_loc {metrics.high_level_loc}\n"
            f"device_loc {metrics.device_loc}\n"
            f"ratio {metrics.ratio:.2f}\n",
            encoding="utf-8")
        if args.emit_alloy:
            (staging / "policy.als").write_text(
                checker.emit_alloy(spec, policy.flows), encoding="utf-8")
        _replace_dir(staging, out_dir)
    finally:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)

    print(f"compiled {len(policy.flows)} flows onto {len(policy.firewalls())} firewalls "
          f"-> {out_dir}")
    print(f"high-level LoC {metrics.high_level_loc}, device LoC {metrics.device_loc}, "
          f"ratio {metrics.ratio:.1f}")
    return OK


def _replace_dir(staging: Path, target: Path) -> None:
    if target.exists():
        if target.is_dir() and (not any(target.iterdir()) or (target / "manifest.json").exists()):
            shutil.rmtree(target)
        else:
            raise _UsageError(f"refusing to overwrite {target}: not a compile output directory")
    os.replace(staging, target)


def cmd_simulate(args: argparse.Namespace) -> int:
    compiled = Path(args.out)
    if not (compiled / "manifest.json").is_file():
        raise _UsageError(f"no compile manifest under {compiled}")
    net = sim.load_compiled(compiled)
    scan = None
    if args.scan_ports:
        scan = sim.ScanSpec(ports=_parse_port_list(args.scan_ports))

    failures = 0
    for result in sim.vet_positive(net):
        print(result.line())
        if not result.outcome:
            failures += 1
    leaks = sim.vet_negative(net, scan)
    for leak in leaks:
        print(leak.line())
    print(f"positive vetting: {len(net.flows) - failures}/{len(net.flows)} passed; "
          f"negative vetting: {len(leaks)} leak(s)")
    return OK if failures == 0 and not leaks else FINDINGS


def cmd_graph(args: argparse.Namespace) -> int:
    _, model = _derive_model(Path(args.topology))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for flavor in ("zone_firewall", "zone_conduit"):
        (out_dir / f"{flavor}.dot").write_text(export_graph(model, flavor), encoding="utf-8")
    print(f"wrote 2 graphs -> {out_dir}")
    return OK


def _parse_port_list(text: str) -> tuple[PortRange, ...]:
    ranges = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            ranges.append(PortRange(int(lo), int(hi)))
        else:
            ranges.append(PortRange(int(part), int(part)))
    if not ranges:
        raise _UsageError(f"empty scan port list {text!r}")
    return tuple(ranges)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestfw",
        description="Compile and verify topology-independent firewall policy.")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="parse, validate, and formally check a policy")
    check.add_argument("--policy", required=True, help="policy file (.policyml)")
    check.add_argument("--topology", required=True, help="network topology (GraphML)")
    check.add_argument("--best-practice", help="best-practice bounds (.policyml)")
    check.add_argument("--emit-alloy", help="write a relational model export to this file")
    check.set_defaults(func=cmd_check)

    compile_p = sub.add_parser("compile", help="compile a checked policy to device configs")
    compile_p.add_argument("--policy", required=True)
    compile_p.add_argument("--topology", required=True)
    compile_p.add_argument("--out", required=True, help="output directory")
    compile_p.add_argument("--best-practice")
    compile_p.add_argument("--ospf", action="store_true",
                           help="permit OSPF neighbour multicast on every interface")
    compile_p.add_argument("--emit-alloy", action="store_true",
                           help="also write policy.als into the output directory")
    compile_p.add_argument("--templates", help="override the device template directory")
    compile_p.set_defaults(func=cmd_compile)

    simulate = sub.add_parser("simulate", help="vet a compiled directory in the simulator")
    simulate.add_argument("--out", required=True, help="compile output directory")
    simulate.add_argument("--scan-ports",
                          help="negative-vetting ports, e.g. 0-1023,8080 "
                               "(default: 0-1023 plus every declared port)")
    simulate.set_defaults(func=cmd_simulate)

    graph = sub.add_parser("graph", help="export Zone-Firewall and Zone-Conduit graphs")
    graph.add_argument("--topology", required=True)
    graph.add_argument("--out", required=True, help="output directory")
    graph.set_defaults(func=cmd_graph)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"forestfw: {exc}", file=sys.stderr)
        return USAGE
    except CompileError as exc:
        for diag in exc.diagnostics:
            print(diag, file=sys.stderr)
        return FINDINGS
    except PolicyError as exc:
        print(exc, file=sys.stderr)
        return FINDINGS


if __name__ == "__main__":
    sys.exit(main())
