import json

from forestfw.cli import main
from conftest import FIXTURES

POLICY = str(FIXTURES / "scada_plant.policyml")
POLICY_FIXED = str(FIXTURES / "scada_plant_fixed.policyml")
TOPOLOGY = str(FIXTURES / "topology.graphml")
BEST_PRACTICE = str(FIXTURES / "bestpractice" / "scada_isa.policyml")


def test_check_flags_the_published_overlap(capsys):
    code = main(["check", "--policy", POLICY, "--topology", TOPOLOGY])
    out = capsys.readouterr().out
    assert code == 1
    assert "rule overlap: file_transfer_rule x web_rule" in out
    assert "ip_protocol=6" in out and "dest_port=80" in out


def test_check_passes_corrected_policy(capsys):
    code = main(["check", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
                 "--best-practice", BEST_PRACTICE])
    out = capsys.readouterr().out
    assert code == 0
    assert out.startswith("OK:")


def test_check_missing_file_is_usage_error(capsys):
    code = main(["check", "--policy", "/nonexistent.policyml", "--topology", TOPOLOGY])
    assert code == 2
    assert "cannot read" in capsys.readouterr().err


def test_check_emit_alloy(tmp_path, capsys):
    target = tmp_path / "model.als"
    main(["check", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
          "--emit-alloy", str(target)])
    text = target.read_text()
    assert "abstract sig Service" in text
    # byte-stable across runs
    main(["check", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
          "--emit-alloy", str(tmp_path / "model2.als")])
    assert (tmp_path / "model2.als").read_text() == text


def test_compile_writes_expected_tree(tmp_path, capsys):
    out_dir = tmp_path / "compiled"
    code = main(["compile", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
                 "--out", str(out_dir), "--best-practice", BEST_PRACTICE, "--ospf"])
    assert code == 0
    names = sorted(p.name for p in out_dir.iterdir())
    assert names == [
        "GW.asa.txt", "GW.iptables.txt", "GW.neutral.acl",
        "R1.asa.txt", "R1.iptables.txt", "R1.neutral.acl",
        "R2.asa.txt", "R2.iptables.txt", "R2.neutral.acl",
        "manifest.json", "metrics.txt",
        "zone_conduit.dot", "zone_firewall.dot",
    ]
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["options"]["ospf"] is True


def test_compile_aborts_without_writing_on_overlap(tmp_path, capsys):
    out_dir = tmp_path / "never"
    code = main(["compile", "--policy", POLICY, "--topology", TOPOLOGY,
                 "--out", str(out_dir)])
    assert code == 1
    assert "rule overlap" in capsys.readouterr().err
    assert not out_dir.exists()


def test_compile_refuses_to_clobber_foreign_directory(tmp_path, capsys):
    out_dir = tmp_path / "precious"
    out_dir.mkdir()
    (out_dir / "keep.txt").write_text("do not delete")
    code = main(["compile", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
                 "--out", str(out_dir)])
    assert code == 2
    assert (out_dir / "keep.txt").exists()


def test_compile_replaces_previous_output(tmp_path):
    out_dir = tmp_path / "compiled"
    assert main(["compile", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
                 "--out", str(out_dir)]) == 0
    assert main(["compile", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
                 "--out", str(out_dir)]) == 0
    assert (out_dir / "manifest.json").exists()


def test_simulate_passes_on_fixture(tmp_path, capsys):
    out_dir = tmp_path / "compiled"
    main(["compile", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
          "--out", str(out_dir), "--ospf"])
    capsys.readouterr()
    code = main(["simulate", "--out", str(out_dir),
                 "--scan-ports", "0-128,443,1521"])
    out = capsys.readouterr().out
    assert code == 0
    assert "LEAK" not in out
    assert "FAIL" not in out.replace("positive vetting", "")
    assert "0 leak(s)" in out


def test_simulate_detects_tampered_config(tmp_path, capsys):
    out_dir = tmp_path / "compiled"
    main(["compile", "--policy", POLICY_FIXED, "--topology", TOPOLOGY,
          "--out", str(out_dir)])
    acl_file = out_dir / "R2.neutral.acl"
    lines = [l for l in acl_file.read_text().splitlines()
             if "dport~[1521]" not in l]
    acl_file.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    code = main(["simulate", "--out", str(out_dir), "--scan-ports", "0-64"])
    out = capsys.readouterr().out
    assert code == 1
    assert "FAIL corp_scada_oracle" in out


def test_simulate_missing_manifest_is_usage_error(tmp_path, capsys):
    code = main(["simulate", "--out", str(tmp_path)])
    assert code == 2
    assert "manifest" in capsys.readouterr().err


def test_graph_writes_two_dot_files(tmp_path, capsys):
    out_dir = tmp_path / "graphs"
    code = main(["graph", "--topology", TOPOLOGY, "--out", str(out_dir)])
    assert code == 0
    assert (out_dir / "zone_conduit.dot").read_text().startswith("graph zone_conduit")
    assert (out_dir / "zone_firewall.dot").read_text().startswith("graph zone_firewall")


def test_graph_bad_topology_path(capsys):
    assert main(["graph", "--topology", "/none.graphml", "--out", "/tmp/x"]) == 2


def test_parse_error_exits_with_findings(tmp_path, capsys):
    bad = tmp_path / "bad.policyml"
    bad.write_text("service s { protocol ,, }")
    code = main(["check", "--policy", str(bad), "--topology", TOPOLOGY])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_graph_on_empty_topology_writes_empty_graphs(tmp_path, capsys):
    empty = tmp_path / "empty.graphml"
    empty.write_text('<graphml xmlns="http://graphml.graphdrawing.org/xmlns">'
                     "<graph></graph></graphml>")
    out_dir = tmp_path / "graphs"
    assert main(["graph", "--topology", str(empty), "--out", str(out_dir)]) == 0
    assert (out_dir / "zone_conduit.dot").read_text() == "graph zone_conduit {\n}\n"
