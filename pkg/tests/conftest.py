from __future__ import annotations

from pathlib import Path

import pytest

from forestfw.netgen import CompileOptions, NetworkPolicy, compile_policy
from forestfw.policy_lang import default_importer, parse_policy
from forestfw.policy_lang.syntax import PolicySpec
from forestfw.topo_model import Topology, load_topology

FIXTURES = Path(__file__).parent.parent / "fixtures"


def load_fixture_policy(name: str) -> PolicySpec:
    path = FIXTURES / name
    importer = default_importer(search_paths=(FIXTURES,))
    return parse_policy(path.read_text(encoding="utf-8"), importer, file=str(path))


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def plant_spec() -> PolicySpec:
    """The as-written plant policy (carries the web/file_transfer overlap)."""
    return load_fixture_policy("scada_plant.policyml")


@pytest.fixture(scope="session")
def plant_spec_fixed() -> PolicySpec:
    return load_fixture_policy("scada_plant_fixed.policyml")


@pytest.fixture(scope="session")
def plant_topology() -> Topology:
    return load_topology((FIXTURES / "topology.graphml").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def bp_spec() -> PolicySpec:
    return load_fixture_policy("bestpractice/scada_isa.policyml")


@pytest.fixture(scope="session")
def compiled_plant(plant_spec_fixed, plant_topology) -> NetworkPolicy:
    return compile_policy(plant_spec_fixed, plant_topology, CompileOptions(ospf=True))
