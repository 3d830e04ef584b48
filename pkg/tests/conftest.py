import shutil
from importlib import resources
from pathlib import Path

import pytest

from uvmforge.fixture_tools import CannedBackend
from uvmforge.rtl_iface import classify_ports, extract_interface
from uvmforge.sim_gateway import MockSimulator
from uvmforge.test_planner import generate_test_plan
from uvmforge.workspace import load_workspace

GOLDEN_DIR = Path(__file__).parent / "golden"


def copy_toy_workspace(target: Path) -> Path:
    source = resources.files("uvmforge.data") / "toy_uart"
    shutil.copytree(source, target)
    return target


@pytest.fixture
def toy_root(tmp_path):
    return copy_toy_workspace(tmp_path / "ws")


@pytest.fixture
def ws(toy_root):
    return load_workspace(toy_root)


@pytest.fixture
def iface(ws):
    return classify_ports(
        extract_interface(ws.read_sources(), ws.config.top_module), ws.config
    )


@pytest.fixture
def backend():
    return CannedBackend("uart")


@pytest.fixture
def plan(ws, iface, backend):
    return generate_test_plan(ws.spec, iface, backend)


def coverage_dict(line=(100, 104), branch=(60, 66), toggle=(74, 80),
                  functional=(("FP-1", 4, 4), ("FP-2", 2, 2))):
    """Coverage JSON shape with the toy workspace's numbers as defaults."""
    return {
        "code": {
            "line": {"covered": line[0], "total": line[1]},
            "branch": {"covered": branch[0], "total": branch[1]},
            "toggle": {"covered": toggle[0], "total": toggle[1]},
        },
        "functional": [
            {"fp_id": fp, "bins_covered": covered, "bins_total": total}
            for fp, covered, total in functional
        ],
    }


def sim_record(status="pass", errors=(), coverage=None):
    record = {"status": status, "errors": list(errors)}
    if coverage is not None:
        record["coverage"] = coverage
    return record


def scripted_simulator(*records) -> MockSimulator:
    return MockSimulator(list(records))


@pytest.fixture
def make_sim():
    return scripted_simulator
