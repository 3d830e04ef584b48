"""Ten end-to-end acceptance checks, one per core guarantee.

Each check prints a single "<name>: PASS" or "<name>: FAIL" line (visible
under pytest -s) and enforces a wall-clock budget, so a run of this file
doubles as a quick conformance report for the whole package.
"""

import json
import random
import time
from contextlib import contextmanager

import pytest
from hypothesis import given, settings

from conftest import GOLDEN_DIR, copy_toy_workspace, coverage_dict, sim_record

from test_rtl_iface import ports_of, random_module, render_module
from test_test_planner import plans

from uvmforge.cli import main
from uvmforge.coverage_optimizer import (
    CoverageOptimizer,
    OptimizationState,
    coverage_pcts,
)
from uvmforge.errors import DivisionDomainError
from uvmforge.fixture_tools import record_fixtures
from uvmforge.harness import TIMING_COLUMNS, per_round_rates, success_rate
from uvmforge.repair_engine import RepairEngine
from uvmforge.sim_gateway import FAIL, PASS, MockSimulator, coverage_from_dict
from uvmforge.tb_generator import (
    DEP_EDGES,
    DEPENDENCY_ORDER,
    ComponentKind,
    assemble_testbench,
    build_testbench,
    render_template,
)
from uvmforge.test_planner import parse_test_plan, serialize_plan


@contextmanager
def criterion(name, budget_s):
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        if elapsed > budget_s:
            raise AssertionError(
                f"exceeded time budget: {elapsed:.4f}s > {budget_s}s"
            )
    except BaseException:
        print(f"{name}: FAIL")
        raise
    print(f"{name}: PASS")


def test_01_success_rate_pins():
    with criterion("success-rate arithmetic", 0.001):
        assert success_rate(39, 45) == 86.67
        assert success_rate(42, 45) == 93.33
        with pytest.raises(DivisionDomainError):
            success_rate(0, 0)


def test_02_repair_budget_and_early_stop(iface, ws, plan, backend):
    stems = ["interface", "driver", "monitor", None]

    def fail_record(turn):
        stem = stems[turn % len(stems)]
        message = f"uart_{stem}.sv(1): injected" if stem else "injected, unattributed"
        return sim_record(status="fail", errors=[{"phase": "compile", "message": message}])

    engine = RepairEngine(iface, ws.config, plan, backend)
    rng = random.Random(97)
    with criterion("repair loop honors budget and stops on first pass", 5.0):
        for scenario_no in range(200):
            max_iters = rng.randrange(0, 4)
            fails = rng.randrange(0, 6)
            records = [fail_record(t) for t in range(fails)]
            records.append(sim_record(coverage=coverage_dict()))
            records += [fail_record(t) for t in range(2)]
            adapter = MockSimulator(records)
            tb = build_testbench(iface, ws.config, plan, backend)
            _, outcome, report = engine.repair_loop(tb, adapter, ws, max_iters=max_iters)
            assert report.simulations_run <= 1 + max_iters, scenario_no
            assert adapter.cursor == report.simulations_run
            if fails <= max_iters:
                assert outcome.status == PASS
                assert report.simulations_run == 1 + fails
            else:
                assert outcome.status == FAIL
                assert report.simulations_run == 1 + max_iters


def test_03_generation_order_is_a_topological_sort():
    with criterion("generation order respects every dependency edge", 0.001):
        assert sorted(DEPENDENCY_ORDER, key=lambda k: k.value) == sorted(
            ComponentKind, key=lambda k: k.value
        )
        position = {kind: idx for idx, kind in enumerate(DEPENDENCY_ORDER)}
        assert len(DEP_EDGES) == 16
        for before, after in DEP_EDGES:
            assert position[before] < position[after], (before, after)


def test_04_template_golden_match(iface, ws):
    with criterion("deterministic components match golden files", 1.0):
        for kind, golden in (
            (ComponentKind.INTERFACE, "uart_interface.sv"),
            (ComponentKind.SEQUENCER, "uart_sequencer.sv"),
            (ComponentKind.TOP, "uart_top.sv"),
        ):
            rendered = render_template(kind, iface, ws.config).source
            expected = (GOLDEN_DIR / golden).read_text(encoding="utf-8")
            assert rendered == expected, golden
        top = render_template(ComponentKind.TOP, iface, ws.config).source
        for port in iface.ports:
            assert top.count(f".{port.name}(vif.{port.name})") == 1, port.name


def test_05_header_parsing_agrees_with_construction():
    from uvmforge.rtl_iface import extract_interface

    rng = random.Random(20250815)
    with criterion("header parsing agrees with constructed references", 2.0):
        for case_no in range(30):
            params, ports = random_module(rng)
            text = render_module(rng, f"dut{case_no}", params, ports)
            iface = extract_interface([text], f"dut{case_no}")
            assert ports_of(iface) == ports, text
            assert iface.parameters == params, text


def test_06_optimizer_keeps_only_wins(iface, ws, plan, backend):
    ws.config.max_repair_iters = 0
    engine = RepairEngine(iface, ws.config, plan, backend)
    rtl = "\n".join(ws.read_sources())

    def state_at_70(tb):
        base = coverage_from_dict(
            coverage_dict(line=(70, 100), branch=(0, 0), toggle=(0, 0),
                          functional=(("FP-1", 1, 2),))
        )
        return OptimizationState(
            best_tb=tb, best_doc=base, best_cov=coverage_pcts(base), target=(95.0, 95.0)
        )

    fail = sim_record(
        status="fail", errors=[{"phase": "run", "message": "uart_sequence.sv(1): injected"}]
    )
    with criterion("optimizer accepts improvements and rolls back the rest", 2.0):
        optimizer = CoverageOptimizer(plan, iface, engine, backend, rtl, max_iters=2)

        improving = sim_record(
            coverage=coverage_dict(line=(80, 100), branch=(0, 0), toggle=(0, 0),
                                   functional=(("FP-1", 1, 2),))
        )
        tb = build_testbench(iface, ws.config, plan, backend)
        state = optimizer.supplement_loop(
            state_at_70(tb), MockSimulator([fail, improving]), ws
        )
        assert [r.accepted for r in state.trace] == [False, True]
        assert [r.reverted for r in state.trace] == [True, False]
        assert state.best_cov[0] == 80.0

        tied = sim_record(
            coverage=coverage_dict(line=(70, 100), branch=(0, 0), toggle=(0, 0),
                                   functional=(("FP-1", 1, 2),))
        )
        tb = build_testbench(iface, ws.config, plan, backend)
        assemble_testbench(tb, ws.tb_dir)
        before = {p.name: p.read_bytes() for p in ws.tb_dir.iterdir() if p.is_file()}
        state = optimizer.supplement_loop(state_at_70(tb), MockSimulator([fail, tied]), ws)
        assert state.iteration == 2
        assert all(r.reverted for r in state.trace)
        after = {p.name: p.read_bytes() for p in ws.tb_dir.iterdir() if p.is_file()}
        assert after == before


def test_07_coverage_arithmetic():
    with criterion("coverage percentages are count-weighted", 0.001):
        exact = coverage_from_dict(
            coverage_dict(line=(40, 50), branch=(0, 0), toggle=(0, 0),
                          functional=(("FP-1", 1, 1),))
        )
        assert coverage_pcts(exact)[0] == 80.0

        thirds = coverage_from_dict(coverage_dict(functional=(("FP-1", 2, 3),)))
        assert abs(coverage_pcts(thirds)[1] - 66.67) <= 0.01

        empty = coverage_from_dict(
            coverage_dict(line=(0, 0), branch=(0, 0), toggle=(0, 0), functional=())
        )
        assert coverage_pcts(empty) == (100.0, 100.0)


def test_08_end_to_end_cli_run(tmp_path):
    with criterion("full pipeline runs from the command line", 10.0):
        root = copy_toy_workspace(tmp_path / "ws")
        record_fixtures(root)
        assert main(["run", "--workspace", str(root)]) == 0
        reports = root / "out" / "reports"
        for name in ("error_report.md", "coverage_report.md", "metrics.json", "timing.md"):
            assert (reports / name).exists(), name
        header = (reports / "timing.md").read_text(encoding="utf-8").split("\n")[2]
        columns = tuple(c.strip() for c in header.strip("|").split("|"))
        assert columns == TIMING_COLUMNS
        metrics = json.loads((reports / "metrics.json").read_text(encoding="utf-8"))
        assert metrics["status"] == "success"
        assert metrics["final_code_pct"] == pytest.approx(93.6)


def test_09_round_gains_are_consistent():
    rng = random.Random(11)
    with criterion("per-round gains equal differences of reported rates", 1.0):
        batch = [([1] * 39 + [2] * 3 + [None] * 3, 45)]
        for _ in range(50):
            total = rng.randrange(5, 60)
            row = [rng.choice([1, 2, 3, None]) for _ in range(total)]
            batch.append((row, total))
        for row, total in batch:
            rates, gains = per_round_rates(row, total, max_round=3)
            assert gains == [round(rates[i] - rates[i - 1], 2) for i in range(1, 3)]
        pinned_rates, _ = per_round_rates(*batch[0], max_round=3)
        assert pinned_rates[0] == 86.67
        assert pinned_rates[1] == 93.33


def test_10_plan_serialization_identity():
    @given(plans())
    @settings(max_examples=100, deadline=None, derandomize=True)
    def check(plan):
        assert parse_test_plan(serialize_plan(plan)) == plan

    with criterion("plan files survive serialize-then-parse unchanged", 2.0):
        check()
