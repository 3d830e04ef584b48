"""Command line front end.

Subcommands mirror the pipeline stages: plan, gen, sim, refine, run, bench.
Exit codes: 0 success, 2 generation or simulation failure, 3 configuration
problem (bad inputs, unreachable backend, broken adapter).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agent_core import BackendConfig, make_backend
from .errors import UvmForgeError
from .harness import (
    CONFIG_ERROR,
    CONFIG_ERROR_TYPES,
    EXIT_CODES,
    GENERATION_FAILED,
    SUCCESS,
    BenchManifest,
    run_bench,
    run_pipeline,
)
from .repair_engine import RepairEngine
from .rtl_iface import classify_ports, extract_interface
from .sim_gateway import PASS, AdapterConfig, make_adapter, run_simulation
from .tb_generator import assemble_testbench, build_testbench, load_testbench
from .test_planner import TestPlan, generate_test_plan, read_plan, write_plan
from .workspace import Workspace, load_workspace

log = logging.getLogger(__name__)


def _add_workspace_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--workspace", default=".", help="workspace root directory")
    parser.add_argument("--spec", default="spec.md", help="spec file name inside the workspace")
    parser.add_argument("--config", default="config.json", help="config file name")
    parser.add_argument("--rtl-dir", default="rtl", help="DUT source directory name")
    parser.add_argument("--out", default="out", help="output directory name")


def _add_backend_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=("mock", "http"), default="mock")
    parser.add_argument("--fixtures", help="fixture directory for the mock backend")
    parser.add_argument("--endpoint", help="HTTP backend endpoint URL")
    parser.add_argument("--model", help="HTTP backend model identifier")


def _add_adapter_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--adapter", choices=("mock", "cmd"), default="mock")
    parser.add_argument(
        "--scenario",
        help="scenario JSON for the mock simulator (default: <workspace>/sim_scenario.json)",
    )
    parser.add_argument("--compile-cmd", help="compile command for the cmd adapter")
    parser.add_argument("--run-cmd", help="run command for the cmd adapter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvmforge",
        description="Generate, simulate, repair, and tune UVM testbenches.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="extract the interface and write a test plan")
    _add_workspace_options(p_plan)
    _add_backend_options(p_plan)

    p_gen = sub.add_parser("gen", help="generate the eleven testbench components")
    _add_workspace_options(p_gen)
    _add_backend_options(p_gen)

    p_sim = sub.add_parser("sim", help="simulate the testbench already on disk once")
    _add_workspace_options(p_sim)
    _add_adapter_options(p_sim)

    p_refine = sub.add_parser("refine", help="simulate and repair until pass or budget spent")
    _add_workspace_options(p_refine)
    _add_backend_options(p_refine)
    _add_adapter_options(p_refine)
    p_refine.add_argument("--max-repair", type=int, help="repair round budget")

    p_run = sub.add_parser("run", help="full pipeline: plan, generate, repair, supplement")
    _add_workspace_options(p_run)
    _add_backend_options(p_run)
    _add_adapter_options(p_run)
    p_run.add_argument("--max-repair", type=int, help="repair round budget")
    p_run.add_argument("--max-opt", type=int, help="supplement round budget")
    p_run.add_argument("--target-code", type=float, help="code coverage target override")
    p_run.add_argument("--target-func", type=float, help="functional coverage target override")

    p_bench = sub.add_parser("bench", help="run a manifest of designs and aggregate results")
    p_bench.add_argument("--manifest", required=True, help="bench manifest JSON")
    p_bench.add_argument("--jobs", type=int, default=1, help="parallel designs")
    p_bench.add_argument("--out", help="directory for bench_summary.{md,json}")
    _add_backend_options(p_bench)
    _add_adapter_options(p_bench)

    return parser


def _load_ws(args: argparse.Namespace) -> Workspace:
    return load_workspace(
        args.workspace,
        spec_name=args.spec,
        config_name=args.config,
        rtl_dir=args.rtl_dir,
        out_name=args.out,
    )


def _backend_config(args: argparse.Namespace, root: Path | None) -> BackendConfig:
    if args.backend == "mock":
        fixtures = args.fixtures
        if fixtures is None and root is not None:
            fixtures = root / "fixtures"
        if fixtures is None:
            raise SystemExit("--fixtures is required for the mock backend here")
        return BackendConfig(kind="mock", fixture_dir=Path(fixtures))
    if not args.endpoint or not args.model:
        raise SystemExit("--endpoint and --model are required for the http backend")
    return BackendConfig(kind="http", endpoint=args.endpoint, model_id=args.model)


def _adapter_config(args: argparse.Namespace, root: Path | None) -> AdapterConfig:
    if args.adapter == "mock":
        scenario = args.scenario
        if scenario is None and root is not None:
            scenario = root / "sim_scenario.json"
        if scenario is None:
            raise SystemExit("--scenario is required for the mock adapter here")
        return AdapterConfig(kind="mock", scenario_path=Path(scenario))
    if not args.compile_cmd or not args.run_cmd:
        raise SystemExit("--compile-cmd and --run-cmd are required for the cmd adapter")
    return AdapterConfig(kind="cmd", compile_cmd=args.compile_cmd, run_cmd=args.run_cmd)


def _classified_interface(ws: Workspace):
    return classify_ports(extract_interface(ws.read_sources(), ws.config.top_module), ws.config)


def _plan_for(ws: Workspace, backend) -> TestPlan:
    """Reuse an existing plan file when present, otherwise run the analysis agent."""
    plan_path = ws.plan_dir / "test_plan.txt"
    if plan_path.is_file():
        log.info("reusing existing plan %s", plan_path)
        return read_plan(plan_path)
    iface = _classified_interface(ws)
    plan = generate_test_plan(ws.spec, iface, backend)
    write_plan(plan, plan_path)
    return plan


def _cmd_plan(args: argparse.Namespace) -> int:
    ws = _load_ws(args)
    backend = make_backend(_backend_config(args, ws.root))
    iface = _classified_interface(ws)
    plan = generate_test_plan(ws.spec, iface, backend)
    path = write_plan(plan, ws.plan_dir / "test_plan.txt")
    print(f"wrote {len(plan.points)} function points to {path}")
    return EXIT_CODES[SUCCESS]


def _cmd_gen(args: argparse.Namespace) -> int:
    ws = _load_ws(args)
    backend = make_backend(_backend_config(args, ws.root))
    plan = _plan_for(ws, backend)
    iface = _classified_interface(ws)
    tb = build_testbench(iface, ws.config, plan, backend)
    written = assemble_testbench(tb, ws.tb_dir)
    print(f"wrote {len(written)} files to {ws.tb_dir}")
    return EXIT_CODES[SUCCESS]


def _cmd_sim(args: argparse.Namespace) -> int:
    ws = _load_ws(args)
    adapter = make_adapter(_adapter_config(args, ws.root))
    tb = load_testbench(ws.tb_dir, ws.config.top_module)
    outcome = run_simulation(adapter, tb, ws)
    print(f"simulation {outcome.status}: {len(outcome.errors)} error(s), log {outcome.log_path}")
    for err in outcome.errors:
        owner = err.component.stem if err.component else "unattributed"
        print(f"  [{err.phase.name}] {owner}: {err.message}")
    return EXIT_CODES[SUCCESS] if outcome.status == PASS else EXIT_CODES[GENERATION_FAILED]


def _cmd_refine(args: argparse.Namespace) -> int:
    ws = _load_ws(args)
    backend = make_backend(_backend_config(args, ws.root))
    adapter = make_adapter(_adapter_config(args, ws.root))
    plan = _plan_for(ws, backend)
    iface = _classified_interface(ws)
    tb = load_testbench(ws.tb_dir, ws.config.top_module)
    engine = RepairEngine(iface, ws.config, plan, backend)
    tb, outcome, report = engine.repair_loop(tb, adapter, ws, max_iters=args.max_repair)
    report.save(ws.reports_dir / "repair.json")
    print(
        f"final status {outcome.status} after {report.simulations_run} simulation(s), "
        f"{len(report.rounds)} repair round(s)"
    )
    return EXIT_CODES[SUCCESS] if outcome.status == PASS else EXIT_CODES[GENERATION_FAILED]


def _cmd_run(args: argparse.Namespace) -> int:
    ws = _load_ws(args)
    backend = make_backend(_backend_config(args, ws.root))
    adapter = make_adapter(_adapter_config(args, ws.root))
    targets = None
    if args.target_code is not None or args.target_func is not None:
        targets = (
            args.target_code if args.target_code is not None
            else ws.config.coverage_targets.code_pct,
            args.target_func if args.target_func is not None
            else ws.config.coverage_targets.func_pct,
        )
    run = run_pipeline(
        ws,
        backend,
        adapter,
        max_repair=args.max_repair,
        max_opt=args.max_opt,
        targets=targets,
    )
    print(
        f"status {run.status}: code {run.final_code_pct:.2f}%, "
        f"functional {run.final_func_pct:.2f}%, total {run.total_s:.2f} s"
    )
    if run.failure:
        print(f"failure: {run.failure}", file=sys.stderr)
    print(f"reports in {ws.reports_dir}")
    return EXIT_CODES[run.status]


def _cmd_bench(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    manifest = BenchManifest.load(manifest_path)
    backend_cfg = _backend_config(args, manifest_path.parent)
    adapter_cfg = _adapter_config(args, manifest_path.parent)
    summary = run_bench(manifest, backend_cfg, adapter_cfg, jobs=args.jobs)
    out_dir = Path(args.out) if args.out else manifest_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bench_summary.md").write_text(summary.to_markdown(), encoding="utf-8")
    (out_dir / "bench_summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    print(summary.to_markdown(), end="")
    print(f"summaries written to {out_dir}")
    return EXIT_CODES[SUCCESS]


_COMMANDS = {
    "plan": _cmd_plan,
    "gen": _cmd_gen,
    "sim": _cmd_sim,
    "refine": _cmd_refine,
    "run": _cmd_run,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except CONFIG_ERROR_TYPES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[CONFIG_ERROR]
    except UvmForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[GENERATION_FAILED]


if __name__ == "__main__":
    sys.exit(main())
