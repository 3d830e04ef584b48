"""End-to-end orchestration: plan, generate, simulate-and-repair, supplement.

run_pipeline drives one workspace through all four stages, times each, and
always leaves four report files in out/reports. run_bench repeats that over a
manifest of designs with several attempts each and aggregates success rates,
coverage, timing, and per-round pass-rate columns with their gains.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .agent_core import Backend, BackendConfig, make_backend
from .coverage_optimizer import (
    CoverageOptimizer,
    OptimizationState,
    coverage_pcts,
)
from .errors import (
    AdapterContractError,
    AdapterSpawnError,
    AuthMissingError,
    BackendUnreachableError,
    ConfigSchemaError,
    ConfigSyntaxError,
    CoverageSchemaError,
    DivisionDomainError,
    DuplicateModuleError,
    EmptyGenerationError,
    EmptyPlanError,
    IncompleteSetError,
    InvalidClockError,
    InvalidResetError,
    MalformedPlanError,
    MissingDependencyError,
    MissingInputError,
    MissingModuleError,
    MockFixtureMissingError,
    NoActionableErrorsError,
    ReportIoError,
    ScenarioExhaustedError,
    SignalNotFoundError,
    UnclassifiedClockError,
    UnreadableSourceError,
    UnsupportedConstructError,
    UvmForgeError,
)
from .repair_engine import RepairEngine, RepairReport
from .rtl_iface import classify_ports, extract_interface
from .sim_gateway import (
    PASS,
    AdapterConfig,
    CoverageDocument,
    SimError,
    coverage_to_dict,
    make_adapter,
)
from .tb_generator import (
    DEPENDENCY_ORDER,
    ComponentKind,
    assemble_testbench,
    build_testbench,
)
from .test_planner import generate_test_plan, write_plan
from .workspace import Workspace, load_workspace

log = logging.getLogger(__name__)

SUCCESS = "success"
GENERATION_FAILED = "generation_failed"
CONFIG_ERROR = "config_error"

EXIT_CODES = {SUCCESS: 0, GENERATION_FAILED: 2, CONFIG_ERROR: 3}

TIMING_COLUMNS = ("Planning", "Generation", "Simulation", "Supplement", "Total")

CONFIG_ERROR_TYPES = (
    MissingInputError,
    UnreadableSourceError,
    ConfigSyntaxError,
    ConfigSchemaError,
    MissingModuleError,
    DuplicateModuleError,
    UnsupportedConstructError,
    SignalNotFoundError,
    InvalidClockError,
    InvalidResetError,
    UnclassifiedClockError,
    AuthMissingError,
    BackendUnreachableError,
    MockFixtureMissingError,
    AdapterSpawnError,
    AdapterContractError,
    ScenarioExhaustedError,
    CoverageSchemaError,
)

GENERATION_FAILURE_TYPES = (
    EmptyPlanError,
    MalformedPlanError,
    EmptyGenerationError,
    MissingDependencyError,
    IncompleteSetError,
    NoActionableErrorsError,
)


@dataclass
class RunMetrics:
    status: str = SUCCESS
    planning_s: float = 0.0
    generation_s: float = 0.0
    simulation_s: float = 0.0
    supplement_s: float = 0.0
    total_s: float = 0.0
    final_code_pct: float = 0.0
    final_func_pct: float = 0.0
    repair_report: RepairReport | None = None
    failure: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "planning_s": self.planning_s,
            "generation_s": self.generation_s,
            "simulation_s": self.simulation_s,
            "supplement_s": self.supplement_s,
            "total_s": self.total_s,
            "final_code_pct": self.final_code_pct,
            "final_func_pct": self.final_func_pct,
            "repair": self.repair_report.to_dict() if self.repair_report else None,
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunMetrics":
        return cls(
            status=doc["status"],
            planning_s=doc["planning_s"],
            generation_s=doc["generation_s"],
            simulation_s=doc["simulation_s"],
            supplement_s=doc["supplement_s"],
            total_s=doc["total_s"],
            final_code_pct=doc["final_code_pct"],
            final_func_pct=doc["final_func_pct"],
            repair_report=RepairReport.from_dict(doc["repair"]) if doc.get("repair") else None,
            failure=doc.get("failure", ""),
        )


def success_rate(correct: int, total: int) -> float:
    """Percentage of correct outcomes, rounded to two decimals."""
    if total == 0:
        raise DivisionDomainError("success rate over zero attempts is undefined")
    if correct < 0 or correct > total:
        raise ValueError(f"correct={correct} outside [0, {total}]")
    return round(100.0 * correct / total, 2)


def per_round_rates(
    round_passed: list[int | None], total: int, max_round: int
) -> tuple[list[float], list[float]]:
    """Cumulative per-round pass rates and their round-over-round gains.

    round_passed holds, per attempt, the 1-based simulation round where it
    first passed (None = never). Gains are differences of the rounded rates,
    matching how they are reported.
    """
    rates = []
    for round_no in range(1, max_round + 1):
        passed = sum(1 for r in round_passed if r is not None and r <= round_no)
        rates.append(success_rate(passed, total))
    gains = [round(rates[i] - rates[i - 1], 2) for i in range(1, len(rates))]
    return rates, gains


# --- reports ------------------------------------------------------------------


def _pct(value: float) -> str:
    return f"{value:.2f}%"


def _error_report(errors: list[SimError]) -> str:
    lines = ["# Error report", ""]
    if not errors:
        lines.append("No errors recorded.")
        return "\n".join(lines) + "\n"
    phases = sorted({err.phase for err in errors})
    for phase in phases:
        lines.append(f"## {phase.name.capitalize()} phase")
        lines.append("")
        phase_errors = [err for err in errors if err.phase == phase]
        order = {kind: idx for idx, kind in enumerate(DEPENDENCY_ORDER)}
        def _component_rank(err: SimError):
            return order.get(err.component, len(order))
        for err in sorted(phase_errors, key=_component_rank):
            owner = err.component.stem if err.component else "unattributed"
            location = ""
            if err.file:
                location = f" ({err.file}" + (f":{err.line})" if err.line else ")")
            lines.append(f"- **{owner}**{location}: {err.message}")
        lines.append("")
    return "\n".join(lines).rstrip("\n") + "\n"


def _coverage_report(cov: CoverageDocument | None) -> str:
    lines = ["# Coverage report", ""]
    if cov is None:
        lines.append("No coverage data recorded.")
        return "\n".join(lines) + "\n"
    code_pct, func_pct = coverage_pcts(cov)
    lines += ["## Code coverage", ""]
    lines.append("| Metric | Covered | Total | Pct |")
    lines.append("|---|---:|---:|---:|")
    code_covered = sum(c.covered for c in cov.code.values())
    code_total = sum(c.total for c in cov.code.values())
    for key, count in cov.code.items():
        pct = 100.0 * count.covered / count.total if count.total else 100.0
        lines.append(f"| {key} | {count.covered} | {count.total} | {_pct(pct)} |")
    lines.append(f"| overall | {code_covered} | {code_total} | {_pct(code_pct)} |")
    lines += ["", "## Functional coverage", ""]
    lines.append("| Function point | Bins covered | Bins total | Pct |")
    lines.append("|---|---:|---:|---:|")
    func_covered = sum(f.bins_covered for f in cov.functional)
    func_total = sum(f.bins_total for f in cov.functional)
    for entry in cov.functional:
        pct = 100.0 * entry.bins_covered / entry.bins_total if entry.bins_total else 100.0
        lines.append(
            f"| {entry.fp_id} | {entry.bins_covered} | {entry.bins_total} | {_pct(pct)} |"
        )
    lines.append(f"| overall | {func_covered} | {func_total} | {_pct(func_pct)} |")
    return "\n".join(lines) + "\n"


def _timing_report(run: RunMetrics) -> str:
    header = "| " + " | ".join(TIMING_COLUMNS) + " |"
    rule = "|" + "---:|" * len(TIMING_COLUMNS)
    values = (
        run.planning_s,
        run.generation_s,
        run.simulation_s,
        run.supplement_s,
        run.total_s,
    )
    row = "| " + " | ".join(f"{v:.2f} s" for v in values) + " |"
    return "\n".join(["# Timing", "", header, rule, row]) + "\n"


def emit_reports(
    run: RunMetrics,
    errors: list[SimError],
    cov: CoverageDocument | None,
    out_dir: Path,
) -> list[Path]:
    """Write error_report.md, coverage_report.md, metrics.json, timing.md."""
    out_dir = Path(out_dir)
    documents = {
        "error_report.md": _error_report(errors),
        "coverage_report.md": _coverage_report(cov),
        "metrics.json": json.dumps(run.to_dict(), indent=2) + "\n",
        "timing.md": _timing_report(run),
    }
    written = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in documents.items():
            path = out_dir / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise ReportIoError(f"cannot write report: {exc}") from exc
    return written


# --- pipeline -----------------------------------------------------------------


def run_pipeline(
    ws: Workspace,
    backend: Backend,
    adapter,
    max_repair: int | None = None,
    max_opt: int | None = None,
    targets: tuple[float, float] | None = None,
) -> RunMetrics:
    """Drive one workspace end to end; reports are emitted for every status."""
    t_start = time.perf_counter()
    run = RunMetrics()
    errors: list[SimError] = []
    cov_doc: CoverageDocument | None = None

    if targets is None:
        targets = (ws.config.coverage_targets.code_pct, ws.config.coverage_targets.func_pct)
    if max_repair is None:
        max_repair = ws.config.max_repair_iters
    if max_opt is None:
        max_opt = ws.config.max_opt_iters

    try:
        t = time.perf_counter()
        sources = ws.read_sources()
        iface = classify_ports(
            extract_interface(sources, ws.config.top_module), ws.config
        )
        plan = generate_test_plan(ws.spec, iface, backend)
        write_plan(plan, ws.plan_dir / "test_plan.txt")
        run.planning_s = time.perf_counter() - t

        t = time.perf_counter()
        tb = build_testbench(iface, ws.config, plan, backend)
        assemble_testbench(tb, ws.tb_dir)
        run.generation_s = time.perf_counter() - t

        t = time.perf_counter()
        engine = RepairEngine(iface, ws.config, plan, backend)
        tb, outcome, report = engine.repair_loop(tb, adapter, ws, max_iters=max_repair)
        run.repair_report = report
        report.save(ws.reports_dir / "repair.json")
        errors = outcome.errors
        run.simulation_s = time.perf_counter() - t

        t = time.perf_counter()
        if outcome.status == PASS:
            cov_doc = outcome.coverage
            if cov_doc is None:
                log.warning("simulation passed without a coverage document; "
                            "skipping the supplement stage")
            else:
                state = OptimizationState(
                    best_tb=tb,
                    best_doc=cov_doc,
                    best_cov=coverage_pcts(cov_doc),
                    target=targets,
                )
                optimizer = CoverageOptimizer(
                    plan=plan,
                    iface=iface,
                    repair=engine,
                    backend=backend,
                    rtl_text="\n\n".join(sources),
                    max_iters=max_opt,
                )
                state = optimizer.supplement_loop(state, adapter, ws)
                cov_doc = state.best_doc
                tb = state.best_tb
                trace_doc = {
                    "iterations": state.iteration,
                    "best_cov": list(state.best_cov),
                    "target": list(state.target),
                    "trace": [
                        {
                            "attempted_cov": list(r.attempted_cov) if r.attempted_cov else None,
                            "accepted": r.accepted,
                            "reverted": r.reverted,
                        }
                        for r in state.trace
                    ],
                }
                (ws.reports_dir / "optimization.json").write_text(
                    json.dumps(trace_doc, indent=2) + "\n", encoding="utf-8"
                )
                (ws.reports_dir / "coverage.json").write_text(
                    json.dumps(coverage_to_dict(cov_doc), indent=2) + "\n",
                    encoding="utf-8",
                )
        else:
            run.status = GENERATION_FAILED
            run.failure = f"simulation still failing after {report.simulations_run} run(s)"
        run.supplement_s = time.perf_counter() - t
    except CONFIG_ERROR_TYPES as exc:
        run.status = CONFIG_ERROR
        run.failure = str(exc)
        log.error("pipeline stopped by configuration problem: %s", exc)
    except GENERATION_FAILURE_TYPES as exc:
        run.status = GENERATION_FAILED
        run.failure = str(exc)
        log.error("pipeline stopped by generation failure: %s", exc)

    run.total_s = time.perf_counter() - t_start
    if cov_doc is not None:
        run.final_code_pct, run.final_func_pct = coverage_pcts(cov_doc)
    emit_reports(run, errors, cov_doc, ws.reports_dir)
    return run


# --- bench --------------------------------------------------------------------


@dataclass
class BenchEntry:
    design_id: str
    workspace: Path
    expected_modules: int = 0
    expected_lines: int = 0


@dataclass
class BenchManifest:
    entries: list[BenchEntry]
    attempts_per_component: int = 5

    @classmethod
    def load(cls, path: Path) -> "BenchManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise MissingInputError(f"missing manifest: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigSyntaxError(
                f"manifest is not valid JSON at position {exc.pos}: {exc.msg}"
            ) from exc
        entries = []
        seen = set()
        for raw in doc.get("entries", []):
            design_id = raw.get("design_id")
            if not design_id or not isinstance(design_id, str):
                raise ConfigSchemaError("manifest entry missing design_id")
            if design_id in seen:
                raise ConfigSchemaError(f"duplicate design_id {design_id!r}")
            seen.add(design_id)
            if "workspace" not in raw:
                raise ConfigSchemaError(f"manifest entry {design_id!r} missing workspace")
            workspace = Path(raw["workspace"])
            if not workspace.is_absolute():
                workspace = path.parent / workspace
            entries.append(
                BenchEntry(
                    design_id=design_id,
                    workspace=workspace,
                    expected_modules=int(raw.get("expected_modules", 0)),
                    expected_lines=int(raw.get("expected_lines", 0)),
                )
            )
        if not entries:
            raise ConfigSchemaError("manifest has no entries")
        attempts = doc.get("attempts_per_component", 5)
        if not isinstance(attempts, int) or attempts < 1:
            raise ConfigSchemaError("attempts_per_component must be a positive integer")
        return cls(entries=entries, attempts_per_component=attempts)


@dataclass
class BenchRow:
    design_id: str
    attempts: int
    success_pct: float
    mean_code_pct: float
    mean_func_pct: float
    mean_timings: tuple[float, float, float, float, float]
    rounds: list[float]
    gains: list[float]
    failures: list[str] = field(default_factory=list)


@dataclass
class BenchSummary:
    rows: list[BenchRow]
    average: BenchRow
    attempts_per_component: int
    max_round: int

    def to_markdown(self) -> str:
        round_headers = []
        for idx in range(1, self.max_round + 1):
            round_headers.append(f"Round{idx}")
            if idx > 1:
                round_headers.append(f"Gain{idx}")
        headers = (
            ["Design", "SR", *round_headers]
            + ["Code cov", "Func cov"]
            + [f"{c} (s)" for c in TIMING_COLUMNS]
        )
        lines = [
            "| " + " | ".join(headers) + " |",
            "|" + "---|" * len(headers),
        ]
        for row in [*self.rows, self.average]:
            cells = [row.design_id, _pct(row.success_pct)]
            for idx in range(self.max_round):
                cells.append(_pct(row.rounds[idx]))
                if idx > 0:
                    cells.append(_pct(row.gains[idx - 1]))
            cells += [_pct(row.mean_code_pct), _pct(row.mean_func_pct)]
            cells += [f"{t:.2f}" for t in row.mean_timings]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        def row_doc(row: BenchRow) -> dict:
            return {
                "design_id": row.design_id,
                "attempts": row.attempts,
                "success_pct": row.success_pct,
                "mean_code_pct": row.mean_code_pct,
                "mean_func_pct": row.mean_func_pct,
                "mean_timings": dict(zip((c.lower() for c in TIMING_COLUMNS), row.mean_timings)),
                "rounds": row.rounds,
                "gains": row.gains,
                "failures": row.failures,
            }

        return {
            "attempts_per_component": self.attempts_per_component,
            "max_round": self.max_round,
            "rows": [row_doc(r) for r in self.rows],
            "average": row_doc(self.average),
        }


def _bench_entry(
    entry: BenchEntry,
    attempts: int,
    backend_cfg: BackendConfig,
    adapter_cfg: AdapterConfig,
) -> BenchRow:
    results: list[RunMetrics] = []
    failures: list[str] = []
    max_round = 3
    for attempt in range(1, attempts + 1):
        try:
            ws = load_workspace(entry.workspace, out_name=f"out/attempt-{attempt}")
            max_round = 1 + ws.config.max_repair_iters
            backend = make_backend(backend_cfg)
            adapter = make_adapter(adapter_cfg)
            run = run_pipeline(ws, backend, adapter)
        except UvmForgeError as exc:
            run = RunMetrics(status=CONFIG_ERROR, failure=str(exc))
        results.append(run)
        if run.failure:
            failures.append(f"attempt {attempt}: {run.failure}")

    round_passed = [
        r.repair_report.round_passed if r.repair_report else None for r in results
    ]
    rounds, gains = per_round_rates(round_passed, len(results), max_round)
    succeeded = [r for r in results if r.status == SUCCESS]
    mean_code = statistics.mean([r.final_code_pct for r in succeeded]) if succeeded else 0.0
    mean_func = statistics.mean([r.final_func_pct for r in succeeded]) if succeeded else 0.0
    mean_timings = tuple(
        statistics.mean([getattr(r, attr) for r in results])
        for attr in ("planning_s", "generation_s", "simulation_s", "supplement_s", "total_s")
    )
    return BenchRow(
        design_id=entry.design_id,
        attempts=len(results),
        success_pct=success_rate(len(succeeded), len(results)),
        mean_code_pct=round(mean_code, 2),
        mean_func_pct=round(mean_func, 2),
        mean_timings=mean_timings,
        rounds=rounds,
        gains=gains,
        failures=failures,
    )


def run_bench(
    manifest: BenchManifest,
    backend_cfg: BackendConfig,
    adapter_cfg: AdapterConfig,
    jobs: int = 1,
) -> BenchSummary:
    """Run every manifest entry; one entry's failure never aborts the rest."""
    rows: list[BenchRow] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(
                pool.map(
                    lambda e: _bench_entry(
                        e, manifest.attempts_per_component, backend_cfg, adapter_cfg
                    ),
                    manifest.entries,
                )
            )
    else:
        for entry in manifest.entries:
            rows.append(
                _bench_entry(entry, manifest.attempts_per_component, backend_cfg, adapter_cfg)
            )

    max_round = max(len(row.rounds) for row in rows)
    for row in rows:
        while len(row.rounds) < max_round:
            row.rounds.append(row.rounds[-1])
            row.gains.append(0.0)

    def _mean(values: list[float]) -> float:
        return round(statistics.mean(values), 2)

    avg_rounds = [_mean([row.rounds[i] for row in rows]) for i in range(max_round)]
    avg_gains = [round(avg_rounds[i] - avg_rounds[i - 1], 2) for i in range(1, max_round)]
    average = BenchRow(
        design_id="Average",
        attempts=manifest.attempts_per_component,
        success_pct=_mean([row.success_pct for row in rows]),
        mean_code_pct=_mean([row.mean_code_pct for row in rows]),
        mean_func_pct=_mean([row.mean_func_pct for row in rows]),
        mean_timings=tuple(
            _mean([row.mean_timings[i] for row in rows]) for i in range(5)
        ),
        rounds=avg_rounds,
        gains=avg_gains,
    )
    return BenchSummary(
        rows=rows,
        average=average,
        attempts_per_component=manifest.attempts_per_component,
        max_round=max_round,
    )
