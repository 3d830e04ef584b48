"""Simulator access: run, capture, parse, attribute.

Two adapters: ExternalCommandAdapter shells out to a real simulator through
user-supplied command templates; MockSimulator replays scripted outcomes from
a JSON scenario file so everything downstream is testable without EDA tools.

The gateway, not the adapter, owns outcome consistency: a passing outcome
never carries errors and a failing outcome carries at least one.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from .errors import (
    AdapterContractError,
    AdapterSpawnError,
    CoverageSchemaError,
    ScenarioExhaustedError,
)
from .tb_generator import DEPENDENCY_ORDER, ComponentKind, Testbench
from .workspace import Workspace

log = logging.getLogger(__name__)


class SimPhase(IntEnum):
    COMPILE = 0
    ELABORATE = 1
    BUILD = 2
    CONNECT = 3
    RUN = 4
    REPORT = 5

    @classmethod
    def from_name(cls, name: str) -> "SimPhase":
        try:
            return cls[name.upper()]
        except KeyError:
            raise AdapterContractError(f"unknown simulation phase {name!r}") from None


@dataclass(frozen=True)
class SimError:
    phase: SimPhase
    component: ComponentKind | None
    message: str
    file: str | None = None
    line: int | None = None


@dataclass
class CoverageCount:
    covered: int
    total: int


@dataclass
class FunctionalCoverage:
    fp_id: str
    bins_covered: int
    bins_total: int


@dataclass
class CoverageDocument:
    code: dict[str, CoverageCount] = field(default_factory=dict)
    functional: list[FunctionalCoverage] = field(default_factory=list)


PASS = "pass"
FAIL = "fail"


@dataclass
class SimulationOutcome:
    status: str  # PASS or FAIL
    errors: list[SimError]
    log_path: Path | None = None
    coverage: CoverageDocument | None = None
    wall_ms: int = 0


@dataclass
class AdapterConfig:
    """How to reach a simulator.

    kind "cmd": compile_cmd and run_cmd are command templates; {files}
    expands to the DUT plus testbench sources (a lone {files} token splices
    into multiple arguments), {top} to the testbench top module name, and
    {outdir} to the simulation output directory. kind "mock": scenario_path
    points at a JSON array of scripted outcomes.
    """

    kind: str = "mock"  # "cmd" or "mock"
    compile_cmd: str = ""
    run_cmd: str = ""
    error_patterns: list[tuple[str, SimPhase]] | None = None
    scenario_path: Path | None = None
    timeout_s: float = 600.0


# Defaults cover VCS/Questa-style tool diagnostics and UVM runtime messages.
# First match wins, so phase-specific UVM patterns precede the catch-alls.
DEFAULT_ERROR_PATTERNS: list[tuple[str, SimPhase]] = [
    (r"UVM_(?:ERROR|FATAL).*\bbuild_phase\b", SimPhase.BUILD),
    (r"UVM_(?:ERROR|FATAL).*\bconnect_phase\b", SimPhase.CONNECT),
    (r"UVM_(?:ERROR|FATAL).*\breport_phase\b", SimPhase.REPORT),
    # The lookahead keeps report-summary count lines ("UVM_ERROR :    0")
    # from reading as runtime errors.
    (r"UVM_(?:ERROR|FATAL)(?!\s*:\s*\d)", SimPhase.RUN),
    (r"Error-\[ELAB", SimPhase.ELABORATE),
    (r"Elaboration +error", SimPhase.ELABORATE),
    (r"Error-\[", SimPhase.COMPILE),
    (r"\*E,", SimPhase.COMPILE),
    (r"\b[Ss]yntax error\b", SimPhase.COMPILE),
]

# Leaf component names first so "uvm_test_top.env.agent.driver" attributes to
# the driver, not the env it happens to live in.
_KEYWORD_PRIORITY = (
    ComponentKind.DRIVER,
    ComponentKind.MONITOR,
    ComponentKind.SCOREBOARD,
    ComponentKind.SEQUENCER,
    ComponentKind.SEQ_ITEM,
    ComponentKind.SEQUENCE,
    ComponentKind.TESTCASE,
    ComponentKind.INTERFACE,
    ComponentKind.AGENT,
    ComponentKind.ENV,
    ComponentKind.TOP,
)


def _attribute(line: str, tb: Testbench) -> tuple[ComponentKind | None, str | None, int | None]:
    """Attribution: file-name match first, then kind keyword, else nothing."""
    for kind, comp in tb.components.items():
        pos = line.find(comp.file_name)
        if pos >= 0:
            line_no = None
            after = line[pos + len(comp.file_name):]
            num_match = re.match(r'\s*[",:(]*\s*(\d+)', after)
            if num_match:
                line_no = int(num_match.group(1))
            return kind, comp.file_name, line_no
    lowered = line.lower()
    for kind in _KEYWORD_PRIORITY:
        if re.search(rf"(?<![a-z0-9]){re.escape(kind.stem)}(?![a-z0-9])", lowered):
            return kind, None, None
    return None, None, None


def parse_log(
    text: str,
    patterns: list[tuple[str, SimPhase]] | None,
    tb: Testbench,
) -> list[SimError]:
    """Scan log lines against the error patterns (first match wins per line).

    Duplicate (phase, file, line, message) tuples collapse to one error;
    appending more log text never removes previously parsed errors.
    """
    if patterns is None:
        patterns = DEFAULT_ERROR_PATTERNS
    compiled = [(re.compile(rx), phase) for rx, phase in patterns]
    errors: list[SimError] = []
    seen: set[tuple] = set()
    for line in text.splitlines():
        for regex, phase in compiled:
            if regex.search(line):
                component, file_name, line_no = _attribute(line, tb)
                message = line.strip()
                key = (phase, file_name, line_no, message)
                if key not in seen:
                    seen.add(key)
                    errors.append(
                        SimError(
                            phase=phase,
                            component=component,
                            message=message,
                            file=file_name,
                            line=line_no,
                        )
                    )
                break
    return errors


def errors_in_phase(outcome: SimulationOutcome, phase: SimPhase) -> list[SimError]:
    return [err for err in outcome.errors if err.phase == phase]


# --- coverage documents ---------------------------------------------------------

_CODE_KEYS = ("line", "branch", "toggle")


def _as_count(doc, where: str) -> CoverageCount:
    if not isinstance(doc, dict):
        raise CoverageSchemaError(f"{where}: expected an object")
    for key in ("covered", "total"):
        if key not in doc:
            raise CoverageSchemaError(f"{where}.{key}: missing")
        value = doc[key]
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise CoverageSchemaError(f"{where}.{key}: expected a non-negative integer")
    if doc["covered"] > doc["total"]:
        raise CoverageSchemaError(f"{where}: covered exceeds total")
    return CoverageCount(covered=doc["covered"], total=doc["total"])


def coverage_from_dict(doc) -> CoverageDocument:
    if not isinstance(doc, dict):
        raise CoverageSchemaError("coverage document must be a JSON object")
    code_doc = doc.get("code", {})
    if not isinstance(code_doc, dict):
        raise CoverageSchemaError("code: expected an object")
    code: dict[str, CoverageCount] = {}
    for key in code_doc:
        if key not in _CODE_KEYS:
            raise CoverageSchemaError(f"code.{key}: unknown coverage kind")
        code[key] = _as_count(code_doc[key], f"code.{key}")
    functional_doc = doc.get("functional", [])
    if not isinstance(functional_doc, list):
        raise CoverageSchemaError("functional: expected an array")
    functional = []
    for idx, entry in enumerate(functional_doc):
        where = f"functional[{idx}]"
        if not isinstance(entry, dict):
            raise CoverageSchemaError(f"{where}: expected an object")
        fp_id = entry.get("fp_id")
        if not isinstance(fp_id, str) or not fp_id:
            raise CoverageSchemaError(f"{where}.fp_id: expected a non-empty string")
        bins = _as_count(
            {"covered": entry.get("bins_covered"), "total": entry.get("bins_total")},
            where,
        )
        functional.append(
            FunctionalCoverage(fp_id=fp_id, bins_covered=bins.covered, bins_total=bins.total)
        )
    return CoverageDocument(code=code, functional=functional)


def coverage_to_dict(doc: CoverageDocument) -> dict:
    """Inverse of coverage_from_dict (neutral JSON shape)."""
    return {
        "code": {
            key: {"covered": count.covered, "total": count.total}
            for key, count in doc.code.items()
        },
        "functional": [
            {
                "fp_id": entry.fp_id,
                "bins_covered": entry.bins_covered,
                "bins_total": entry.bins_total,
            }
            for entry in doc.functional
        ],
    }


def parse_coverage(text: str) -> CoverageDocument:
    """Parse the neutral coverage JSON shape.

    Unknown fp_ids are accepted here; they are reconciled (with a warning)
    against the plan by the coverage optimizer.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CoverageSchemaError(f"coverage document is not valid JSON: {exc.msg}") from exc
    return coverage_from_dict(doc)


# --- adapters --------------------------------------------------------------------


def _check_outcome(outcome: SimulationOutcome) -> SimulationOutcome:
    """Enforce pass/fail consistency at the gateway boundary."""
    if outcome.status == PASS and outcome.errors:
        raise AdapterContractError(
            f"adapter reported pass with {len(outcome.errors)} error(s)"
        )
    if outcome.status == FAIL and not outcome.errors:
        outcome.errors.append(
            SimError(
                phase=SimPhase.RUN,
                component=None,
                message="simulation failed without a matching diagnostic",
            )
        )
    return outcome


class MockSimulator:
    """Pops scripted outcomes in order; deterministic across replays."""

    def __init__(self, records: list[dict], scenario_path: Path | None = None):
        if not isinstance(records, list):
            raise AdapterContractError("scenario file must hold a JSON array")
        self.records = records
        self.scenario_path = scenario_path
        self.cursor = 0
        self.runs_completed = 0

    @classmethod
    def from_config(cls, config: AdapterConfig) -> "MockSimulator":
        if config.scenario_path is None:
            raise AdapterContractError("mock adapter needs scenario_path")
        path = Path(config.scenario_path)
        try:
            records = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise AdapterContractError(f"scenario file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise AdapterContractError(f"scenario file is not valid JSON: {exc.msg}") from exc
        return cls(records, scenario_path=path)

    def run(self, tb: Testbench, ws: Workspace) -> SimulationOutcome:
        start = time.perf_counter()
        if self.cursor >= len(self.records):
            raise ScenarioExhaustedError(
                f"scenario exhausted after {self.cursor} scripted outcome(s)"
            )
        record = self.records[self.cursor]
        self.cursor += 1
        self.runs_completed += 1

        status = record.get("status")
        if status not in (PASS, FAIL):
            raise AdapterContractError(f"scripted status must be pass or fail, got {status!r}")
        errors = []
        for err_doc in record.get("errors", []):
            phase = SimPhase.from_name(err_doc.get("phase", "run"))
            message = err_doc.get("message", "")
            file_name = err_doc.get("file")
            line = err_doc.get("line")
            component = None
            if file_name:
                kind = tb.file_for(file_name)
                component = kind
            if component is None:
                component, _, _ = _attribute(message, tb)
            errors.append(
                SimError(
                    phase=phase,
                    component=component,
                    message=message,
                    file=file_name,
                    line=line,
                )
            )
        coverage = None
        if record.get("coverage") is not None:
            coverage = coverage_from_dict(record["coverage"])

        log_path = ws.sim_dir / f"run-{self.runs_completed}.log"
        log_lines = [record.get("log", f"mock simulation ({status})")]
        log_lines += [err.message for err in errors]
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")

        outcome = SimulationOutcome(
            status=status,
            errors=errors,
            log_path=log_path,
            coverage=coverage,
            wall_ms=int((time.perf_counter() - start) * 1000),
        )
        return _check_outcome(outcome)


class ExternalCommandAdapter:
    """Runs compile and simulate commands, captures output, parses the log."""

    def __init__(self, config: AdapterConfig):
        if not config.compile_cmd or not config.run_cmd:
            raise AdapterContractError("cmd adapter needs compile_cmd and run_cmd")
        self.config = config
        self.runs_completed = 0

    def _expand(self, template: str, files: list[str], top: str, outdir: Path) -> list[str]:
        argv: list[str] = []
        for token in shlex.split(template):
            if token == "{files}":
                argv.extend(files)
            else:
                argv.append(
                    token.replace("{files}", " ".join(files))
                    .replace("{top}", top)
                    .replace("{outdir}", str(outdir))
                )
        return argv

    def _execute(self, argv: list[str], cwd: Path) -> tuple[int, str]:
        if not argv:
            raise AdapterContractError("command template expanded to nothing")
        try:
            proc = subprocess.run(
                argv,
                cwd=cwd,
                capture_output=True,
                text=True,
                timeout=self.config.timeout_s,
            )
        except (FileNotFoundError, PermissionError, OSError) as exc:
            raise AdapterSpawnError(f"cannot start {argv[0]!r}: {exc}") from exc
        except subprocess.TimeoutExpired:
            return -1, f"command timed out after {self.config.timeout_s}s: {' '.join(argv)}"
        return proc.returncode, proc.stdout + proc.stderr

    def run(self, tb: Testbench, ws: Workspace) -> SimulationOutcome:
        start = time.perf_counter()
        self.runs_completed += 1
        files = [str(p) for p in ws.dut_sources]
        files += [str(ws.tb_dir / tb.components[k].file_name) for k in DEPENDENCY_ORDER]
        top = f"{tb.dut}_top"

        coverage_path = ws.sim_dir / "coverage.json"
        coverage_path.unlink(missing_ok=True)  # never trust a previous run's data

        log_chunks = []
        compile_rc, compile_out = self._execute(
            self._expand(self.config.compile_cmd, files, top, ws.sim_dir), ws.root
        )
        log_chunks.append(compile_out)
        run_rc = 0
        if compile_rc == 0:
            run_rc, run_out = self._execute(
                self._expand(self.config.run_cmd, files, top, ws.sim_dir), ws.root
            )
            log_chunks.append(run_out)

        log_text = "\n".join(log_chunks)
        log_path = ws.sim_dir / f"run-{self.runs_completed}.log"
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(log_text, encoding="utf-8")

        errors = parse_log(log_text, self.config.error_patterns, tb)
        if compile_rc != 0:
            errors.append(
                SimError(
                    phase=SimPhase.COMPILE,
                    component=None,
                    message=f"compile command exited {compile_rc}",
                )
            )
        elif run_rc != 0:
            errors.append(
                SimError(
                    phase=SimPhase.RUN,
                    component=None,
                    message=f"run command exited {run_rc}",
                )
            )

        coverage = None
        if not errors and coverage_path.is_file():
            coverage = parse_coverage(coverage_path.read_text(encoding="utf-8"))

        outcome = SimulationOutcome(
            status=PASS if not errors else FAIL,
            errors=errors,
            log_path=log_path,
            coverage=coverage,
            wall_ms=int((time.perf_counter() - start) * 1000),
        )
        return _check_outcome(outcome)


def make_adapter(config: AdapterConfig):
    if config.kind == "mock":
        return MockSimulator.from_config(config)
    if config.kind == "cmd":
        return ExternalCommandAdapter(config)
    raise AdapterContractError(f"unknown adapter kind {config.kind!r}")


def run_simulation(adapter, tb: Testbench, ws: Workspace) -> SimulationOutcome:
    """Run one simulation through whichever adapter was constructed."""
    return adapter.run(tb, ws)
