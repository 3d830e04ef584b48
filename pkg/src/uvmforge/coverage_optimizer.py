"""Coverage closure: find gaps, ask for better stimulus, keep only wins.

Each iteration classifies the shortfall into three gap categories, prompts
the optimization agent for a supplementary sequence (and optionally an
updated testcase), installs it on a copy of the best testbench, and
re-simulates through the repair loop. An attempt is kept only when it passes
with strictly better coverage in at least one dimension; everything else is
reverted, so the best testbench only ever improves.
"""

from __future__ import annotations

import copy
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .agent_core import (
    COVERAGE_ANALYSIS,
    MISTAKE_MITIGATION,
    ROLE_CUSTOMISATION,
    STIMULUS_SUPPLEMENT,
    AgentPrompt,
    AgentResponse,
    AgentRole,
    Backend,
    assemble_prompt,
    extract_code_blocks,
    invoke,
)
from .errors import NoGapsError
from .rtl_iface import DutInterface
from .sim_gateway import PASS, CoverageDocument
from .repair_engine import RepairEngine
from .tb_generator import (
    ComponentKind,
    Provenance,
    Testbench,
    UvmComponent,
    assemble_testbench,
    component_file_name,
)
from .test_planner import TestPlan
from .workspace import Workspace

log = logging.getLogger(__name__)


class GapCategory(Enum):
    LOGIC_REGION = "logic_region"
    TRANSACTION_STAGE = "transaction_stage"
    STIMULUS_DEPENDENCY = "stimulus_dependency"


@dataclass
class CoverageGap:
    category: GapCategory
    target: str
    fp_ids: list[str]
    evidence: str
    uncovered: int = 0


@dataclass
class IterationRecord:
    attempted_cov: tuple[float, float] | None
    accepted: bool
    reverted: bool


@dataclass
class OptimizationState:
    best_tb: Testbench
    best_doc: CoverageDocument | None
    best_cov: tuple[float, float]
    target: tuple[float, float]
    iteration: int = 0
    trace: list[IterationRecord] = field(default_factory=list)

    @property
    def target_met(self) -> bool:
        return self.best_cov[0] >= self.target[0] and self.best_cov[1] >= self.target[1]


def coverage_pcts(doc: CoverageDocument) -> tuple[float, float]:
    """Overall (code_pct, func_pct); count-weighted across code categories.

    A zero denominator is vacuously 100.0 and logged, because "no coverage
    points exist" must not read as "nothing was covered".
    """
    code_total = sum(c.total for c in doc.code.values())
    code_covered = sum(c.covered for c in doc.code.values())
    if code_total == 0:
        log.warning("coverage: no code coverage points; reporting 100.0")
        code_pct = 100.0
    else:
        code_pct = 100.0 * code_covered / code_total
    func_total = sum(f.bins_total for f in doc.functional)
    func_covered = sum(f.bins_covered for f in doc.functional)
    if func_total == 0:
        log.warning("coverage: no functional bins; reporting 100.0")
        func_pct = 100.0
    else:
        func_pct = 100.0 * func_covered / func_total
    return code_pct, func_pct


# --- gap analysis -----------------------------------------------------------------


def load_gap_keywords(path: Path | None = None) -> dict:
    """Load the gap-classification keyword lists (shipped default or override)."""
    if path is not None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    else:
        doc = json.loads(
            resources.files("uvmforge").joinpath("data/gap_keywords.json").read_text("utf-8")
        )
    return doc


def _matches_any(text: str, keywords: list[str]) -> bool:
    lowered = text.lower()
    for keyword in keywords:
        if re.search(rf"\b{re.escape(keyword.lower())}\b", lowered):
            return True
    return False


def _classify_point(text: str, keywords: dict) -> GapCategory:
    if _matches_any(text, keywords.get("transaction_stage", [])):
        return GapCategory.TRANSACTION_STAGE
    if _matches_any(text, keywords.get("stimulus_dependency", [])):
        return GapCategory.STIMULUS_DEPENDENCY
    return GapCategory(keywords.get("default", "stimulus_dependency"))


def analyze_gaps(
    cov: CoverageDocument,
    plan: TestPlan,
    iface: DutInterface,
    keywords: dict | None = None,
) -> list[CoverageGap]:
    """Turn coverage shortfall into categorized gaps, worst first.

    Functional entries below 100% classify by their plan point's wording;
    code counters below 100% become one LogicRegion gap each. Coverage
    entries naming unknown fp_ids are kept but warned about.
    """
    if keywords is None:
        keywords = load_gap_keywords()
    by_id = {point.id: point for point in plan.points}
    gaps: list[CoverageGap] = []

    for entry in cov.functional:
        point = by_id.get(entry.fp_id)
        if point is None:
            log.warning("coverage names unknown function point %s", entry.fp_id)
        if entry.bins_covered >= entry.bins_total:
            continue
        uncovered = entry.bins_total - entry.bins_covered
        text = ""
        if point is not None:
            text = f"{point.description} {point.stimulus_conditions}"
        category = _classify_point(text, keywords) if text.strip() else GapCategory(
            keywords.get("default", "stimulus_dependency")
        )
        first_line = (point.description.split("\n")[0] if point else entry.fp_id)
        gaps.append(
            CoverageGap(
                category=category,
                target=f"{entry.fp_id}: {first_line}",
                fp_ids=[entry.fp_id],
                evidence=f"{uncovered} of {entry.bins_total} bins uncovered",
                uncovered=uncovered,
            )
        )

    for key, count in cov.code.items():
        if count.covered >= count.total:
            continue
        uncovered = count.total - count.covered
        gaps.append(
            CoverageGap(
                category=GapCategory.LOGIC_REGION,
                target=f"{key} coverage of {iface.module_name}",
                fp_ids=[],
                evidence=f"{uncovered} of {count.total} {key} targets uncovered",
                uncovered=uncovered,
            )
        )

    gaps.sort(key=lambda gap: -gap.uncovered)
    return gaps


def excerpt_rtl(rtl_text: str, locus: str, context_lines: int = 20) -> str:
    """A window of RTL around the first line containing locus.

    Falls back to the head of the file when the locus does not occur.
    """
    lines = rtl_text.split("\n")
    center = 0
    for idx, line in enumerate(lines):
        if locus and locus in line:
            center = idx
            break
    lo = max(0, center - context_lines)
    hi = min(len(lines), center + context_lines + 1)
    return "\n".join(lines[lo:hi])


_GAP_EXPLANATIONS = {
    GapCategory.LOGIC_REGION: (
        "a code region of the DUT is not fully exercised; craft stimulus that"
        " steers execution into it"
    ),
    GapCategory.TRANSACTION_STAGE: (
        "a stage of the transaction flow is never reached; order the stimulus"
        " so the flow progresses through it"
    ),
    GapCategory.STIMULUS_DEPENDENCY: (
        "a required combination of conditions never co-occurs; constrain the"
        " stimulus so they coincide"
    ),
}


def build_optimization_prompt(
    gaps: list[CoverageGap],
    dut_excerpt: str,
    plan: TestPlan,
) -> AgentPrompt:
    """Prompt the optimization agent with one block per gap."""
    if not gaps:
        raise NoGapsError("no coverage gaps to optimize")

    role_text = (
        "Act as an IC verification expert closing coverage on a UVM bench.\n"
        "You refine stimulus only: the structural components already pass\n"
        "simulation and must not be restructured."
    )

    gap_blocks = []
    for number, gap in enumerate(gaps, start=1):
        lines = [
            f"GAP {number} [{gap.category.value}] {gap.target}",
            f"  evidence: {gap.evidence}",
        ]
        if gap.fp_ids:
            lines.append(f"  function points: {', '.join(gap.fp_ids)}")
        lines.append(f"  explanation: {_GAP_EXPLANATIONS[gap.category]}")
        gap_blocks.append("\n".join(lines))
    analysis_text = (
        "Relevant DUT source:\n"
        f"{dut_excerpt}\n\n"
        "Uncovered targets, worst first:\n\n" + "\n\n".join(gap_blocks)
    )

    supplement_text = (
        "Write an updated sequence class (same class and file name as the\n"
        "existing one) whose stimulus closes the gaps above. Concrete\n"
        "constraints to apply where relevant: vary payload sizes across the\n"
        "full legal range, drive boundary values, trigger edge-case events\n"
        "such as interrupts or aborts mid-transaction, issue back-to-back\n"
        "transactions without idle cycles, and force the listed condition\n"
        "combinations to coincide. If reaching a gap needs a different test\n"
        "flow, also emit an updated testcase class in a second code block."
    )

    mitigation_text = (
        "The supplement must compile and run cleanly: no syntactic errors,\n"
        "no functionally invalid stimulus (respect the constraints in the\n"
        "function points), keep all existing class names, and do not touch\n"
        "components other than the sequence and, if needed, the testcase."
    )

    return assemble_prompt(
        AgentRole.optimization(),
        {
            ROLE_CUSTOMISATION: role_text,
            COVERAGE_ANALYSIS: analysis_text,
            STIMULUS_SUPPLEMENT: supplement_text,
            MISTAKE_MITIGATION: mitigation_text,
        },
    )


def split_supplement(response: AgentResponse) -> tuple[str | None, str | None]:
    """Pull (sequence_code, testcase_code) out of an optimization response."""
    sequence_code = None
    testcase_code = None
    for block in extract_code_blocks(response.raw_text):
        if not block.strip():
            continue
        if re.search(r"extends\s+uvm_test\b", block):
            testcase_code = testcase_code or block
        elif re.search(r"extends\s+uvm_sequence\b", block):
            sequence_code = sequence_code or block
        elif sequence_code is None:
            sequence_code = block
    return sequence_code, testcase_code


class CoverageOptimizer:
    """Owns the supplement loop and the context it needs."""

    def __init__(
        self,
        plan: TestPlan,
        iface: DutInterface,
        repair: RepairEngine,
        backend: Backend,
        rtl_text: str,
        max_iters: int = 2,
        keywords: dict | None = None,
    ):
        self.plan = plan
        self.iface = iface
        self.repair = repair
        self.backend = backend
        self.rtl_text = rtl_text
        self.max_iters = max_iters
        self.keywords = keywords

    def _excerpt_for(self, gaps: list[CoverageGap]) -> str:
        locus = f"module {self.iface.module_name}"
        return excerpt_rtl(self.rtl_text, locus)

    def _install_supplement(
        self, tb: Testbench, sequence_code: str, testcase_code: str | None, round_no: int
    ) -> None:
        reason = f"supplement round {round_no}"
        tb.install(
            UvmComponent(
                kind=ComponentKind.SEQUENCE,
                file_name=component_file_name(tb.dut, ComponentKind.SEQUENCE),
                source=sequence_code,
                provenance=Provenance(origin="agent", role=AgentRole.optimization().key),
            ),
            reason=reason,
        )
        if testcase_code:
            tb.install(
                UvmComponent(
                    kind=ComponentKind.TESTCASE,
                    file_name=component_file_name(tb.dut, ComponentKind.TESTCASE),
                    source=testcase_code,
                    provenance=Provenance(origin="agent", role=AgentRole.optimization().key),
                ),
                reason=reason,
            )

    def supplement_loop(
        self, state: OptimizationState, adapter, ws: Workspace
    ) -> OptimizationState:
        """Iterate until the target is met or the budget is spent.

        Every attempt runs on a copy of the best testbench; the best is
        replaced only by a passing, strictly-better attempt, so a failed or
        tied attempt reverts by construction.
        """
        if state.best_doc is None:
            raise ValueError("supplement loop needs an initial coverage document")

        while not state.target_met and state.iteration < self.max_iters:
            state.iteration += 1
            gaps = analyze_gaps(state.best_doc, self.plan, self.iface, self.keywords)
            if not gaps:
                log.warning("coverage below target but no gaps identified; stopping")
                break
            prompt = build_optimization_prompt(gaps, self._excerpt_for(gaps), self.plan)
            response = invoke(self.backend, prompt)
            sequence_code, testcase_code = split_supplement(response)
            if sequence_code is None or not sequence_code.strip():
                log.warning("supplement round %d produced no sequence", state.iteration)
                state.trace.append(
                    IterationRecord(attempted_cov=None, accepted=False, reverted=True)
                )
                continue

            work = copy.deepcopy(state.best_tb)
            self._install_supplement(work, sequence_code, testcase_code, state.iteration)
            work, outcome, _report = self.repair.repair_loop(work, adapter, ws)
            if outcome.status != PASS or outcome.coverage is None:
                state.trace.append(
                    IterationRecord(attempted_cov=None, accepted=False, reverted=True)
                )
                continue

            attempted = coverage_pcts(outcome.coverage)
            improved = attempted[0] > state.best_cov[0] or attempted[1] > state.best_cov[1]
            if improved:
                state.best_tb = work
                state.best_doc = outcome.coverage
                state.best_cov = (
                    max(state.best_cov[0], attempted[0]),
                    max(state.best_cov[1], attempted[1]),
                )
                state.trace.append(
                    IterationRecord(attempted_cov=attempted, accepted=True, reverted=False)
                )
            else:
                state.trace.append(
                    IterationRecord(attempted_cov=attempted, accepted=False, reverted=True)
                )
        # A rejected attempt may have left its files in tb_dir; put the best
        # testbench back on disk before handing control on.
        assemble_testbench(state.best_tb, ws.tb_dir)
        return state
