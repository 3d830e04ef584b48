"""Error-driven regeneration: simulate, group diagnostics, rebuild, retry.

One repair round walks the simulation phases in order, groups that phase's
errors by attributed component, and regenerates each erroring component once
per phase group: agent-generated kinds get their generation prompt back with
the verbatim error messages appended to the mistake-mitigation stage;
template kinds are deterministically re-rendered. Unattributed errors fall to
the testcase, whose stimulus is the usual culprit. The loop re-simulates
after each batch and stops on the first pass or when the round budget is
spent, so a run costs at most 1 + max_iters simulations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .agent_core import MISTAKE_MITIGATION, Backend, assemble_prompt, invoke, prompt_digest
from .errors import EmptyGenerationError, NoActionableErrorsError
from .rtl_iface import DutInterface
from .sim_gateway import (
    FAIL,
    PASS,
    SimError,
    SimPhase,
    SimulationOutcome,
    run_simulation,
)
from .tb_generator import (
    DEPENDENCY_ORDER,
    TEMPLATE_KINDS,
    ComponentKind,
    Provenance,
    Testbench,
    UvmComponent,
    assemble_testbench,
    component_file_name,
    generation_prompt_parts,
    generation_role,
    predecessors,
    render_template,
)
from .test_planner import TestPlan
from .workspace import DutConfig, Workspace

log = logging.getLogger(__name__)


@dataclass
class RoundRecord:
    round_no: int
    errors_seen: int
    components_regenerated: list[str]
    outcome: str  # PASS or FAIL after this round's re-simulation


@dataclass
class RepairReport:
    rounds: list[RoundRecord] = field(default_factory=list)
    final_status: str = FAIL
    simulations_run: int = 0

    @property
    def round_passed(self) -> int | None:
        """1-based simulation round in which the run first passed.

        1 means the initial build passed with no repairs; None means the run
        never passed.
        """
        if self.final_status != PASS:
            return None
        return 1 + len(self.rounds)

    def to_dict(self) -> dict:
        return {
            "final_status": self.final_status,
            "simulations_run": self.simulations_run,
            "rounds": [
                {
                    "round_no": r.round_no,
                    "errors_seen": r.errors_seen,
                    "components_regenerated": r.components_regenerated,
                    "outcome": r.outcome,
                }
                for r in self.rounds
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RepairReport":
        return cls(
            rounds=[
                RoundRecord(
                    round_no=r["round_no"],
                    errors_seen=r["errors_seen"],
                    components_regenerated=list(r["components_regenerated"]),
                    outcome=r["outcome"],
                )
                for r in doc.get("rounds", [])
            ],
            final_status=doc["final_status"],
            simulations_run=doc["simulations_run"],
        )

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path


def generation_role_for(kind: ComponentKind):
    """Total mapping from component kind to the agent role that rebuilds it."""
    return generation_role(kind)


class RepairEngine:
    """Holds the context a repair needs: interface, config, plan, backend."""

    def __init__(
        self,
        iface: DutInterface,
        cfg: DutConfig,
        plan: TestPlan,
        backend: Backend,
        allow_testcase_fallback: bool = True,
    ):
        self.iface = iface
        self.cfg = cfg
        self.plan = plan
        self.backend = backend
        self.allow_testcase_fallback = allow_testcase_fallback

    def _groups_for_phase(
        self, errors: list[SimError], phase: SimPhase
    ) -> list[tuple[ComponentKind, list[SimError]]]:
        groups: dict[ComponentKind, list[SimError]] = {}
        unattributed: list[SimError] = []
        for err in errors:
            if err.phase != phase:
                continue
            if err.component is not None:
                groups.setdefault(err.component, []).append(err)
            else:
                unattributed.append(err)
        if unattributed:
            if self.allow_testcase_fallback:
                groups.setdefault(ComponentKind.TESTCASE, []).extend(unattributed)
            else:
                log.warning(
                    "dropping %d unattributed error(s) in phase %s",
                    len(unattributed),
                    phase.name,
                )
        # Deterministic order; upstream kinds first so a downstream repair in
        # the same round embeds the freshly regenerated sources.
        return sorted(groups.items(), key=lambda item: DEPENDENCY_ORDER.index(item[0]))

    def _regenerate(
        self, tb: Testbench, kind: ComponentKind, errors: list[SimError], round_no: int
    ) -> UvmComponent:
        if kind in TEMPLATE_KINDS:
            fresh = render_template(kind, self.iface, self.cfg)
            return tb.install(fresh, reason=f"repair round {round_no}")

        deps = [tb.components[p] for p in predecessors(kind)]
        parts = generation_prompt_parts(kind, self.plan, deps, self.iface)
        error_lines = "\n".join(f"- {err.message}" for err in errors)
        parts[MISTAKE_MITIGATION] += (
            "\n\nThe previous version of this component produced these"
            " simulator diagnostics; eliminate every one of them:\n"
            f"{error_lines}"
        )
        prompt = assemble_prompt(generation_role(kind), parts)
        response = invoke(self.backend, prompt)
        code = response.extracted_code
        if code is None or not code.strip():
            raise EmptyGenerationError(f"repair of {kind.stem} returned no code")
        fresh = UvmComponent(
            kind=kind,
            file_name=component_file_name(tb.dut, kind),
            source=code,
            provenance=Provenance(
                origin="agent",
                role=prompt.role.key,
                prompt_digest=prompt_digest(prompt),
            ),
        )
        return tb.install(fresh, reason=f"repair round {round_no}")

    def fix_errors(
        self, outcome: SimulationOutcome, tb: Testbench, round_no: int = 1
    ) -> list[str]:
        """One batch repair: process phases in order, regenerate per group.

        Returns the stems of the regenerated components in processing order.
        Raises NoActionableErrorsError when nothing can be attributed and the
        testcase fallback is off, and ValueError when called on a pass.
        """
        if outcome.status == PASS:
            raise ValueError("fix_errors called on a passing outcome")
        regenerated: list[str] = []
        acted = False
        for phase in SimPhase:
            for kind, errors in self._groups_for_phase(outcome.errors, phase):
                self._regenerate(tb, kind, errors, round_no)
                regenerated.append(kind.stem)
                acted = True
        if not acted:
            raise NoActionableErrorsError(
                "no error could be attributed and testcase regeneration is disabled"
            )
        return regenerated

    def repair_loop(
        self,
        tb: Testbench,
        adapter,
        ws: Workspace,
        max_iters: int | None = None,
    ) -> tuple[Testbench, SimulationOutcome, RepairReport]:
        """Simulate, then repair-and-resimulate until pass or budget spent."""
        if max_iters is None:
            max_iters = self.cfg.max_repair_iters
        report = RepairReport()
        assemble_testbench(tb, ws.tb_dir)
        outcome = run_simulation(adapter, tb, ws)
        report.simulations_run = 1
        rounds = 0
        while outcome.status == FAIL and rounds < max_iters:
            rounds += 1
            errors_seen = len(outcome.errors)
            regenerated = self.fix_errors(outcome, tb, round_no=rounds)
            assemble_testbench(tb, ws.tb_dir)
            outcome = run_simulation(adapter, tb, ws)
            report.simulations_run += 1
            report.rounds.append(
                RoundRecord(
                    round_no=rounds,
                    errors_seen=errors_seen,
                    components_regenerated=regenerated,
                    outcome=outcome.status,
                )
            )
        report.final_status = outcome.status
        return tb, outcome, report
