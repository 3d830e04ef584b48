"""Test-plan extraction: spec + interface in, structured function points out.

The plan file format is line-oriented so agents can emit it reliably:

    [FUNCTION_POINT]
    description: first line of the value
      second line, continued by two-space indentation
    stimulus_conditions: ...
    observability: ...
    coverage_goal: ...
    draft_testcase: ...

Only description is mandatory. Unknown lines inside a block are appended to
the preceding field rather than rejected, because agents ramble. Markers
inside column-0 code fences do not open blocks. Two comment lines
(# spec_digest:, # created_at:) may precede the first block; the serializer
emits them so a serialized plan parses back to an equal TestPlan.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .agent_core import (
    OUTPUT_TEMPLATE_CONSTRUCTION,
    ROLE_CUSTOMISATION,
    TEST_PLAN_FORMULATION,
    AgentPrompt,
    AgentRole,
    Backend,
    assemble_prompt,
    invoke,
)
from .errors import EmptyPlanError, MalformedPlanError
from .rtl_iface import DutInterface, summarize_interface
from .workspace import SpecDocument

log = logging.getLogger(__name__)

MARKER = "[FUNCTION_POINT]"
FIELDS = (
    "description",
    "stimulus_conditions",
    "observability",
    "coverage_goal",
    "draft_testcase",
)
_KEY_RE = re.compile(r"^(description|stimulus_conditions|observability|coverage_goal|draft_testcase):(?: (.*))?$")


@dataclass
class FunctionPoint:
    id: str
    description: str
    stimulus_conditions: str = ""
    observability: str = ""
    coverage_goal: str = ""
    draft_testcase: str = ""


@dataclass
class TestPlan:
    __test__ = False  # keeps pytest from collecting this as a test class

    points: list[FunctionPoint] = field(default_factory=list)
    spec_digest: str = ""
    created_at: str = ""


def spec_digest_of(spec: SpecDocument) -> str:
    return hashlib.sha256(spec.raw_text.encode("utf-8")).hexdigest()


def parse_test_plan(text: str) -> TestPlan:
    """Parse plan-grammar text. Ids are assigned positionally (FP-1, FP-2...).

    Raises EmptyPlanError when no block markers occur outside fences, and
    MalformedPlanError when a block has no usable description.
    """
    spec_digest = ""
    created_at = ""
    blocks: list[dict[str, str]] = []
    current: dict[str, str] | None = None
    current_field: str | None = None
    in_fence = False

    def _append_content(line: str) -> None:
        nonlocal current
        if current is not None and current_field is not None:
            current[current_field] += "\n" + line

    for line in text.splitlines():
        if line.startswith("```"):
            in_fence = not in_fence
            _append_content(line)
            continue
        if in_fence:
            _append_content(line)
            continue
        if line.rstrip() == MARKER:
            current = {}
            blocks.append(current)
            current_field = None
            continue
        if current is None:
            if line.startswith("# spec_digest:"):
                spec_digest = line[len("# spec_digest:"):].strip()
            elif line.startswith("# created_at:"):
                created_at = line[len("# created_at:"):].strip()
            continue
        if line.startswith("  ") and current_field is not None:
            current[current_field] += "\n" + line[2:]
            continue
        key_match = _KEY_RE.match(line)
        if key_match:
            current_field = key_match.group(1)
            current[current_field] = key_match.group(2) or ""
            continue
        _append_content(line)

    if not blocks:
        raise EmptyPlanError("no [FUNCTION_POINT] blocks found")

    points = []
    for number, block in enumerate(blocks, start=1):
        if not block.get("description", "").strip():
            raise MalformedPlanError(f"block {number} has no description")
        points.append(
            FunctionPoint(
                id=f"FP-{number}",
                description=block.get("description", ""),
                stimulus_conditions=block.get("stimulus_conditions", ""),
                observability=block.get("observability", ""),
                coverage_goal=block.get("coverage_goal", ""),
                draft_testcase=block.get("draft_testcase", ""),
            )
        )
    return TestPlan(points=points, spec_digest=spec_digest, created_at=created_at)


def serialize_plan(plan: TestPlan) -> str:
    """Render a plan back into the plan grammar (inverse of parse_test_plan)."""
    lines: list[str] = []
    if plan.spec_digest:
        lines.append(f"# spec_digest: {plan.spec_digest}")
    if plan.created_at:
        lines.append(f"# created_at: {plan.created_at}")
    for point in plan.points:
        lines.append(MARKER)
        for key in FIELDS:
            value = getattr(point, key)
            if value == "":
                continue
            value_lines = value.split("\n")
            lines.append(f"{key}: {value_lines[0]}")
            lines.extend(f"  {rest}" for rest in value_lines[1:])
    return "\n".join(lines) + "\n"


def write_plan(plan: TestPlan, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_plan(plan), encoding="utf-8")
    return path


def read_plan(path: Path) -> TestPlan:
    return parse_test_plan(path.read_text(encoding="utf-8"))


_GRAMMAR_HELP = f"""Write the plan as plain text, one block per function point.
Each block starts with a line containing exactly {MARKER} and is followed by
`key: value` lines. Continue a multi-line value by indenting continuation
lines with two spaces. Keys, in this order when present:

  description          what the function point verifies (mandatory)
  stimulus_conditions  the stimulus needed to exercise it
  observability        where the effect is observable (signals, transactions)
  coverage_goal        the coverage bins or conditions that close it
  draft_testcase       a short sketch of a directed or constrained-random test

Example:

{MARKER}
description: Byte is transmitted LSB-first after start bit
stimulus_conditions: drive tx_valid with random payloads over 100 frames
observability: serial line transitions relative to the bit clock
coverage_goal: all payload bit patterns toggled on the line
draft_testcase: constrained-random frames with back-to-back valid pulses
"""


def build_analysis_prompt(spec: SpecDocument, iface: DutInterface) -> AgentPrompt:
    """Prompt for the analysis agent: spec + interface -> test plan text."""
    role_text = (
        "Act as an IC verification engineer. You are reading the design\n"
        "specification of an RTL module and preparing its verification plan.\n"
        "Extract, with engineering precision: signal dataflow, control\n"
        "dependencies, input/output interaction patterns, and state\n"
        "transitions. Every observable behavior becomes a function point."
    )
    formulation_text = (
        "Derive the complete list of function points for the design below.\n"
        "For each one, state the stimulus conditions that exercise it, where\n"
        "its effect can be observed, and a measurable coverage goal.\n\n"
        "=== DESIGN SPECIFICATION ===\n"
        f"{spec.raw_text}\n"
        "=== DUT INTERFACE ===\n"
        f"{summarize_interface(iface)}\n"
    )
    return assemble_prompt(
        AgentRole.analysis(),
        {
            ROLE_CUSTOMISATION: role_text,
            TEST_PLAN_FORMULATION: formulation_text,
            OUTPUT_TEMPLATE_CONSTRUCTION: _GRAMMAR_HELP,
        },
    )


def _warn_on_thin_points(plan: TestPlan) -> None:
    for point in plan.points:
        missing = [
            key for key in ("stimulus_conditions", "observability", "coverage_goal")
            if not getattr(point, key).strip()
        ]
        if missing:
            log.warning("plan %s: missing %s", point.id, ", ".join(missing))


def generate_test_plan(
    spec: SpecDocument, iface: DutInterface, backend: Backend
) -> TestPlan:
    """Run the analysis agent and return the parsed, stamped plan."""
    prompt = build_analysis_prompt(spec, iface)
    response = invoke(backend, prompt)
    plan = parse_test_plan(response.raw_text)
    plan.spec_digest = spec_digest_of(spec)
    plan.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    _warn_on_thin_points(plan)
    return plan
