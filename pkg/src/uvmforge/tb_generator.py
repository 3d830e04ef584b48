"""Testbench construction: eleven UVM components, three of them rendered from
embedded templates and eight generated by agents in dependency order.

The dependency graph is fixed. Each agent-generated component's prompt embeds
the full source of its direct predecessors, so generation order follows a
topological order of the graph; the file manifest keeps that order and ends
with the top module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import templates
from .agent_core import (
    DEPENDENCY_DEFINITION,
    FUNCTION_EXPECTATION,
    MISTAKE_MITIGATION,
    ROLE_CUSTOMISATION,
    AgentPrompt,
    AgentRole,
    Backend,
    assemble_prompt,
    invoke,
    prompt_digest,
)
from .errors import (
    EmptyGenerationError,
    IncompleteSetError,
    MissingDependencyError,
    UnclassifiedClockError,
)
from .rtl_iface import Direction, DutInterface, port_width, summarize_interface
from .test_planner import TestPlan
from .workspace import DutConfig

log = logging.getLogger(__name__)


class ComponentKind(Enum):
    INTERFACE = "interface"
    TOP = "top"
    SEQUENCER = "sequencer"
    SEQ_ITEM = "seq_item"
    SEQUENCE = "sequence"
    DRIVER = "driver"
    MONITOR = "monitor"
    AGENT = "agent"
    ENV = "env"
    SCOREBOARD = "scoreboard"
    TESTCASE = "testcase"

    @property
    def stem(self) -> str:
        return self.value


TEMPLATE_KINDS = frozenset(
    {ComponentKind.INTERFACE, ComponentKind.TOP, ComponentKind.SEQUENCER}
)
LLM_KINDS = frozenset(set(ComponentKind) - TEMPLATE_KINDS)

K = ComponentKind

DEP_EDGES: frozenset[tuple[ComponentKind, ComponentKind]] = frozenset({
    (K.INTERFACE, K.DRIVER),
    (K.INTERFACE, K.MONITOR),
    (K.INTERFACE, K.TOP),
    (K.SEQ_ITEM, K.SEQUENCER),
    (K.SEQ_ITEM, K.DRIVER),
    (K.SEQ_ITEM, K.MONITOR),
    (K.SEQ_ITEM, K.SEQUENCE),
    (K.SEQ_ITEM, K.SCOREBOARD),
    (K.SEQUENCER, K.AGENT),
    (K.DRIVER, K.AGENT),
    (K.MONITOR, K.AGENT),
    (K.AGENT, K.ENV),
    (K.SCOREBOARD, K.ENV),
    (K.SEQUENCE, K.TESTCASE),
    (K.ENV, K.TESTCASE),
    (K.ENV, K.TOP),
})

# Hand-frozen topological order. Kept as a constant (rather than computed)
# because the file manifest must end with TOP; tests verify it against
# DEP_EDGES and the full kind set.
DEPENDENCY_ORDER: tuple[ComponentKind, ...] = (
    K.INTERFACE,
    K.SEQ_ITEM,
    K.SEQUENCER,
    K.SEQUENCE,
    K.DRIVER,
    K.MONITOR,
    K.AGENT,
    K.SCOREBOARD,
    K.ENV,
    K.TESTCASE,
    K.TOP,
)


def dependency_order() -> list[ComponentKind]:
    return list(DEPENDENCY_ORDER)


def predecessors(kind: ComponentKind) -> list[ComponentKind]:
    """Direct predecessors of kind, in canonical generation order."""
    preds = {src for src, dst in DEP_EDGES if dst is kind}
    return [k for k in DEPENDENCY_ORDER if k in preds]


def component_file_name(dut: str, kind: ComponentKind) -> str:
    return f"{dut}_{kind.stem}.sv".lower()


def generation_role(kind: ComponentKind) -> AgentRole:
    """Generation role for any kind, template kinds included.

    For template kinds the role is a routing token only (repair re-renders
    them); prompts are never built for them, which is where the LLM-only
    rule is enforced.
    """
    return AgentRole.generation(kind.stem)


@dataclass(frozen=True)
class Provenance:
    origin: str  # "template" or "agent"
    template_id: str = ""
    role: str = ""
    prompt_digest: str = ""


@dataclass
class UvmComponent:
    kind: ComponentKind
    file_name: str
    source: str
    version: int = 1
    provenance: Provenance = field(default_factory=lambda: Provenance(origin="agent"))


@dataclass(frozen=True)
class HistoryEntry:
    kind: ComponentKind
    version: int
    reason: str


@dataclass
class Testbench:
    __test__ = False  # keeps pytest from collecting this as a test class

    dut: str
    components: dict[ComponentKind, UvmComponent] = field(default_factory=dict)
    history: list[HistoryEntry] = field(default_factory=list)

    @property
    def dep_graph(self) -> frozenset[tuple[ComponentKind, ComponentKind]]:
        return DEP_EDGES

    def install(self, component: UvmComponent, reason: str) -> UvmComponent:
        """Add or replace a component; versions bump by exactly one on
        replacement and every install appends one history entry."""
        existing = self.components.get(component.kind)
        component.version = existing.version + 1 if existing else 1
        self.components[component.kind] = component
        self.history.append(
            HistoryEntry(kind=component.kind, version=component.version, reason=reason)
        )
        return component

    def file_for(self, name: str) -> ComponentKind | None:
        for kind, comp in self.components.items():
            if comp.file_name == name:
                return kind
        return None


# --- template rendering ---------------------------------------------------------


def _format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else str(value)


def _signal_decls(iface: DutInterface) -> str:
    decls = []
    for port in iface.ports:
        rng = f"[{port.msb}:{port.lsb}] " if port_width(port) > 1 else ""
        decls.append(f"  logic {rng}{port.name};")
    return "\n".join(decls)


def _clocking_dirs(iface: DutInterface) -> str:
    lines = []
    for port in iface.ports:
        if port.is_clock or port.is_reset:
            continue
        if port.direction is Direction.INPUT:
            mode = "output"
        elif port.direction is Direction.OUTPUT:
            mode = "input"
        else:
            mode = "inout"
        lines.append(f"    {mode} {port.name};")
    return "\n".join(lines)


def _port_connections(iface: DutInterface) -> str:
    return ",\n".join(f"    .{port.name}(vif.{port.name})" for port in iface.ports)


def render_template(
    kind: ComponentKind, iface: DutInterface, cfg: DutConfig
) -> UvmComponent:
    """Render one of the three deterministic components.

    The interface must be classified (clock and reset flags set); rendering
    is byte-reproducible for identical inputs.
    """
    if kind not in TEMPLATE_KINDS:
        raise ValueError(f"{kind} is generated by an agent, not a template")
    clock = next((p for p in iface.ports if p.is_clock), None)
    reset = next((p for p in iface.ports if p.is_reset), None)
    if clock is None:
        raise UnclassifiedClockError("no port is flagged as the clock; classify first")
    if reset is None:
        raise UnclassifiedClockError("no port is flagged as the reset; classify first")

    dut = iface.module_name
    active = cfg.reset.active_level
    bindings = {
        "dut": dut,
        "top_module": cfg.top_module,
        "clock": clock.name,
        "reset": reset.name,
        "half_period": _format_number(cfg.clock.period_ns / 2),
        "reset_cycles": str(cfg.reset.duration_cycles),
        "reset_assert": f"1'b{active}",
        "reset_release": f"1'b{1 - active}",
        "signal_decls": _signal_decls(iface),
        "clocking_dirs": _clocking_dirs(iface),
        "port_connections": _port_connections(iface),
    }
    text = {
        ComponentKind.INTERFACE: templates.INTERFACE_TEMPLATE,
        ComponentKind.TOP: templates.TOP_TEMPLATE,
        ComponentKind.SEQUENCER: templates.SEQUENCER_TEMPLATE,
    }[kind]
    return UvmComponent(
        kind=kind,
        file_name=component_file_name(dut, kind),
        source=templates.fill(text, bindings),
        version=1,
        provenance=Provenance(
            origin="template",
            template_id=f"{kind.stem}.{templates.TEMPLATE_VERSION}",
        ),
    )


# --- generation prompts -----------------------------------------------------------

_RESPONSIBILITIES: dict[ComponentKind, str] = {
    K.SEQ_ITEM: (
        "Transaction class extending uvm_sequence_item. Declare one field per\n"
        "DUT-level stimulus or response datum, mark stimulus fields rand,\n"
        "register fields with uvm_object_utils field macros, and constrain\n"
        "values to legal ranges."
    ),
    K.SEQUENCE: (
        "Stimulus generator extending uvm_sequence parameterized on the\n"
        "transaction class. body() produces randomized items with\n"
        "start_item/finish_item, covering the stimulus conditions in the\n"
        "function points below."
    ),
    K.DRIVER: (
        "Pin-level driver extending uvm_driver parameterized on the\n"
        "transaction class. Pull items from seq_item_port, drive DUT input\n"
        "pins through the virtual interface on clock edges, hold pins inert\n"
        "while reset is asserted."
    ),
    K.MONITOR: (
        "Passive monitor extending uvm_monitor. Sample DUT pins through the\n"
        "virtual interface, reconstruct complete transactions, and broadcast\n"
        "them through a uvm_analysis_port. Never drive any pin."
    ),
    K.AGENT: (
        "Container extending uvm_agent. Build the sequencer, driver and\n"
        "monitor in build_phase; connect driver.seq_item_port to\n"
        "sequencer.seq_item_export in connect_phase; expose the monitor's\n"
        "analysis port."
    ),
    K.ENV: (
        "Environment extending uvm_env. Instantiate the agent and the\n"
        "scoreboard, and connect the monitor's analysis port to the\n"
        "scoreboard's analysis implementation."
    ),
    K.SCOREBOARD: (
        "Checker extending uvm_scoreboard. Receive observed transactions\n"
        "through an analysis implementation, compute expected behavior from\n"
        "the function points below, and report mismatches with uvm_error."
    ),
    K.TESTCASE: (
        "Test extending uvm_test. Build the environment, fetch the virtual\n"
        "interface from uvm_config_db, and in run_phase raise an objection,\n"
        "start the sequence on the agent's sequencer, then drop the objection."
    ),
}

_COMMON_PITFALLS = (
    "- Use exactly the class and file names given in the dependency section;\n"
    "  do not invent abbreviated handle names that differ between components.\n"
    "- Register every class with the proper utils macro and call super.new.\n"
    "- Do not redeclare or shadow signals that live in the virtual interface."
)

_KIND_PITFALLS: dict[ComponentKind, str] = {
    K.SEQ_ITEM: (
        "- Give every field an explicit width matching the DUT port it feeds.\n"
        "- Do not reference the virtual interface here; items carry data only."
    ),
    K.SEQUENCE: (
        "- Randomize via start_item/finish_item, never drive pins directly.\n"
        "- Check randomize() return values."
    ),
    K.DRIVER: (
        "- Drive only DUT input pins; never assign to DUT outputs.\n"
        "- Wait for reset deassertion before the first transaction.\n"
        "- Fetch the virtual interface from uvm_config_db in build_phase."
    ),
    K.MONITOR: (
        "- Sample only; a monitor that drives pins corrupts the test.\n"
        "- Do not sample while reset is asserted.\n"
        "- Declare the analysis port with new() in the constructor."
    ),
    K.AGENT: (
        "- Connect driver to sequencer in connect_phase, not build_phase.\n"
        "- Use create() factory calls, not new(), for child components."
    ),
    K.ENV: (
        "- Connect the monitor's analysis port to the scoreboard's imp;\n"
        "  a missing connection silently disables checking."
    ),
    K.SCOREBOARD: (
        "- If more than one analysis stream arrives, declare distinct\n"
        "  uvm_analysis_imp_decl suffixes before the class body.\n"
        "- Account for reset: discard transactions observed during reset."
    ),
    K.TESTCASE: (
        "- Set the virtual interface for children before build_phase ends.\n"
        "- Raise and drop objections around the sequence, or the run ends\n"
        "  at time zero."
    ),
}

_PLAN_BEARING_KINDS = frozenset({K.SEQ_ITEM, K.SEQUENCE, K.SCOREBOARD, K.TESTCASE})


def _format_points(plan: TestPlan) -> str:
    chunks = []
    for point in plan.points:
        lines = [f"{point.id}: {point.description}"]
        if point.stimulus_conditions:
            lines.append(f"  stimulus: {point.stimulus_conditions}")
        if point.observability:
            lines.append(f"  observe: {point.observability}")
        if point.coverage_goal:
            lines.append(f"  coverage: {point.coverage_goal}")
        chunks.append("\n".join(lines))
    return "\n".join(chunks)


def generation_prompt_parts(
    kind: ComponentKind,
    plan: TestPlan,
    deps: list[UvmComponent],
    iface: DutInterface,
) -> dict[str, str]:
    """Stage bodies for a generation prompt; raises when a predecessor of
    kind is not present in deps."""
    if kind not in LLM_KINDS:
        raise ValueError(f"{kind} is template-rendered; no generation prompt exists")
    needed = predecessors(kind)
    have = {dep.kind for dep in deps}
    for pred in needed:
        if pred not in have:
            raise MissingDependencyError(
                f"{kind.stem} generation needs {pred.stem}, which was not supplied"
            )
    for dep in deps:
        if dep.kind not in needed:
            log.warning("generation %s: ignoring extra dependency %s", kind.stem, dep.kind.stem)

    dut = iface.module_name
    role_text = (
        "Act as an IC verification expert writing SystemVerilog UVM code.\n"
        f"Produce the complete {dut}_{kind.stem} component for the {dut} DUT.\n"
        "Answer with a single fenced systemverilog code block containing the\n"
        "whole file, nothing else."
    )

    ordered_deps = sorted(deps, key=lambda d: DEPENDENCY_ORDER.index(d.kind))
    dep_chunks = [
        "Naming contract: the component class and file must be named\n"
        f"{dut}_{kind.stem} / {component_file_name(dut, kind)}."
    ]
    if ordered_deps:
        for dep in ordered_deps:
            if dep.kind in needed:
                dep_chunks.append(
                    f"--- {dep.file_name} (version {dep.version}) ---\n{dep.source}"
                )
    else:
        dep_chunks.append("This component has no upstream component dependencies.")
    dependency_text = "\n\n".join(dep_chunks)

    expectation_chunks = [_RESPONSIBILITIES[kind]]
    expectation_chunks.append("DUT interface:\n" + summarize_interface(iface))
    if kind in _PLAN_BEARING_KINDS and plan.points:
        expectation_chunks.append("Function points to honor:\n" + _format_points(plan))
    expectation_text = "\n\n".join(expectation_chunks)

    mitigation_text = "Avoid these recurring defects:\n" + "\n".join(
        [_COMMON_PITFALLS, _KIND_PITFALLS[kind]]
    )

    return {
        ROLE_CUSTOMISATION: role_text,
        DEPENDENCY_DEFINITION: dependency_text,
        FUNCTION_EXPECTATION: expectation_text,
        MISTAKE_MITIGATION: mitigation_text,
    }


def build_generation_prompt(
    kind: ComponentKind,
    plan: TestPlan,
    deps: list[UvmComponent],
    iface: DutInterface,
) -> AgentPrompt:
    parts = generation_prompt_parts(kind, plan, deps, iface)
    return assemble_prompt(generation_role(kind), parts)


@dataclass
class GenerationContext:
    iface: DutInterface
    cfg: DutConfig
    plan: TestPlan
    deps: list[UvmComponent] = field(default_factory=list)


def generate_component(
    kind: ComponentKind, ctx: GenerationContext, backend: Backend
) -> UvmComponent:
    """Produce one component: template-rendered or agent-generated."""
    if kind in TEMPLATE_KINDS:
        return render_template(kind, ctx.iface, ctx.cfg)
    prompt = build_generation_prompt(kind, ctx.plan, ctx.deps, ctx.iface)
    response = invoke(backend, prompt)
    code = response.extracted_code
    if code is None or not code.strip():
        raise EmptyGenerationError(
            f"agent returned no code for {kind.stem} "
            f"(response starts: {response.raw_text[:80]!r})"
        )
    return UvmComponent(
        kind=kind,
        file_name=component_file_name(ctx.iface.module_name, kind),
        source=code,
        version=1,
        provenance=Provenance(
            origin="agent",
            role=prompt.role.key,
            prompt_digest=prompt_digest(prompt),
        ),
    )


def build_testbench(
    iface: DutInterface, cfg: DutConfig, plan: TestPlan, backend: Backend
) -> Testbench:
    """Generate all eleven components in dependency order."""
    tb = Testbench(dut=iface.module_name)
    for kind in DEPENDENCY_ORDER:
        deps = [tb.components[p] for p in predecessors(kind)]
        ctx = GenerationContext(iface=iface, cfg=cfg, plan=plan, deps=deps)
        tb.install(generate_component(kind, ctx, backend), reason="initial generation")
    return tb


def assemble_testbench(tb: Testbench, tb_dir: Path) -> list[Path]:
    """Write every component plus a files.f manifest in dependency order.

    Raises IncompleteSetError when any of the eleven kinds is missing.
    """
    missing = [k.stem for k in DEPENDENCY_ORDER if k not in tb.components]
    if missing:
        raise IncompleteSetError(f"testbench incomplete, missing: {', '.join(missing)}")
    tb_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in DEPENDENCY_ORDER:
        comp = tb.components[kind]
        path = tb_dir / comp.file_name
        path.write_text(comp.source, encoding="utf-8")
        written.append(path)
    manifest = tb_dir / "files.f"
    manifest.write_text(
        "\n".join(tb.components[k].file_name for k in DEPENDENCY_ORDER) + "\n",
        encoding="utf-8",
    )
    written.append(manifest)
    return written


def load_testbench(tb_dir: Path, dut: str) -> Testbench:
    """Reconstruct a testbench from files previously written to tb_dir.

    Provenance digests are unknown for reloaded agent components and left
    empty; versions restart at 1.
    """
    tb = Testbench(dut=dut)
    for kind in DEPENDENCY_ORDER:
        path = tb_dir / component_file_name(dut, kind)
        if not path.is_file():
            raise IncompleteSetError(f"missing testbench file: {path}")
        if kind in TEMPLATE_KINDS:
            prov = Provenance(
                origin="template",
                template_id=f"{kind.stem}.{templates.TEMPLATE_VERSION}",
            )
        else:
            prov = Provenance(origin="agent", role=generation_role(kind).key)
        tb.install(
            UvmComponent(
                kind=kind,
                file_name=path.name,
                source=path.read_text(encoding="utf-8"),
                provenance=prov,
            ),
            reason="loaded from disk",
        )
    return tb
