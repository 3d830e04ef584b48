"""uvmforge: agent-driven UVM testbench generation with repair and coverage tuning."""

from .agent_core import (
    AgentPrompt,
    AgentResponse,
    AgentRole,
    BackendConfig,
    assemble_prompt,
    extract_code,
    invoke,
    make_backend,
)
from .coverage_optimizer import CoverageOptimizer, GapCategory, OptimizationState, coverage_pcts
from .errors import UvmForgeError
from .harness import (
    BenchManifest,
    RunMetrics,
    emit_reports,
    run_bench,
    run_pipeline,
    success_rate,
)
from .repair_engine import RepairEngine, RepairReport
from .rtl_iface import DutInterface, Port, classify_ports, extract_interface
from .sim_gateway import (
    AdapterConfig,
    CoverageDocument,
    SimError,
    SimPhase,
    SimulationOutcome,
    make_adapter,
    parse_log,
    run_simulation,
)
from .tb_generator import (
    ComponentKind,
    Testbench,
    UvmComponent,
    assemble_testbench,
    build_testbench,
    dependency_order,
    load_testbench,
)
from .test_planner import FunctionPoint, TestPlan, parse_test_plan, serialize_plan
from .workspace import DutConfig, Workspace, load_workspace

__version__ = "0.1.0"

__all__ = [
    "AgentPrompt",
    "AgentResponse",
    "AgentRole",
    "AdapterConfig",
    "BackendConfig",
    "BenchManifest",
    "ComponentKind",
    "CoverageDocument",
    "CoverageOptimizer",
    "DutConfig",
    "DutInterface",
    "FunctionPoint",
    "GapCategory",
    "OptimizationState",
    "Port",
    "RepairEngine",
    "RepairReport",
    "RunMetrics",
    "SimError",
    "SimPhase",
    "SimulationOutcome",
    "TestPlan",
    "Testbench",
    "UvmComponent",
    "UvmForgeError",
    "Workspace",
    "assemble_prompt",
    "assemble_testbench",
    "build_testbench",
    "classify_ports",
    "coverage_pcts",
    "dependency_order",
    "emit_reports",
    "extract_code",
    "extract_interface",
    "invoke",
    "load_testbench",
    "load_workspace",
    "make_adapter",
    "make_backend",
    "parse_log",
    "parse_test_plan",
    "run_bench",
    "run_pipeline",
    "run_simulation",
    "serialize_plan",
    "success_rate",
    "__version__",
]
