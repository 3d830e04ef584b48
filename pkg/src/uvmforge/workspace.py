"""Workspace loading: the DUT spec, the run config, and the RTL file set.

A workspace is a directory with three inputs and one output tree:

    <root>/spec.md       natural-language DUT specification (markdown)
    <root>/config.json   run configuration (see parse_config)
    <root>/rtl/*.v|*.sv  DUT sources
    <root>/out/          created on load: plan/, tb/, sim/, reports/
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigSchemaError,
    ConfigSyntaxError,
    MissingInputError,
    UnreadableSourceError,
)

log = logging.getLogger(__name__)

_IDENT_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_$")

OUT_SUBDIRS = ("plan", "tb", "sim", "reports")


def _is_identifier(name: str) -> bool:
    """True when name is a legal simple Verilog identifier."""
    if not name or name[0].isdigit() or name[0] == "$":
        return False
    return set(name) <= _IDENT_CHARS


@dataclass
class SpecDocument:
    """Raw spec text plus an index of its ATX headings.

    section_index holds (heading_text, byte_offset) pairs; each offset points
    at the leading '#' of the heading line in the UTF-8 encoding of raw_text.
    """

    raw_text: str
    section_index: list[tuple[str, int]] = field(default_factory=list)


@dataclass
class ClockSpec:
    signal: str
    period_ns: float


@dataclass
class ResetSpec:
    signal: str
    active_level: int
    duration_cycles: int


@dataclass
class CoverageTargets:
    code_pct: float = 90.0
    func_pct: float = 90.0


@dataclass
class DutConfig:
    """Validated contents of config.json."""

    top_module: str
    clock: ClockSpec
    reset: ResetSpec
    coverage_targets: CoverageTargets = field(default_factory=CoverageTargets)
    max_repair_iters: int = 2
    max_opt_iters: int = 2

    def to_json(self) -> str:
        doc = {
            "top_module": self.top_module,
            "clock": {"signal": self.clock.signal, "period_ns": self.clock.period_ns},
            "reset": {
                "signal": self.reset.signal,
                "active_level": self.reset.active_level,
                "duration_cycles": self.reset.duration_cycles,
            },
            "coverage_targets": {
                "code_pct": self.coverage_targets.code_pct,
                "func_pct": self.coverage_targets.func_pct,
            },
            "max_repair_iters": self.max_repair_iters,
            "max_opt_iters": self.max_opt_iters,
        }
        return json.dumps(doc, indent=2)


@dataclass
class Workspace:
    root: Path
    spec: SpecDocument
    config: DutConfig
    dut_sources: list[Path]
    out_dir: Path

    @property
    def plan_dir(self) -> Path:
        return self.out_dir / "plan"

    @property
    def tb_dir(self) -> Path:
        return self.out_dir / "tb"

    @property
    def sim_dir(self) -> Path:
        return self.out_dir / "sim"

    @property
    def reports_dir(self) -> Path:
        return self.out_dir / "reports"

    def read_sources(self) -> list[str]:
        """Return the text of every DUT source, in listed order."""
        return [_read_text(p) for p in self.dut_sources]


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableSourceError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise UnreadableSourceError(f"{path} is not UTF-8 text: {exc}") from exc


def index_spec(raw_text: str) -> SpecDocument:
    """Index ATX headings ('#'..'######') by UTF-8 byte offset.

    Heading lines inside fenced code blocks are not indexed. Offsets always
    point at the first '#' byte of the heading line.
    """
    index: list[tuple[str, int]] = []
    offset = 0
    in_fence = False
    for line in raw_text.splitlines(keepends=True):
        stripped = line.rstrip("\r\n")
        if stripped.lstrip().startswith("```"):
            in_fence = not in_fence
        elif not in_fence:
            hashes = len(stripped) - len(stripped.lstrip("#"))
            if 1 <= hashes <= 6 and stripped.startswith("#"):
                rest = stripped[hashes:]
                if rest == "" or rest[0] in " \t":
                    title = rest.strip().rstrip("#").strip()
                    index.append((title, offset))
        offset += len(line.encode("utf-8"))
    return SpecDocument(raw_text=raw_text, section_index=index)


def _require(doc: dict, key: str, kind, path: str):
    if key not in doc:
        raise ConfigSchemaError(f"missing field: {path}")
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigSchemaError(f"ill-typed field: {path} (expected number)")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigSchemaError(f"ill-typed field: {path} (expected integer)")
        return value
    if not isinstance(value, kind):
        raise ConfigSchemaError(f"ill-typed field: {path} (expected {kind.__name__})")
    return value


def parse_config(text: str) -> DutConfig:
    """Parse and validate config.json text.

    Required: top_module, clock.signal, clock.period_ns, reset.signal,
    reset.active_level (0 or 1), reset.duration_cycles. Optional with
    defaults: coverage_targets (90/90), max_repair_iters (2), max_opt_iters (2).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(
            f"config is not valid JSON at position {exc.pos}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigSchemaError("missing field: top_module")

    known = {
        "top_module", "clock", "reset", "coverage_targets",
        "max_repair_iters", "max_opt_iters",
    }
    for key in doc:
        if key not in known:
            log.warning("config: ignoring unknown key %r", key)

    top = _require(doc, "top_module", str, "top_module")
    if not _is_identifier(top):
        raise ConfigSchemaError("ill-typed field: top_module (not an identifier)")

    clock_doc = _require(doc, "clock", dict, "clock")
    clock = ClockSpec(
        signal=_require(clock_doc, "signal", str, "clock.signal"),
        period_ns=_require(clock_doc, "period_ns", float, "clock.period_ns"),
    )
    if not _is_identifier(clock.signal):
        raise ConfigSchemaError("ill-typed field: clock.signal (not an identifier)")
    if clock.period_ns <= 0:
        raise ConfigSchemaError("ill-typed field: clock.period_ns (must be positive)")

    reset_doc = _require(doc, "reset", dict, "reset")
    reset = ResetSpec(
        signal=_require(reset_doc, "signal", str, "reset.signal"),
        active_level=_require(reset_doc, "active_level", int, "reset.active_level"),
        duration_cycles=_require(reset_doc, "duration_cycles", int, "reset.duration_cycles"),
    )
    if not _is_identifier(reset.signal):
        raise ConfigSchemaError("ill-typed field: reset.signal (not an identifier)")
    if reset.active_level not in (0, 1):
        raise ConfigSchemaError("ill-typed field: reset.active_level (must be 0 or 1)")
    if reset.duration_cycles <= 0:
        raise ConfigSchemaError("ill-typed field: reset.duration_cycles (must be positive)")
    if reset.signal == clock.signal:
        raise ConfigSchemaError("ill-typed field: reset.signal (same as clock.signal)")

    targets = CoverageTargets()
    if "coverage_targets" in doc:
        tgt_doc = _require(doc, "coverage_targets", dict, "coverage_targets")
        if "code_pct" in tgt_doc:
            targets.code_pct = _require(tgt_doc, "code_pct", float, "coverage_targets.code_pct")
        if "func_pct" in tgt_doc:
            targets.func_pct = _require(tgt_doc, "func_pct", float, "coverage_targets.func_pct")
        for name, value in (("code_pct", targets.code_pct), ("func_pct", targets.func_pct)):
            if not 0.0 <= value <= 100.0:
                raise ConfigSchemaError(
                    f"ill-typed field: coverage_targets.{name} (must be in [0, 100])"
                )

    max_repair = 2
    if "max_repair_iters" in doc:
        max_repair = _require(doc, "max_repair_iters", int, "max_repair_iters")
        if max_repair < 0:
            raise ConfigSchemaError("ill-typed field: max_repair_iters (must be >= 0)")
    max_opt = 2
    if "max_opt_iters" in doc:
        max_opt = _require(doc, "max_opt_iters", int, "max_opt_iters")
        if max_opt < 0:
            raise ConfigSchemaError("ill-typed field: max_opt_iters (must be >= 0)")

    return DutConfig(
        top_module=top,
        clock=clock,
        reset=reset,
        coverage_targets=targets,
        max_repair_iters=max_repair,
        max_opt_iters=max_opt,
    )


def load_workspace(
    root: str | Path,
    spec_name: str = "spec.md",
    config_name: str = "config.json",
    rtl_dir: str = "rtl",
    out_name: str = "out",
) -> Workspace:
    """Load a workspace directory and create its output tree.

    Raises MissingInputError naming the first absent input, UnreadableSourceError
    for present-but-unreadable files, and the config errors from parse_config.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingInputError(f"workspace root {root} is not a directory")

    spec_path = root / spec_name
    if not spec_path.is_file():
        raise MissingInputError(f"missing input: {spec_path}")
    config_path = root / config_name
    if not config_path.is_file():
        raise MissingInputError(f"missing input: {config_path}")
    rtl_path = root / rtl_dir
    if not rtl_path.is_dir():
        raise MissingInputError(f"missing input: {rtl_path}/")

    sources = sorted(
        [p for p in rtl_path.iterdir() if p.suffix in (".v", ".sv") and p.is_file()],
        key=lambda p: p.name,
    )
    if not sources:
        raise MissingInputError(f"missing input: {rtl_path} holds no .v or .sv files")
    for src in sources:
        _read_text(src)  # fail early on unreadable or non-UTF-8 sources

    spec = index_spec(_read_text(spec_path))
    config = parse_config(_read_text(config_path))

    out_dir = root / out_name
    for sub in OUT_SUBDIRS:
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    return Workspace(
        root=root,
        spec=spec,
        config=config,
        dut_sources=sources,
        out_dir=out_dir,
    )
