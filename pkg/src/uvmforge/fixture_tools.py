"""Canned agent responses and fixture recording for the mock backend.

The mock backend replays files named <role>-<sha256-of-prompt>.txt, so
fixtures can only be produced by building the exact prompts the pipeline will
build. record_fixtures replays the planning prompt and then the generation
sequence in dependency order, writing one fixture per agent call. Prompts
carry no timestamps, which is what makes this replay reproducible.
"""

from __future__ import annotations

import logging
from pathlib import Path

from .agent_core import (
    AgentPrompt,
    AgentResponse,
    extract_code,
    prompt_digest,
)
from .errors import MockFixtureMissingError
from .rtl_iface import classify_ports, extract_interface
from .tb_generator import (
    DEPENDENCY_ORDER,
    TEMPLATE_KINDS,
    ComponentKind,
    Provenance,
    UvmComponent,
    build_generation_prompt,
    component_file_name,
    predecessors,
    render_template,
)
from .test_planner import build_analysis_prompt, parse_test_plan
from .workspace import Workspace, load_workspace

log = logging.getLogger(__name__)

_PLAN_TEXT = """Here is the verification plan for the {dut} DUT.

[FUNCTION_POINT]
description: Output data updates on the rising clock edge once reset is released
stimulus_conditions: Drive randomized input transactions for at least 20 cycles
observability: Monitor samples the outputs on every posedge and forwards them
coverage_goal: Low, mid and high data ranges each observed at least once
draft_testcase: Release reset, then stream 20 random transactions back-to-back

[FUNCTION_POINT]
description: Reset forces the outputs to their idle values while asserted
stimulus_conditions: Assert reset mid-stream while transactions are in flight
observability: Scoreboard checks outputs hold idle values during the reset window
coverage_goal: Reset entry and exit both observed at least twice
draft_testcase: Stream data, assert reset for five cycles, release, stream again
"""


def _sv(body: str) -> str:
    return f"```systemverilog\n{body}```\n"


def canned_responses(dut: str) -> dict[str, str]:
    """Plausible, compilable-looking responses keyed by agent role."""
    seq_item = f"""\
class {dut}_seq_item extends uvm_sequence_item;
  rand bit [7:0] payload;
  bit [7:0] observed;

  `uvm_object_utils_begin({dut}_seq_item)
    `uvm_field_int(payload, UVM_ALL_ON)
    `uvm_field_int(observed, UVM_ALL_ON)
  `uvm_object_utils_end

  function new(string name = "{dut}_seq_item");
    super.new(name);
  endfunction
endclass : {dut}_seq_item
"""
    sequence = f"""\
class {dut}_sequence extends uvm_sequence #({dut}_seq_item);
  `uvm_object_utils({dut}_sequence)

  function new(string name = "{dut}_sequence");
    super.new(name);
  endfunction

  virtual task body();
    {dut}_seq_item item;
    repeat (20) begin
      item = {dut}_seq_item::type_id::create("item");
      start_item(item);
      if (!item.randomize()) `uvm_error(get_type_name(), "randomize failed")
      finish_item(item);
    end
  endtask
endclass : {dut}_sequence
"""
    driver = f"""\
class {dut}_driver extends uvm_driver #({dut}_seq_item);
  `uvm_component_utils({dut}_driver)
  virtual {dut}_if vif;

  function new(string name, uvm_component parent);
    super.new(name, parent);
  endfunction

  virtual function void build_phase(uvm_phase phase);
    super.build_phase(phase);
    if (!uvm_config_db #(virtual {dut}_if)::get(this, "", "vif", vif))
      `uvm_fatal(get_type_name(), "no virtual interface")
  endfunction

  virtual task run_phase(uvm_phase phase);
    forever begin
      seq_item_port.get_next_item(req);
      @(vif.cb);
      seq_item_port.item_done();
    end
  endtask
endclass : {dut}_driver
"""
    monitor = f"""\
class {dut}_monitor extends uvm_monitor;
  `uvm_component_utils({dut}_monitor)
  virtual {dut}_if vif;
  uvm_analysis_port #({dut}_seq_item) item_collected_port;

  function new(string name, uvm_component parent);
    super.new(name, parent);
    item_collected_port = new("item_collected_port", this);
  endfunction

  virtual function void build_phase(uvm_phase phase);
    super.build_phase(phase);
    if (!uvm_config_db #(virtual {dut}_if)::get(this, "", "vif", vif))
      `uvm_fatal(get_type_name(), "no virtual interface")
  endfunction

  virtual task run_phase(uvm_phase phase);
    {dut}_seq_item item;
    forever begin
      @(vif.cb);
      item = {dut}_seq_item::type_id::create("item");
      item_collected_port.write(item);
    end
  endtask
endclass : {dut}_monitor
"""
    agent = f"""\
class {dut}_agent extends uvm_agent;
  `uvm_component_utils({dut}_agent)
  {dut}_driver driver;
  {dut}_sequencer sequencer;
  {dut}_monitor monitor;

  function new(string name, uvm_component parent);
    super.new(name, parent);
  endfunction

  virtual function void build_phase(uvm_phase phase);
    super.build_phase(phase);
    monitor = {dut}_monitor::type_id::create("monitor", this);
    if (get_is_active() == UVM_ACTIVE) begin
      driver = {dut}_driver::type_id::create("driver", this);
      sequencer = {dut}_sequencer::type_id::create("sequencer", this);
    end
  endfunction

  virtual function void connect_phase(uvm_phase phase);
    super.connect_phase(phase);
    if (get_is_active() == UVM_ACTIVE)
      driver.seq_item_port.connect(sequencer.seq_item_export);
  endfunction
endclass : {dut}_agent
"""
    scoreboard = f"""\
class {dut}_scoreboard extends uvm_scoreboard;
  `uvm_component_utils({dut}_scoreboard)
  uvm_analysis_imp #({dut}_seq_item, {dut}_scoreboard) item_collected_export;
  int unsigned checked;

  function new(string name, uvm_component parent);
    super.new(name, parent);
    item_collected_export = new("item_collected_export", this);
  endfunction

  virtual function void write({dut}_seq_item item);
    checked++;
  endfunction

  virtual function void report_phase(uvm_phase phase);
    `uvm_info(get_type_name(), $sformatf("checked %0d transactions", checked), UVM_LOW)
  endfunction
endclass : {dut}_scoreboard
"""
    env = f"""\
class {dut}_env extends uvm_env;
  `uvm_component_utils({dut}_env)
  {dut}_agent agent;
  {dut}_scoreboard scoreboard;

  function new(string name, uvm_component parent);
    super.new(name, parent);
  endfunction

  virtual function void build_phase(uvm_phase phase);
    super.build_phase(phase);
    agent = {dut}_agent::type_id::create("agent", this);
    scoreboard = {dut}_scoreboard::type_id::create("scoreboard", this);
  endfunction

  virtual function void connect_phase(uvm_phase phase);
    super.connect_phase(phase);
    agent.monitor.item_collected_port.connect(scoreboard.item_collected_export);
  endfunction
endclass : {dut}_env
"""
    testcase = f"""\
class {dut}_testcase extends uvm_test;
  `uvm_component_utils({dut}_testcase)
  {dut}_env env;

  function new(string name, uvm_component parent);
    super.new(name, parent);
  endfunction

  virtual function void build_phase(uvm_phase phase);
    super.build_phase(phase);
    env = {dut}_env::type_id::create("env", this);
  endfunction

  virtual task run_phase(uvm_phase phase);
    {dut}_sequence seq;
    phase.raise_objection(this);
    seq = {dut}_sequence::type_id::create("seq");
    seq.start(env.agent.sequencer);
    phase.drop_objection(this);
  endtask
endclass : {dut}_testcase
"""
    supplement_seq = f"""\
class {dut}_gap_sequence extends uvm_sequence #({dut}_seq_item);
  `uvm_object_utils({dut}_gap_sequence)

  function new(string name = "{dut}_gap_sequence");
    super.new(name);
  endfunction

  virtual task body();
    {dut}_seq_item item;
    repeat (40) begin
      item = {dut}_seq_item::type_id::create("item");
      start_item(item);
      if (!item.randomize() with {{ payload inside {{[8'hF0:8'hFF]}}; }})
        `uvm_error(get_type_name(), "randomize failed")
      finish_item(item);
    end
  endtask
endclass : {dut}_gap_sequence
"""
    supplement_test = f"""\
class {dut}_gap_testcase extends uvm_test;
  `uvm_component_utils({dut}_gap_testcase)
  {dut}_env env;

  function new(string name, uvm_component parent);
    super.new(name, parent);
  endfunction

  virtual function void build_phase(uvm_phase phase);
    super.build_phase(phase);
    env = {dut}_env::type_id::create("env", this);
  endfunction

  virtual task run_phase(uvm_phase phase);
    {dut}_gap_sequence seq;
    phase.raise_objection(this);
    seq = {dut}_gap_sequence::type_id::create("seq");
    seq.start(env.agent.sequencer);
    phase.drop_objection(this);
  endtask
endclass : {dut}_gap_testcase
"""
    return {
        "analysis": _PLAN_TEXT.format(dut=dut),
        "generation-seq_item": _sv(seq_item),
        "generation-sequence": _sv(sequence),
        "generation-driver": _sv(driver),
        "generation-monitor": _sv(monitor),
        "generation-agent": _sv(agent),
        "generation-scoreboard": _sv(scoreboard),
        "generation-env": _sv(env),
        "generation-testcase": _sv(testcase),
        "optimization": (
            "The uncovered high payload range needs directed stimulus.\n\n"
            + _sv(supplement_seq)
            + "\n"
            + _sv(supplement_test)
        ),
    }


class CannedBackend:
    """Backend that answers by role, ignoring the prompt body.

    Useful in tests and for fixture recording: repair prompts carry extra
    mitigation text but reuse the generation role, so they get the same
    canned skeleton back.
    """

    def __init__(self, dut: str, responses: dict[str, str] | None = None):
        self.responses = canned_responses(dut)
        if responses:
            self.responses.update(responses)
        self.calls: list[tuple[str, str]] = []

    def complete(self, prompt: AgentPrompt) -> AgentResponse:
        self.calls.append((prompt.role.key, prompt_digest(prompt)))
        text = self.responses.get(prompt.role.key)
        if text is None:
            raise MockFixtureMissingError(f"no canned response for role {prompt.role.key!r}")
        return AgentResponse(raw_text=text, extracted_code=extract_code(text))


def _write_fixture(fixture_dir: Path, prompt: AgentPrompt, text: str) -> Path:
    path = fixture_dir / f"{prompt.role.key}-{prompt_digest(prompt)}.txt"
    path.write_text(text, encoding="utf-8")
    return path


def record_fixtures(
    root: Path | str | Workspace,
    fixture_dir: Path | str | None = None,
    responses: dict[str, str] | None = None,
) -> list[Path]:
    """Record mock-backend fixtures for a full first-pass pipeline run.

    Replays the planning prompt, then every generation prompt in dependency
    order, feeding each prompt the canned response for its role. Repair and
    supplement rounds are not recorded; a scenario that passes on the first
    simulation never asks for them.
    """
    ws = root if isinstance(root, Workspace) else load_workspace(root)
    fixture_dir = Path(fixture_dir) if fixture_dir else ws.root / "fixtures"
    fixture_dir.mkdir(parents=True, exist_ok=True)

    iface = classify_ports(
        extract_interface(ws.read_sources(), ws.config.top_module), ws.config
    )
    dut = iface.module_name
    canned = canned_responses(dut)
    if responses:
        canned.update(responses)

    written = []
    plan_prompt = build_analysis_prompt(ws.spec, iface)
    written.append(_write_fixture(fixture_dir, plan_prompt, canned["analysis"]))
    plan = parse_test_plan(canned["analysis"])

    components: dict[ComponentKind, UvmComponent] = {}
    for kind in DEPENDENCY_ORDER:
        if kind in TEMPLATE_KINDS:
            components[kind] = render_template(kind, iface, ws.config)
            continue
        deps = [components[p] for p in predecessors(kind)]
        prompt = build_generation_prompt(kind, plan, deps, iface)
        text = canned[f"generation-{kind.stem}"]
        code = extract_code(text)
        if code is None or not code.strip():
            raise ValueError(f"canned response for {kind.stem} holds no code block")
        written.append(_write_fixture(fixture_dir, prompt, text))
        components[kind] = UvmComponent(
            kind=kind,
            file_name=component_file_name(dut, kind),
            source=code,
            provenance=Provenance(origin="agent", role=prompt.role.key),
        )
    log.info("recorded %d fixtures in %s", len(written), fixture_dir)
    return written
