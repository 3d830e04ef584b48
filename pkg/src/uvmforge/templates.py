"""Embedded SystemVerilog templates for the deterministic component kinds.

Templates use {{name}} placeholders and contain no logic; every list (signal
declarations, port connections) is computed by the renderer and substituted
as a pre-formatted block. That keeps rendering byte-reproducible and the
templates reviewable as plain SystemVerilog.
"""

TEMPLATE_VERSION = "v1"

INTERFACE_TEMPLATE = """\
interface {{dut}}_if;

  // One signal per DUT port, width-matched.
{{signal_decls}}

  // Testbench-side synchronous access. Clock and reset are driven by the
  // top module, not through the clocking block.
  clocking cb @(posedge {{clock}});
{{clocking_dirs}}
  endclocking

endinterface : {{dut}}_if
"""

TOP_TEMPLATE = """\
`timescale 1ns/1ps

module {{dut}}_top;

  import uvm_pkg::*;
  `include "uvm_macros.svh"

  {{dut}}_if vif ();

  {{top_module}} dut_inst (
{{port_connections}}
  );

  initial begin
    vif.{{clock}} = 1'b0;
    forever #{{half_period}} vif.{{clock}} = ~vif.{{clock}};
  end

  initial begin
    vif.{{reset}} = {{reset_assert}};
    repeat ({{reset_cycles}}) @(posedge vif.{{clock}});
    vif.{{reset}} = {{reset_release}};
  end

  initial begin
    uvm_config_db#(virtual {{dut}}_if)::set(null, "*", "vif", vif);
    run_test();
  end

endmodule : {{dut}}_top
"""

SEQUENCER_TEMPLATE = """\
class {{dut}}_sequencer extends uvm_sequencer #({{dut}}_seq_item);

  `uvm_component_utils({{dut}}_sequencer)

  function new(string name = "{{dut}}_sequencer", uvm_component parent = null);
    super.new(name, parent);
  endfunction

endclass : {{dut}}_sequencer
"""


def fill(template: str, bindings: dict[str, str]) -> str:
    """Substitute {{name}} placeholders. Unknown placeholders are an error."""
    out = template
    for name, value in bindings.items():
        out = out.replace("{{" + name + "}}", value)
    if "{{" in out:
        start = out.index("{{")
        raise KeyError(f"unbound placeholder near {out[start:start + 40]!r}")
    return out
