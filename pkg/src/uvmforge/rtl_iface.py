"""DUT interface extraction from Verilog/SystemVerilog sources.

Supports ANSI-style module headers plus simple non-ANSI headers (port names in
the header, directions declared in the body). Parameter defaults are folded as
constant integer expressions over +, -, *, / and parentheses so declared port
ranges like [WIDTH-1:0] resolve to concrete bit indices.

Anything outside that subset raises UnsupportedConstructError rather than
guessing: interface ports, unpacked dimensions, user-defined port types,
sized literals in ranges, and unresolvable identifiers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

from .errors import (
    DuplicateModuleError,
    InvalidClockError,
    InvalidResetError,
    MissingModuleError,
    SignalNotFoundError,
    UnsupportedConstructError,
)
from .workspace import DutConfig


class Direction(Enum):
    INPUT = "input"
    OUTPUT = "output"
    INOUT = "inout"


@dataclass
class Port:
    name: str
    direction: Direction
    msb: int = 0
    lsb: int = 0
    is_clock: bool = False
    is_reset: bool = False


@dataclass
class DutInterface:
    module_name: str
    ports: list[Port] = field(default_factory=list)
    parameters: dict[str, int] = field(default_factory=dict)


def port_width(port: Port) -> int:
    """Bit width of a port; [7:0] and [0:7] are both 8 bits wide."""
    return abs(port.msb - port.lsb) + 1


# --- source preprocessing ----------------------------------------------------

_LINE_COMMENT_RE = re.compile(r"//[^\n]*")
_BLOCK_COMMENT_RE = re.compile(r"/\*.*?\*/", re.DOTALL)
_ATTRIBUTE_RE = re.compile(r"\(\*.*?\*\)", re.DOTALL)
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_$]*")


def _blank_preserving_newlines(match: re.Match) -> str:
    return re.sub(r"[^\n]", " ", match.group(0))


def _strip_comments(text: str) -> str:
    """Blank out comments and attributes, preserving line structure."""
    text = _BLOCK_COMMENT_RE.sub(_blank_preserving_newlines, text)
    text = _ATTRIBUTE_RE.sub(_blank_preserving_newlines, text)
    return _LINE_COMMENT_RE.sub(_blank_preserving_newlines, text)


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


# --- constant expression folding ----------------------------------------------

class _ExprParser:
    """Recursive-descent evaluator for +, -, *, / and parentheses.

    Identifiers resolve against a parameter environment; division truncates
    toward zero as Verilog integer division does.
    """

    _TOKEN_RE = re.compile(r"\s*(\d[\d_]*|[A-Za-z_][A-Za-z0-9_$]*|[()+\-*/]|')")

    def __init__(self, text: str, env: dict[str, int], where: str):
        self.where = where
        self.env = env
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text: str) -> list[str]:
        tokens = []
        pos = 0
        while pos < len(text):
            match = self._TOKEN_RE.match(text, pos)
            if not match:
                if text[pos:].strip():
                    raise UnsupportedConstructError(
                        f"{self.where}: cannot fold expression {text.strip()!r}"
                    )
                break
            token = match.group(1)
            if token == "'":
                raise UnsupportedConstructError(
                    f"{self.where}: sized literal in expression {text.strip()!r}"
                )
            tokens.append(token)
            pos = match.end()
        return tokens

    def _peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> str:
        token = self._peek()
        if token is None:
            raise UnsupportedConstructError(f"{self.where}: truncated expression")
        self.pos += 1
        return token

    def parse(self) -> int:
        value = self._expr()
        if self._peek() is not None:
            raise UnsupportedConstructError(
                f"{self.where}: trailing tokens in expression"
            )
        return value

    def _expr(self) -> int:
        value = self._term()
        while self._peek() in ("+", "-"):
            op = self._next()
            rhs = self._term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def _term(self) -> int:
        value = self._factor()
        while self._peek() in ("*", "/"):
            op = self._next()
            rhs = self._factor()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise UnsupportedConstructError(f"{self.where}: division by zero")
                value = int(value / rhs)
        return value

    def _factor(self) -> int:
        token = self._next()
        if token == "(":
            value = self._expr()
            if self._next() != ")":
                raise UnsupportedConstructError(f"{self.where}: unbalanced parentheses")
            return value
        if token == "-":
            return -self._factor()
        if token == "+":
            return self._factor()
        if token[0].isdigit():
            return int(token.replace("_", ""))
        if _IDENT_RE.fullmatch(token):
            if token not in self.env:
                raise UnsupportedConstructError(
                    f"{self.where}: unresolved identifier {token!r}"
                )
            return self.env[token]
        raise UnsupportedConstructError(f"{self.where}: unexpected token {token!r}")


def _fold(text: str, env: dict[str, int], where: str) -> int:
    return _ExprParser(text, env, where).parse()


# --- header scanning ----------------------------------------------------------

def _scan_paren_group(text: str, open_pos: int, where: str) -> tuple[str, int]:
    """Return (content, position after ')') for the group opening at open_pos."""
    depth = 0
    for pos in range(open_pos, len(text)):
        ch = text[pos]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return text[open_pos + 1 : pos], pos + 1
    raise UnsupportedConstructError(f"{where}: unbalanced parentheses in header")


def _split_top_level(text: str) -> list[str]:
    """Split on commas not nested inside () or []."""
    items: list[str] = []
    depth = 0
    start = 0
    for pos, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == "," and depth == 0:
            items.append(text[start:pos])
            start = pos + 1
    items.append(text[start:])
    return [item for item in (i.strip() for i in items) if item]


_PARAM_ITEM_RE = re.compile(
    r"^(?:parameter\s+|localparam\s+)?(?:integer\s+|int\s+)?"
    r"([A-Za-z_][A-Za-z0-9_$]*)\s*=\s*(.+)$",
    re.DOTALL,
)

_NET_KEYWORDS = ("wire", "reg", "logic", "bit")

_PORT_ITEM_RE = re.compile(
    r"^(?:(input|output|inout)\s+)?"
    r"(?:(?:wire|reg|logic|bit)\s+)?"
    r"(?:(?:signed|unsigned)\s+)?"
    r"(?:\[([^\]]*)\]\s*)?"
    r"([A-Za-z_][A-Za-z0-9_$]*)$",
    re.DOTALL,
)


def _parse_param_items(content: str, env: dict[str, int], where: str) -> None:
    for item in _split_top_level(content):
        match = _PARAM_ITEM_RE.match(item)
        if not match:
            raise UnsupportedConstructError(f"{where}: unsupported parameter {item!r}")
        name, expr = match.group(1), match.group(2)
        env[name] = _fold(expr, env, f"{where}: parameter {name}")


def _parse_ansi_item(
    item: str, previous: Port | None, env: dict[str, int], where: str
) -> Port:
    if "." in item:
        raise UnsupportedConstructError(f"{where}: interface/named port {item!r}")
    if "=" in item:
        raise UnsupportedConstructError(f"{where}: port default value {item!r}")
    stripped = item.strip()
    # A bare identifier continues the previous declaration and inherits both
    # its direction and its range; anything more starts a fresh declaration.
    if _IDENT_RE.fullmatch(stripped) and previous is not None:
        return Port(
            name=stripped,
            direction=previous.direction,
            msb=previous.msb,
            lsb=previous.lsb,
        )
    match = _PORT_ITEM_RE.match(stripped)
    if not match:
        raise UnsupportedConstructError(f"{where}: unsupported port item {item!r}")
    dir_kw, range_text, name = match.group(1), match.group(2), match.group(3)
    if dir_kw is None and previous is None:
        raise UnsupportedConstructError(f"{where}: port {name!r} has no direction")
    direction = Direction(dir_kw) if dir_kw else previous.direction
    msb = lsb = 0
    if range_text is not None:
        parts = range_text.split(":")
        if len(parts) != 2:
            raise UnsupportedConstructError(f"{where}: bad range on port {name!r}")
        msb = _fold(parts[0], env, f"{where}: port {name} msb")
        lsb = _fold(parts[1], env, f"{where}: port {name} lsb")
    return Port(name=name, direction=direction, msb=msb, lsb=lsb)


_BODY_PARAM_RE = re.compile(r"\b(?:parameter|localparam)\b([^;]*);")
_BODY_PORT_RE = re.compile(r"\b(input|output|inout)\b([^;]*);")


def _parse_non_ansi(
    names: list[str], body: str, env: dict[str, int], where: str
) -> list[Port]:
    for match in _BODY_PARAM_RE.finditer(body):
        _parse_param_items(match.group(1), env, where)

    declared: dict[str, Port] = {}
    for match in _BODY_PORT_RE.finditer(body):
        direction = Direction(match.group(1))
        decl = match.group(2).strip()
        while True:
            kw = re.match(r"^(?:wire|reg|logic|bit|signed|unsigned)\b\s*", decl)
            if not kw:
                break
            decl = decl[kw.end():]
        msb = lsb = 0
        range_match = re.match(r"^\[([^\]]*)\]", decl)
        if range_match:
            parts = range_match.group(1).split(":")
            if len(parts) != 2:
                raise UnsupportedConstructError(f"{where}: bad range in {decl!r}")
            msb = _fold(parts[0], env, where)
            lsb = _fold(parts[1], env, where)
            decl = decl[range_match.end():].strip()
        for name in _split_top_level(decl):
            if not _IDENT_RE.fullmatch(name):
                raise UnsupportedConstructError(
                    f"{where}: unsupported declaration {name!r}"
                )
            declared[name] = Port(name=name, direction=direction, msb=msb, lsb=lsb)

    ports = []
    for name in names:
        if name not in declared:
            raise UnsupportedConstructError(
                f"{where}: port {name!r} has no direction declaration"
            )
        ports.append(declared[name])
    return ports


def _parse_module_at(text: str, match: re.Match, where: str) -> DutInterface:
    name = match.group(1)
    pos = match.end()
    env: dict[str, int] = {}

    def _skip_ws(p: int) -> int:
        while p < len(text) and text[p].isspace():
            p += 1
        return p

    pos = _skip_ws(pos)
    if pos < len(text) and text[pos] == "#":
        pos = _skip_ws(pos + 1)
        if pos >= len(text) or text[pos] != "(":
            raise UnsupportedConstructError(f"{where}: '#' without parameter list")
        content, pos = _scan_paren_group(text, pos, where)
        _parse_param_items(content, env, where)
        pos = _skip_ws(pos)

    port_content: str | None = None
    if pos < len(text) and text[pos] == "(":
        content, pos = _scan_paren_group(text, pos, where)
        # A bare leading parameter list (no '#') is tolerated; the next
        # group, if any, is then the real port list.
        if re.match(r"\s*(parameter|localparam)\b", content):
            _parse_param_items(content, env, where)
            pos = _skip_ws(pos)
            if pos < len(text) and text[pos] == "(":
                port_content, pos = _scan_paren_group(text, pos, where)
        else:
            port_content = content
        pos = _skip_ws(pos)

    if pos >= len(text) or text[pos] != ";":
        raise UnsupportedConstructError(f"{where}: header does not end with ';'")
    body_start = pos + 1
    end_match = re.search(r"\bendmodule\b|\bmodule\b", text[body_start:])
    body = text[body_start : body_start + end_match.start()] if end_match else text[body_start:]

    iface = DutInterface(module_name=name)
    if port_content is None or not port_content.strip():
        iface.parameters = env
        return iface

    items = _split_top_level(port_content)
    is_ansi = any(
        re.match(r"^(input|output|inout)\b", item) for item in items
    )
    if is_ansi:
        previous: Port | None = None
        for item in items:
            port = _parse_ansi_item(item, previous, env, where)
            previous = port
            iface.ports.append(port)
    else:
        for item in items:
            if not _IDENT_RE.fullmatch(item):
                raise UnsupportedConstructError(
                    f"{where}: unsupported header port {item!r}"
                )
        iface.ports = _parse_non_ansi(items, body, env, where)

    seen: set[str] = set()
    for port in iface.ports:
        if port.name in seen:
            raise UnsupportedConstructError(f"{where}: duplicate port {port.name!r}")
        seen.add(port.name)
    iface.parameters = env
    return iface


_MODULE_RE = re.compile(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)")


def extract_interface(sources: Sequence[str], top_name: str) -> DutInterface:
    """Find module top_name in the given source texts and parse its header.

    Sources are scanned in the given order. Defining the module more than once
    anywhere in the list raises DuplicateModuleError; defining it nowhere
    raises MissingModuleError.
    """
    found: list[tuple[int, str, re.Match]] = []
    stripped_sources = [_strip_comments(s) for s in sources]
    for idx, text in enumerate(stripped_sources):
        for match in _MODULE_RE.finditer(text):
            if match.group(1) == top_name:
                found.append((idx, text, match))
    if not found:
        raise MissingModuleError(f"module {top_name!r} not found in {len(sources)} source(s)")
    if len(found) > 1:
        spots = ", ".join(
            f"source {i} line {_line_of(t, m.start())}" for i, t, m in found
        )
        raise DuplicateModuleError(f"module {top_name!r} defined more than once: {spots}")

    idx, text, match = found[0]
    where = f"source {idx} line {_line_of(text, match.start())}"
    return _parse_module_at(text, match, where)


def classify_ports(iface: DutInterface, cfg: DutConfig) -> DutInterface:
    """Return a copy of iface with clock/reset flags set from the config."""
    names = {port.name for port in iface.ports}
    for role, signal in (("clock", cfg.clock.signal), ("reset", cfg.reset.signal)):
        if signal not in names:
            raise SignalNotFoundError(
                f"configured {role} signal {signal!r} is not a port of {iface.module_name!r}"
            )
    ports = []
    for port in iface.ports:
        is_clock = port.name == cfg.clock.signal
        is_reset = port.name == cfg.reset.signal
        if is_clock and port_width(port) != 1:
            raise InvalidClockError(
                f"clock signal {port.name!r} has width {port_width(port)}, must be 1"
            )
        if is_reset and port_width(port) != 1:
            raise InvalidResetError(
                f"reset signal {port.name!r} has width {port_width(port)}, must be 1"
            )
        ports.append(replace(port, is_clock=is_clock, is_reset=is_reset))
    return DutInterface(
        module_name=iface.module_name,
        ports=ports,
        parameters=dict(iface.parameters),
    )


def format_interface(iface: DutInterface) -> str:
    """Pretty-print an interface as an ANSI module header (re-extractable)."""
    lines = []
    if iface.parameters:
        params = ",\n".join(
            f"  parameter {name} = {value}" for name, value in iface.parameters.items()
        )
        lines.append(f"module {iface.module_name} #(")
        lines.append(params)
        lines.append(") (")
    else:
        lines.append(f"module {iface.module_name} (")
    port_lines = []
    for port in iface.ports:
        rng = f" [{port.msb}:{port.lsb}]" if (port.msb, port.lsb) != (0, 0) else ""
        port_lines.append(f"  {port.direction.value}{rng} {port.name}")
    lines.append(",\n".join(port_lines))
    lines.append(");")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def summarize_interface(iface: DutInterface) -> str:
    """One-line-per-port summary used inside agent prompts."""
    if not iface.ports:
        return f"module {iface.module_name}: no ports"
    rows = [f"module {iface.module_name}"]
    for port in iface.ports:
        flags = ""
        if port.is_clock:
            flags = " (clock)"
        elif port.is_reset:
            flags = " (reset)"
        rows.append(
            f"  {port.direction.value:<6} [{port.msb}:{port.lsb}] "
            f"{port.name} width={port_width(port)}{flags}"
        )
    return "\n".join(rows)
