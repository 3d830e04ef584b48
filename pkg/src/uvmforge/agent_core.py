"""Staged agent prompts and the backends that answer them.

A prompt is an ordered tuple of named stages. Each agent role fixes which
stages it takes and in what order; assemble_prompt rejects anything else.
Two backends ship: an HTTP client for chat-completions style endpoints and a
deterministic mock that replays recorded responses keyed by (role, digest of
the concatenated stage bodies).
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

from .errors import (
    AuthMissingError,
    BackendUnreachableError,
    ExtraStageError,
    MissingStageError,
    MockFixtureMissingError,
)

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.3
DEFAULT_API_KEY_ENV = "UVMFORGE_API_KEY"


ROLE_CUSTOMISATION = "role_customisation"
TEST_PLAN_FORMULATION = "test_plan_formulation"
OUTPUT_TEMPLATE_CONSTRUCTION = "output_template_construction"
DEPENDENCY_DEFINITION = "dependency_definition"
FUNCTION_EXPECTATION = "function_expectation"
MISTAKE_MITIGATION = "mistake_mitigation"
COVERAGE_ANALYSIS = "coverage_analysis"
STIMULUS_SUPPLEMENT = "stimulus_supplement"

ALL_STAGE_LABELS = (
    ROLE_CUSTOMISATION,
    TEST_PLAN_FORMULATION,
    OUTPUT_TEMPLATE_CONSTRUCTION,
    DEPENDENCY_DEFINITION,
    FUNCTION_EXPECTATION,
    MISTAKE_MITIGATION,
    COVERAGE_ANALYSIS,
    STIMULUS_SUPPLEMENT,
)

ANALYSIS = "analysis"
GENERATION = "generation"
OPTIMIZATION = "optimization"

CANONICAL_STAGES: dict[str, tuple[str, ...]] = {
    ANALYSIS: (ROLE_CUSTOMISATION, TEST_PLAN_FORMULATION, OUTPUT_TEMPLATE_CONSTRUCTION),
    GENERATION: (ROLE_CUSTOMISATION, DEPENDENCY_DEFINITION, FUNCTION_EXPECTATION, MISTAKE_MITIGATION),
    OPTIMIZATION: (ROLE_CUSTOMISATION, COVERAGE_ANALYSIS, STIMULUS_SUPPLEMENT, MISTAKE_MITIGATION),
}


@dataclass(frozen=True)
class AgentRole:
    """Identity of an agent: which workflow it serves, and for generation,
    which component kind it produces. kind is a lowercase component stem."""

    name: str
    kind: str | None = None

    def __post_init__(self):
        if self.name not in CANONICAL_STAGES:
            raise ValueError(f"unknown role {self.name!r}")
        if self.name == GENERATION and not self.kind:
            raise ValueError("generation role needs a component kind")
        if self.name != GENERATION and self.kind is not None:
            raise ValueError(f"{self.name} role takes no component kind")

    @property
    def key(self) -> str:
        """Stable identifier used in fixture file names."""
        return self.name if self.kind is None else f"{self.name}-{self.kind}"

    @classmethod
    def analysis(cls) -> "AgentRole":
        return cls(ANALYSIS)

    @classmethod
    def generation(cls, kind: str) -> "AgentRole":
        return cls(GENERATION, kind)

    @classmethod
    def optimization(cls) -> "AgentRole":
        return cls(OPTIMIZATION)


@dataclass(frozen=True)
class PromptStage:
    label: str
    body: str


@dataclass(frozen=True)
class AgentPrompt:
    role: AgentRole
    stages: tuple[PromptStage, ...]
    temperature: float = DEFAULT_TEMPERATURE


@dataclass
class TokenUsage:
    prompt: int = 0
    completion: int = 0


@dataclass
class AgentResponse:
    raw_text: str
    extracted_code: str | None
    token_usage: TokenUsage = field(default_factory=TokenUsage)
    latency_ms: int = 0


@dataclass
class BackendConfig:
    """Which backend to talk to and how."""

    kind: str = "mock"  # "http" or "mock"
    endpoint: str = ""
    model_id: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    fixture_dir: Path | None = None
    max_retries: int = 3
    timeout_s: float = 120.0


def assemble_prompt(
    role: AgentRole,
    parts: Mapping[str, str],
    temperature: float = DEFAULT_TEMPERATURE,
) -> AgentPrompt:
    """Order the given stage bodies into the role's canonical sequence.

    Raises MissingStageError when a canonical stage is absent or blank, and
    ExtraStageError when parts carries a stage the role does not take.
    """
    canonical = CANONICAL_STAGES[role.name]
    for label in parts:
        if label not in canonical:
            raise ExtraStageError(f"role {role.key!r} does not take stage {label!r}")
    stages = []
    for label in canonical:
        body = parts.get(label, "")
        if not body.strip():
            raise MissingStageError(f"role {role.key!r} is missing stage {label!r}")
        stages.append(PromptStage(label=label, body=body))
    if not 0.0 <= temperature <= 2.0:
        raise ValueError(f"temperature {temperature} outside [0, 2]")
    return AgentPrompt(role=role, stages=tuple(stages), temperature=temperature)


def prompt_digest(prompt: AgentPrompt) -> str:
    """SHA-256 over the concatenated stage bodies (order as assembled)."""
    digest = hashlib.sha256()
    for stage in prompt.stages:
        digest.update(stage.body.encode("utf-8"))
    return digest.hexdigest()


# --- code extraction ----------------------------------------------------------

_FENCE_OPEN_RE = re.compile(r"^```([^\n`]*)\s*$")
_CODE_INFOS = ("", "systemverilog", "verilog")
_CODE_LEAD_RE = re.compile(r"^\s*(module|class|interface|package)\b")


def extract_code_blocks(text: str) -> list[str]:
    """All fenced blocks whose info string is empty, systemverilog or verilog.

    An unterminated fence runs to the end of the text.
    """
    blocks: list[str] = []
    lines = text.split("\n")
    idx = 0
    while idx < len(lines):
        match = _FENCE_OPEN_RE.match(lines[idx])
        if match:
            info = match.group(1).strip().lower()
            body: list[str] = []
            idx += 1
            while idx < len(lines) and not lines[idx].startswith("```"):
                body.append(lines[idx])
                idx += 1
            if info in _CODE_INFOS:
                blocks.append("\n".join(body))
        idx += 1
    return blocks


def extract_code(text: str) -> str | None:
    """Pull SystemVerilog out of an agent response.

    Returns the longest matching fenced block (by line count, first on ties).
    With no fences at all, a response that starts with module/class/interface/
    package is taken whole. Otherwise None.
    """
    blocks = extract_code_blocks(text)
    if blocks:
        best = max(blocks, key=lambda b: b.count("\n") + 1)
        return best if best.strip() else None
    if "```" not in text and _CODE_LEAD_RE.match(text):
        return text
    return None


# --- backends -----------------------------------------------------------------

class Backend(Protocol):
    def complete(self, prompt: AgentPrompt) -> AgentResponse: ...


def _stage_title(label: str) -> str:
    return label.replace("_", " ").title()


def render_messages(prompt: AgentPrompt) -> list[dict[str, str]]:
    """Map a staged prompt onto chat messages.

    The role-customisation stage becomes the system message; the remaining
    stages are concatenated under their titles as the user message.
    """
    system = prompt.stages[0].body
    sections = [
        f"### {_stage_title(stage.label)}\n\n{stage.body}"
        for stage in prompt.stages[1:]
    ]
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": "\n\n".join(sections)},
    ]


class HttpBackend:
    """Chat-completions client with bounded retry on transport failures."""

    def __init__(
        self,
        config: BackendConfig,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not config.endpoint:
            raise ValueError("http backend needs an endpoint URL")
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep

    def complete(self, prompt: AgentPrompt) -> AgentResponse:
        api_key = os.environ.get(self.config.api_key_env)
        if not api_key:
            raise AuthMissingError(
                f"environment variable {self.config.api_key_env} is not set"
            )
        payload = {
            "model": self.config.model_id,
            "messages": render_messages(prompt),
            "temperature": prompt.temperature,
        }
        headers = {"Authorization": f"Bearer {api_key}"}
        start = time.perf_counter()
        last_failure = "no attempt made"
        for attempt in range(1 + self.config.max_retries):
            if attempt:
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout_s,
                )
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_failure = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise BackendUnreachableError(
                    f"{self.config.endpoint} answered HTTP {resp.status_code}: "
                    f"{resp.text[:200]}"
                )
            return self._parse_response(resp, start)
        raise BackendUnreachableError(
            f"{self.config.endpoint} unreachable after "
            f"{1 + self.config.max_retries} attempts ({last_failure})"
        )

    def _parse_response(self, resp, start: float) -> AgentResponse:
        try:
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnreachableError(f"malformed completion payload: {exc}") from exc
        usage = doc.get("usage") or {}
        return AgentResponse(
            raw_text=text,
            extracted_code=extract_code(text),
            token_usage=TokenUsage(
                prompt=int(usage.get("prompt_tokens", 0)),
                completion=int(usage.get("completion_tokens", 0)),
            ),
            latency_ms=int((time.perf_counter() - start) * 1000),
        )


class MockBackend:
    """Replays recorded responses from <fixture_dir>/<role>-<digest>.txt."""

    def __init__(self, config: BackendConfig):
        if config.fixture_dir is None:
            raise ValueError("mock backend needs fixture_dir")
        self.fixture_dir = Path(config.fixture_dir)

    def fixture_path(self, prompt: AgentPrompt) -> Path:
        return self.fixture_dir / f"{prompt.role.key}-{prompt_digest(prompt)}.txt"

    def complete(self, prompt: AgentPrompt) -> AgentResponse:
        path = self.fixture_path(prompt)
        if not path.is_file():
            raise MockFixtureMissingError(
                f"no fixture for role {prompt.role.key!r} with digest "
                f"{prompt_digest(prompt)} (expected {path})"
            )
        text = path.read_text(encoding="utf-8")
        return AgentResponse(
            raw_text=text,
            extracted_code=extract_code(text),
            token_usage=TokenUsage(),
            latency_ms=0,
        )


def make_backend(config: BackendConfig) -> Backend:
    if config.kind == "http":
        return HttpBackend(config)
    if config.kind == "mock":
        return MockBackend(config)
    raise ValueError(f"unknown backend kind {config.kind!r}")


def invoke(backend: Backend | BackendConfig, prompt: AgentPrompt) -> AgentResponse:
    """Send a prompt to a backend (constructing one from a config if needed)."""
    if isinstance(backend, BackendConfig):
        backend = make_backend(backend)
    return backend.complete(prompt)
