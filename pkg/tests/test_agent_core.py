import json

import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from uvmforge.agent_core import (
    CANONICAL_STAGES,
    DEPENDENCY_DEFINITION,
    FUNCTION_EXPECTATION,
    MISTAKE_MITIGATION,
    OUTPUT_TEMPLATE_CONSTRUCTION,
    ROLE_CUSTOMISATION,
    TEST_PLAN_FORMULATION,
    AgentRole,
    BackendConfig,
    HttpBackend,
    MockBackend,
    assemble_prompt,
    extract_code,
    extract_code_blocks,
    invoke,
    make_backend,
    prompt_digest,
    render_messages,
)
from uvmforge.errors import (
    AuthMissingError,
    BackendUnreachableError,
    ExtraStageError,
    MissingStageError,
    MockFixtureMissingError,
)

ANALYSIS_PARTS = {
    ROLE_CUSTOMISATION: "act as engineer",
    TEST_PLAN_FORMULATION: "derive the plan",
    OUTPUT_TEMPLATE_CONSTRUCTION: "emit blocks",
}


def analysis_prompt(**overrides):
    parts = dict(ANALYSIS_PARTS)
    parts.update(overrides)
    return assemble_prompt(AgentRole.analysis(), parts)


# --- roles ------------------------------------------------------------------------


def test_role_keys():
    assert AgentRole.analysis().key == "analysis"
    assert AgentRole.generation("driver").key == "generation-driver"
    assert AgentRole.optimization().key == "optimization"


def test_generation_role_requires_kind():
    with pytest.raises(ValueError):
        AgentRole("generation")


def test_non_generation_roles_reject_kind():
    with pytest.raises(ValueError):
        AgentRole("analysis", kind="driver")


def test_unknown_role_rejected():
    with pytest.raises(ValueError):
        AgentRole("review")


# --- prompt assembly ----------------------------------------------------------------


def test_assemble_orders_stages_canonically():
    prompt = analysis_prompt()
    assert [s.label for s in prompt.stages] == list(CANONICAL_STAGES["analysis"])
    assert prompt.temperature == 0.3


def test_assemble_rejects_missing_stage():
    parts = dict(ANALYSIS_PARTS)
    del parts[TEST_PLAN_FORMULATION]
    with pytest.raises(MissingStageError):
        assemble_prompt(AgentRole.analysis(), parts)


def test_assemble_rejects_blank_stage():
    with pytest.raises(MissingStageError):
        analysis_prompt(**{TEST_PLAN_FORMULATION: "  \n "})


def test_assemble_rejects_extra_stage():
    with pytest.raises(ExtraStageError):
        analysis_prompt(**{DEPENDENCY_DEFINITION: "not an analysis stage"})


def test_assemble_rejects_bad_temperature():
    with pytest.raises(ValueError):
        assemble_prompt(AgentRole.analysis(), ANALYSIS_PARTS, temperature=2.5)


def test_generation_prompt_takes_four_stages():
    prompt = assemble_prompt(
        AgentRole.generation("driver"),
        {
            ROLE_CUSTOMISATION: "a",
            DEPENDENCY_DEFINITION: "b",
            FUNCTION_EXPECTATION: "c",
            MISTAKE_MITIGATION: "d",
        },
    )
    assert len(prompt.stages) == 4


def test_digest_depends_on_bodies_not_role():
    one = analysis_prompt()
    two = analysis_prompt(**{OUTPUT_TEMPLATE_CONSTRUCTION: "emit blocks!"})
    assert prompt_digest(one) != prompt_digest(two)
    assert prompt_digest(one) == prompt_digest(analysis_prompt())
    assert len(prompt_digest(one)) == 64


def test_render_messages_shape():
    messages = render_messages(analysis_prompt())
    assert messages[0] == {"role": "system", "content": "act as engineer"}
    assert messages[1]["role"] == "user"
    assert "### Test Plan Formulation" in messages[1]["content"]
    assert "derive the plan" in messages[1]["content"]


# --- code extraction ----------------------------------------------------------------


def test_extract_code_takes_longest_block():
    text = "```systemverilog\nshort\n```\nand\n```verilog\nlong\nlong\nlong\n```\n"
    assert extract_code(text) == "long\nlong\nlong"


def test_extract_code_prefers_first_on_ties():
    text = "```\nfirst\n```\n```\nsecond\n```\n"
    assert extract_code(text) == "first"


def test_extract_code_ignores_other_infos():
    text = "```python\nnope\n```\n```systemverilog\nmodule m;\n```\n"
    assert extract_code(text) == "module m;"
    assert extract_code_blocks("```json\n{}\n```") == []


def test_extract_code_unterminated_fence_runs_to_eof():
    assert extract_code("```systemverilog\nmodule m;\nendmodule") == "module m;\nendmodule"


def test_extract_code_whole_text_fallback():
    text = "module m (input a);\nendmodule\n"
    assert extract_code(text) == text
    assert extract_code("  class c extends uvm_test;\nendclass") is not None


def test_extract_code_no_fallback_when_fences_present():
    assert extract_code("module m;\n```python\nx\n```") is None


def test_extract_code_prose_returns_none():
    assert extract_code("I could not produce the component.") is None


@given(st.text(max_size=400))
@settings(max_examples=150)
def test_extract_code_never_raises(text):
    result = extract_code(text)
    assert result is None or isinstance(result, str)


# --- http backend -------------------------------------------------------------------


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    """Returns queued responses; an exception instance in the queue is raised."""

    def __init__(self, *queue):
        self.queue = list(queue)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        item = self.queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def ok_response(content="fine"):
    return FakeResponse(
        200,
        {
            "choices": [{"message": {"content": content}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7},
        },
    )


def http_config(**kwargs):
    return BackendConfig(kind="http", endpoint="http://backend.test/v1", model_id="m1", **kwargs)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("UVMFORGE_API_KEY", "sk-test")


def test_http_requires_api_key(monkeypatch):
    monkeypatch.delenv("UVMFORGE_API_KEY", raising=False)
    backend = HttpBackend(http_config(), session=FakeSession(ok_response()))
    with pytest.raises(AuthMissingError):
        backend.complete(analysis_prompt())


def test_http_success_reads_usage_and_code(api_key):
    session = FakeSession(ok_response("```systemverilog\nmodule m;\n```"))
    backend = HttpBackend(http_config(), session=session, sleep=lambda s: None)
    response = backend.complete(analysis_prompt())
    assert response.extracted_code == "module m;"
    assert response.token_usage.prompt == 11
    assert session.calls[0]["headers"]["Authorization"] == "Bearer sk-test"
    assert session.calls[0]["json"]["temperature"] == 0.3


def test_http_retries_on_transport_and_5xx(api_key):
    session = FakeSession(
        requests.ConnectionError("down"),
        FakeResponse(503),
        FakeResponse(429),
        ok_response(),
    )
    sleeps = []
    backend = HttpBackend(http_config(max_retries=3), session=session, sleep=sleeps.append)
    response = backend.complete(analysis_prompt())
    assert response.raw_text == "fine"
    assert len(session.calls) == 4
    assert sleeps == [0.5, 1.0, 2.0]


def test_http_retry_budget_is_bounded(api_key):
    session = FakeSession(*[FakeResponse(500)] * 10)
    backend = HttpBackend(http_config(max_retries=2), session=session, sleep=lambda s: None)
    with pytest.raises(BackendUnreachableError):
        backend.complete(analysis_prompt())
    assert len(session.calls) == 3  # 1 + max_retries


def test_http_client_error_fails_fast(api_key):
    session = FakeSession(FakeResponse(401, text="no"))
    backend = HttpBackend(http_config(), session=session, sleep=lambda s: None)
    with pytest.raises(BackendUnreachableError):
        backend.complete(analysis_prompt())
    assert len(session.calls) == 1


def test_http_malformed_payload(api_key):
    session = FakeSession(FakeResponse(200, {"choices": []}))
    backend = HttpBackend(http_config(), session=session, sleep=lambda s: None)
    with pytest.raises(BackendUnreachableError):
        backend.complete(analysis_prompt())


@given(st.integers(0, 5))
@settings(max_examples=20, deadline=None)
def test_http_attempts_never_exceed_one_plus_retries(retries):
    session = FakeSession(*[FakeResponse(500)] * (retries + 5))
    backend = HttpBackend(
        http_config(max_retries=retries), session=session, sleep=lambda s: None
    )
    import os

    os.environ["UVMFORGE_API_KEY"] = "sk-prop"
    try:
        with pytest.raises(BackendUnreachableError):
            backend.complete(analysis_prompt())
    finally:
        os.environ.pop("UVMFORGE_API_KEY", None)
    assert len(session.calls) == 1 + retries


# --- mock backend --------------------------------------------------------------------


def test_mock_replays_fixture(tmp_path):
    prompt = analysis_prompt()
    backend = MockBackend(BackendConfig(kind="mock", fixture_dir=tmp_path))
    path = backend.fixture_path(prompt)
    assert path.name == f"analysis-{prompt_digest(prompt)}.txt"
    path.write_text("recorded", encoding="utf-8")
    assert backend.complete(prompt).raw_text == "recorded"


def test_mock_missing_fixture_names_digest(tmp_path):
    prompt = analysis_prompt()
    backend = MockBackend(BackendConfig(kind="mock", fixture_dir=tmp_path))
    with pytest.raises(MockFixtureMissingError) as excinfo:
        backend.complete(prompt)
    assert prompt_digest(prompt) in str(excinfo.value)


def test_make_backend_dispatch(tmp_path):
    assert isinstance(make_backend(BackendConfig(kind="mock", fixture_dir=tmp_path)), MockBackend)
    assert isinstance(make_backend(http_config()), HttpBackend)
    with pytest.raises(ValueError):
        make_backend(BackendConfig(kind="carrier-pigeon"))


def test_invoke_accepts_config(tmp_path):
    prompt = analysis_prompt()
    config = BackendConfig(kind="mock", fixture_dir=tmp_path)
    (tmp_path / f"analysis-{prompt_digest(prompt)}.txt").write_text("x", encoding="utf-8")
    assert invoke(config, prompt).raw_text == "x"
