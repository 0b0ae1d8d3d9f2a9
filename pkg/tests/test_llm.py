import base64
import json
import threading
import time

import httpx
import pytest

from tsanom.core import IntervalSet
from tsanom.errors import EndpointError, ProtocolError, ScriptedMissError, TransportError
from tsanom.llm.client import (
    AuditLog,
    EndpointConfig,
    HttpChatClient,
    MockChatClient,
    chat_vision,
    fingerprint,
    mock_client,
    request_body,
)
from tsanom.llm.prompts import (
    PromptText,
    build_detection_prompt,
    build_elicitation_prompt,
    build_judge_prompt,
    build_pairwise_prompt,
)

PROMPT = PromptText(user="describe the plot", image=b"\x89PNG fake")


def completion(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def client_for(handler, **cfg):
    sleeps = []
    c = HttpChatClient(EndpointConfig(base_url="http://test/v1", **cfg), transport=httpx.MockTransport(handler),
                       sleep=sleeps.append)
    return c, sleeps


def test_retry_then_success():
    codes = iter([429, 429, 200])

    def handler(request):
        code = next(codes)
        return completion("ok") if code == 200 else httpx.Response(code, text="slow down")

    c, sleeps = client_for(handler, backoff_base=0.5)
    assert c.chat(PROMPT) == "ok"
    assert c.calls == 3 and sleeps == [0.5, 1.0]


def test_non_retryable_status():
    c, sleeps = client_for(lambda r: httpx.Response(401, text="bad key"))
    with pytest.raises(EndpointError) as info:
        c.chat(PROMPT)
    assert c.calls == 1 and sleeps == []
    assert "401" in str(info.value)


def test_transport_error_after_retries():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    c, sleeps = client_for(handler, max_retries=2)
    with pytest.raises(TransportError):
        c.chat(PROMPT)
    assert c.calls == 3 and len(sleeps) == 2


@pytest.mark.parametrize("resp", [httpx.Response(200, json={"choices": []}),
                                  httpx.Response(200, json={"choices": [{"message": {"content": "  "}}]})])
def test_protocol_errors(resp):
    c, _ = client_for(lambda r: resp)
    with pytest.raises(ProtocolError):
        c.chat(PROMPT)


def test_request_body_and_auth(monkeypatch):
    monkeypatch.setenv("TEST_KEY_VAR", "sekrit")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return completion("fine")

    c = HttpChatClient(EndpointConfig(base_url="http://test/v1", model_name="m1", api_key_env="TEST_KEY_VAR"),
                       transport=httpx.MockTransport(handler))
    c.chat(PROMPT)
    assert seen["auth"] == "Bearer sekrit"
    parts = seen["body"]["messages"][-1]["content"]
    assert parts[0] == {"type": "text", "text": "describe the plot"}
    url = parts[1]["image_url"]["url"]
    assert url.startswith("data:image/png;base64,") and base64.b64decode(url.split(",", 1)[1]) == PROMPT.image
    assert request_body(EndpointConfig(model_name="m1"), PROMPT)["model"] == "m1"


def test_concurrency_bound():
    active, peak, lock = [0], [0], threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return completion("x")

    c, _ = client_for(handler, max_parallel=2)
    threads = [threading.Thread(target=c.chat, args=(PromptText(user=f"p{i}"),)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert c.calls == 8 and peak[0] <= 2


def test_audit_replay_and_torn_line(tmp_path):
    path = tmp_path / "audit.jsonl"
    calls = []

    def handler(request):
        calls.append(1)
        return completion("first answer")

    c = HttpChatClient(EndpointConfig(base_url="http://test/v1"), transport=httpx.MockTransport(handler),
                       audit=AuditLog(path))
    assert c.chat(PROMPT) == "first answer"
    with open(path, "a") as fh:
        fh.write('{"fingerprint": "torn')
    replay = HttpChatClient(EndpointConfig(base_url="http://test/v1"), transport=httpx.MockTransport(handler),
                            audit=AuditLog(path))
    assert replay.chat(PROMPT) == "first answer"
    assert len(calls) == 1 and len(replay.audit) == 1


def test_mock_client_contract():
    fp = fingerprint("mock", PROMPT)
    m = mock_client({fp: "<anomaly>False</anomaly>"})
    assert chat_vision(m, PROMPT) == "<anomaly>False</anomaly>"
    with pytest.raises(ScriptedMissError):
        m.chat(PromptText(user="other"))
    again = mock_client({fp: "<anomaly>False</anomaly>"})
    again.chat(PROMPT)
    assert again.transcript == m.transcript
    r = MockChatClient("echo", responder=lambda p: p.user.upper())
    assert r.chat(PromptText(user="hi")) == "HI"


def test_fingerprint_covers_image_and_model():
    assert fingerprint("a", PROMPT) != fingerprint("b", PROMPT)
    assert fingerprint("a", PROMPT) != fingerprint("a", PromptText(user=PROMPT.user))


def test_elicitation_prompt():
    p = build_elicitation_prompt("CPU utilization", IntervalSet.of([(100, 150)]))
    assert "The anomaly is:" in p.user and "(100, 150)" in p.user and "CPU utilization" in p.user
    assert p.user.index("The anomaly is:") < p.user.index("(100, 150)")
    two = build_elicitation_prompt("", IntervalSet.of([(300, 310), (100, 150)]))
    assert "(100, 150), (300, 310)" in two.user and "{ts_context}" not in two.user
    braces = build_elicitation_prompt("{gt_anomaly_intervals}", IntervalSet.of([(1, 2)]))
    assert "{gt_anomaly_intervals}" in braces.user


def test_other_prompts():
    d = build_detection_prompt("pump")
    assert "STRICT schema" in d.user and "<anomaly>" in d.user and "The anomaly is:" not in d.user
    j = build_judge_prompt("pump", "<anomaly>True</anomaly>", "")
    assert "VISUAL" in j.user and "<anomaly>True</anomaly>" in j.user
    pw = build_pairwise_prompt("pump", "first text", "second text")
    assert pw.user.index("Explanation A") < pw.user.index("first text") < pw.user.index("Explanation B")
    assert build_pairwise_prompt("pump", "same", "same").user
