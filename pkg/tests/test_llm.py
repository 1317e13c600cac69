import logging
import random

import pytest

from intentkit.errors import AuthError, ConfigError, MalformedResponse, RateLimited
from intentkit.llm import (
    BatchItem,
    ModelEndpoint,
    batch_item_record,
    classify_batch,
    complete,
)
from intentkit.model import IntentLabel, Query
from intentkit.prompts import Scenario, default_bank
from stubserver import StubLLMServer

NO_SLEEP = lambda _s: None


def endpoint(base_url, **kw):
    defaults = dict(
        base_url=base_url,
        model="stub-model",
        api_key="sekret-key-123",
        timeout_s=5.0,
        max_retries=3,
        max_concurrent=4,
        backoff_base_s=0.001,
        backoff_max_s=0.002,
    )
    defaults.update(kw)
    return ModelEndpoint(**defaults)


class TestComplete:
    def test_echo_transport(self):
        with StubLLMServer(script=[{"reply": "Navigational"}]) as stub:
            resp = complete(endpoint(stub.base_url), "prompt text", sleep=NO_SLEEP)
        assert resp.text == "Navigational"
        assert resp.attempts == 1
        assert resp.prompt_tokens == 7 and resp.completion_tokens == 2

    def test_retry_schedule_429_twice_then_ok(self):
        script = [{"status": 429}, {"status": 429}, {"reply": "informational"}]
        with StubLLMServer(script=script) as stub:
            resp = complete(endpoint(stub.base_url), "p", sleep=NO_SLEEP)
        assert resp.text == "informational"
        assert resp.attempts == 3

    def test_rate_limit_exhaustion(self):
        script = [{"status": 429}] * 5
        with StubLLMServer(script=script) as stub:
            with pytest.raises(RateLimited):
                complete(endpoint(stub.base_url, max_retries=2), "p", sleep=NO_SLEEP)
            assert len(stub.requests) == 3  # max_retries + 1

    def test_auth_error_no_retry(self):
        with StubLLMServer(script=[{"status": 401}]) as stub:
            with pytest.raises(AuthError):
                complete(endpoint(stub.base_url), "p", sleep=NO_SLEEP)
            assert len(stub.requests) == 1

    def test_validation_4xx_no_retry(self):
        with StubLLMServer(script=[{"status": 422}]) as stub:
            with pytest.raises(MalformedResponse):
                complete(endpoint(stub.base_url), "p", sleep=NO_SLEEP)
            assert len(stub.requests) == 1

    def test_5xx_retried_then_succeeds(self):
        script = [{"status": 503}, {"reply": "transactional"}]
        with StubLLMServer(script=script) as stub:
            resp = complete(endpoint(stub.base_url), "p", sleep=NO_SLEEP)
        assert resp.attempts == 2

    def test_malformed_body(self):
        with StubLLMServer(script=[{"raw_body": '{"nope": true}'}]) as stub:
            with pytest.raises(MalformedResponse):
                complete(endpoint(stub.base_url), "p", sleep=NO_SLEEP)

    def test_backoff_deterministic_under_seeded_jitter(self):
        delays_a, delays_b = [], []
        script = [{"status": 429}, {"status": 429}, {"reply": "ok informational"}]
        for delays in (delays_a, delays_b):
            with StubLLMServer(script=list(script)) as stub:
                complete(
                    endpoint(stub.base_url),
                    "p",
                    rng=random.Random(77),
                    sleep=delays.append,
                )
        assert delays_a == delays_b and len(delays_a) == 2

    def test_bearer_header_sent(self):
        with StubLLMServer(script=[{"reply": "informational"}]) as stub:
            complete(endpoint(stub.base_url), "p", sleep=NO_SLEEP)
            assert stub.requests[0]["auth"] == "Bearer sekret-key-123"


class TestEndpointConfig:
    def test_missing_key_env_raises_auth(self, tmp_path):
        cfg = tmp_path / "endpoint.yaml"
        cfg.write_text(
            "base_url: http://localhost:1\nmodel: m\napi_key_env: NOT_SET_ANYWHERE\n",
            encoding="utf-8",
        )
        with pytest.raises(AuthError):
            ModelEndpoint.from_config(cfg, env={})

    def test_loads_with_key(self, tmp_path):
        cfg = tmp_path / "endpoint.yaml"
        cfg.write_text(
            "base_url: http://localhost:1\nmodel: m\napi_key_env: K\nmax_concurrent: 2\n",
            encoding="utf-8",
        )
        ep = ModelEndpoint.from_config(cfg, env={"K": "zzz"})
        assert ep.max_concurrent == 2 and ep.api_key == "zzz"
        assert ep.temperature == 0.0

    def test_bad_concurrency_rejected(self):
        with pytest.raises(ConfigError):
            endpoint("http://x", max_concurrent=0)

    def test_secret_not_in_repr_or_public_dict(self):
        ep = endpoint("http://x")
        assert "sekret-key-123" not in repr(ep)
        assert "sekret-key-123" not in str(ep.public_dict())


class TestClassifyBatch:
    def queries(self, n):
        return [Query.from_raw(f"some question number {i}", id=f"q{i}") for i in range(n)]

    def test_constant_stub(self):
        with StubLLMServer(default_reply="informational") as stub:
            items, report = classify_batch(
                endpoint(stub.base_url), Scenario.DEFINITIONS_ONLY, self.queries(10), sleep=NO_SLEEP
            )
        assert [i.label for i in items] == [IntentLabel.INFORMATIONAL] * 10
        assert report.ok == 10 and report.oov_count == 0 and report.error_count == 0
        assert report.prompt_tokens == 70

    def test_oov_counted_not_fatal(self):
        def reply(prompt, index):
            if "number 3" in prompt:
                return {"reply": "this one is commercial"}
            return {"reply": "navigational"}

        with StubLLMServer(reply_fn=reply) as stub:
            items, report = classify_batch(
                endpoint(stub.base_url), Scenario.DEFINITIONS_ONLY, self.queries(10), sleep=NO_SLEEP
            )
        assert report.oov_count == 1 and report.ok == 9
        oov = [i for i in items if i.error == "oov"]
        assert len(oov) == 1 and oov[0].query_id == "q3" and oov[0].label is None

    def test_concurrency_cap_respected(self):
        def reply(prompt, index):
            return {"reply": "informational", "delay": 0.05}

        with StubLLMServer(reply_fn=reply) as stub:
            classify_batch(
                endpoint(stub.base_url, max_concurrent=2),
                Scenario.DEFINITIONS_ONLY,
                self.queries(8),
                sleep=NO_SLEEP,
            )
            assert stub.max_in_flight <= 2

    def test_order_independent_of_concurrency(self):
        def reply(prompt, index):
            # Earlier requests answer slower, so completion order inverts.
            delay = 0.08 if "number 0" in prompt or "number 1" in prompt else 0.0
            word = "transactional" if "number 0" in prompt else "navigational"
            return {"reply": word, "delay": delay}

        results = {}
        for workers in (1, 4):
            with StubLLMServer(reply_fn=reply) as stub:
                items, _ = classify_batch(
                    endpoint(stub.base_url, max_concurrent=workers),
                    Scenario.DEFINITIONS_ONLY,
                    self.queries(6),
                    sleep=NO_SLEEP,
                )
            results[workers] = [(i.query_id, i.label) for i in items]
        assert results[1] == results[4]
        assert results[1][0] == ("q0", IntentLabel.TRANSACTIONAL)

    def test_transport_errors_recorded_batch_survives(self):
        script = [{"status": 500}] * 8 + [{"reply": "informational"}] * 100
        with StubLLMServer(script=script) as stub:
            items, report = classify_batch(
                endpoint(stub.base_url, max_retries=0, max_concurrent=1),
                Scenario.DEFINITIONS_ONLY,
                self.queries(5),
                sleep=NO_SLEEP,
            )
        assert report.error_count >= 1
        assert report.ok + report.error_count == 5

    def test_secret_never_logged(self, caplog):
        with caplog.at_level(logging.DEBUG):
            with StubLLMServer(default_reply="informational") as stub:
                classify_batch(
                    endpoint(stub.base_url), Scenario.DEFINITIONS_ONLY, self.queries(3), sleep=NO_SLEEP
                )
        assert "sekret-key-123" not in caplog.text

    def test_record_shape(self):
        ok = BatchItem(query_id="q1", label=IntentLabel.NAVIGATIONAL, raw_text="Navigational")
        rec = batch_item_record(ok, Query.from_raw("acme portal", id="q1"))
        assert rec == {
            "id": "q1",
            "query": "acme portal",
            "label": "navigational",
            "confidence": 1.0,
            "provenance": "llm-icl",
        }
        bad = BatchItem(query_id="q2", label=None, raw_text="commercial", error="oov")
        rec = batch_item_record(bad, Query.from_raw("odd query", id="q2"))
        assert rec["label"] is None and rec["error"] == "oov" and rec["raw"] == "commercial"
