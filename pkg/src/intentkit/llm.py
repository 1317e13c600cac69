"""Minimal chat-completion client with bounded concurrency and retries.

Speaks the common chat-completion JSON wire format (messages array + model
field) so the same code runs against hosted providers and the local stub
server used in tests. Temperature defaults to 0: classification should be
deterministic.
"""

from __future__ import annotations

import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import requests
import yaml

from .errors import (
    AuthError,
    ConfigError,
    MalformedResponse,
    OutOfVocabularyLabel,
    RateLimited,
    Timeout,
    TransportError,
)
from .model import IntentLabel, Query
from .prompts import FewShotBank, Scenario, render, parse_response

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelEndpoint:
    """Connection settings for one hosted model."""

    base_url: str
    model: str
    api_key: str = field(repr=False, default="")
    timeout_s: float = 30.0
    max_retries: int = 3
    max_concurrent: int = 4
    temperature: float = 0.0
    backoff_base_s: float = 0.5
    backoff_max_s: float = 8.0

    def __post_init__(self) -> None:
        if self.max_concurrent < 1:
            raise ConfigError(f"max_concurrent must be >= 1, got {self.max_concurrent}")
        if self.max_retries < 0:
            raise ConfigError(f"max_retries must be >= 0, got {self.max_retries}")

    def public_dict(self) -> dict[str, Any]:
        """Settings safe to log or write into manifests (no secret)."""
        return {
            "base_url": self.base_url,
            "model": self.model,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "max_concurrent": self.max_concurrent,
            "temperature": self.temperature,
        }

    @classmethod
    def from_config(cls, path: str | Path, env: Mapping[str, str] | None = None) -> "ModelEndpoint":
        """Load endpoint config; the API key comes from the named env var."""
        env = os.environ if env is None else env
        with open(path, "r", encoding="utf-8") as fh:
            rec = yaml.safe_load(fh)
        if not isinstance(rec, dict):
            raise ConfigError(f"{path}: expected a mapping")
        key_env = str(rec.get("api_key_env", "INTENTKIT_API_KEY"))
        api_key = env.get(key_env, "")
        if not api_key:
            raise AuthError(f"API key env var {key_env} is not set")
        try:
            return cls(
                base_url=str(rec["base_url"]),
                model=str(rec["model"]),
                api_key=api_key,
                timeout_s=float(rec.get("timeout_s", 30.0)),
                max_retries=int(rec.get("max_retries", 3)),
                max_concurrent=int(rec.get("max_concurrent", 4)),
                temperature=float(rec.get("temperature", 0.0)),
                backoff_base_s=float(rec.get("backoff_base_s", 0.5)),
                backoff_max_s=float(rec.get("backoff_max_s", 8.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"{path}: missing endpoint field {exc}") from exc


@dataclass(frozen=True)
class RawResponse:
    text: str
    latency_s: float
    attempts: int
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


def _backoff_delay(attempt: int, ep: ModelEndpoint, rng: random.Random) -> float:
    base = min(ep.backoff_base_s * (2 ** attempt), ep.backoff_max_s)
    return base * (0.5 + 0.5 * rng.random())


def complete(
    ep: ModelEndpoint,
    prompt: str,
    session: requests.Session | None = None,
    rng: random.Random | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> RawResponse:
    """Send one chat-completion request, retrying transient failures.

    Retries (exponential backoff with jitter) cover transport errors and
    HTTP 429/5xx; auth and validation rejections are terminal on the first
    attempt. `rng` seeds the jitter so schedules are reproducible in tests.
    """
    rng = rng if rng is not None else random.Random()
    url = ep.base_url.rstrip("/") + "/chat/completions"
    body = {
        "model": ep.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": ep.temperature,
    }
    headers = {"Authorization": f"Bearer {ep.api_key}", "Content-Type": "application/json"}
    post = session.post if session is not None else requests.post

    start = time.perf_counter()
    attempts = 0
    last_retryable: TransportError | None = None
    while attempts <= ep.max_retries:
        attempts += 1
        try:
            resp = post(url, json=body, headers=headers, timeout=ep.timeout_s)
        except requests.Timeout:
            last_retryable = Timeout(f"no response within {ep.timeout_s}s")
        except requests.RequestException as exc:
            last_retryable = TransportError(f"transport failure: {exc}")
        else:
            status = resp.status_code
            if status in (401, 403):
                raise AuthError(f"HTTP {status} from {ep.base_url}")
            if 400 <= status < 500 and status != 429:
                raise MalformedResponse(f"HTTP {status}: {resp.text[:200]}")
            if status == 429:
                last_retryable = RateLimited(f"HTTP 429 after {attempts} attempts")
            elif status >= 500:
                last_retryable = TransportError(f"HTTP {status} after {attempts} attempts")
            else:
                try:
                    data = resp.json()
                    text = data["choices"][0]["message"]["content"]
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    raise MalformedResponse(f"unusable completion body: {exc}") from exc
                usage = data.get("usage") or {}
                return RawResponse(
                    text=str(text),
                    latency_s=time.perf_counter() - start,
                    attempts=attempts,
                    prompt_tokens=usage.get("prompt_tokens"),
                    completion_tokens=usage.get("completion_tokens"),
                )
        if attempts <= ep.max_retries:
            sleep(_backoff_delay(attempts - 1, ep, rng))
    assert last_retryable is not None
    raise last_retryable


@dataclass(frozen=True)
class BatchItem:
    """Per-query outcome inside a batch run."""

    query_id: str
    label: IntentLabel | None
    raw_text: str = ""
    error: str | None = None
    attempts: int = 0
    latency_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass
class BatchReport:
    total: int = 0
    ok: int = 0
    oov_count: int = 0
    error_count: int = 0
    total_latency_s: float = 0.0
    wall_s: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "ok": self.ok,
            "oov_count": self.oov_count,
            "error_count": self.error_count,
            "total_latency_s": round(self.total_latency_s, 6),
            "wall_s": round(self.wall_s, 6),
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


def classify_batch(
    ep: ModelEndpoint,
    scenario: Scenario,
    queries: Sequence[Query],
    bank: FewShotBank | None = None,
    definitions: str | None = None,
    keywords: Mapping[str, Sequence[str]] | None = None,
    rng_seed: int | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[list[BatchItem], BatchReport]:
    """Render, send, and parse every query with at most `ep.max_concurrent`
    requests in flight. Output order matches input order; individual
    failures are recorded, never fatal to the batch.
    """
    report = BatchReport(total=len(queries))
    session = requests.Session()

    def one(indexed: tuple[int, Query]) -> BatchItem:
        i, query = indexed
        prompt = render(scenario, query, bank=bank, definitions=definitions, keywords=keywords)
        rng = random.Random(None if rng_seed is None else (rng_seed, i))
        try:
            resp = complete(ep, prompt, session=session, rng=rng, sleep=sleep)
        except TransportError as exc:
            return BatchItem(query_id=query.query_id, label=None, error=f"transport: {exc}")
        try:
            parsed: IntentLabel | None = parse_response(resp.text)
            error = None
        except OutOfVocabularyLabel:
            parsed, error = None, "oov"
        return BatchItem(
            query_id=query.query_id,
            label=parsed,
            raw_text=resp.text,
            error=error,
            attempts=resp.attempts,
            latency_s=resp.latency_s,
            prompt_tokens=resp.prompt_tokens or 0,
            completion_tokens=resp.completion_tokens or 0,
        )

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=ep.max_concurrent) as pool:
        items = list(pool.map(one, enumerate(queries)))
    report.wall_s = time.perf_counter() - start
    for item in items:
        report.total_latency_s += item.latency_s
        report.prompt_tokens += item.prompt_tokens
        report.completion_tokens += item.completion_tokens
        if item.label is not None:
            report.ok += 1
        elif item.error == "oov":
            report.oov_count += 1
        else:
            report.error_count += 1
    return items, report


def batch_item_record(item: BatchItem, query: Query, provenance: str = "llm-icl") -> dict[str, Any]:
    """Prediction JSONL record; OOV/transport failures keep label null."""
    rec: dict[str, Any] = {
        "id": item.query_id,
        "query": query.text,
        "label": item.label.value if item.label is not None else None,
        "confidence": 1.0 if item.label is not None else None,
        "provenance": provenance,
    }
    if item.error:
        rec["error"] = item.error
        if item.raw_text:
            rec["raw"] = item.raw_text[:500]
    return rec
