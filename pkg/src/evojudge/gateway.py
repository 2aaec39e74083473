"""Wire client for an OpenAI-compatible chat-completions endpoint.

POSTs to ``{base}/v1/chat/completions`` with bearer auth. Transport failures
and 429/5xx replies are retried with exponential backoff (base 1s, factor 2,
at most 5 attempts) under a wall-clock budget; 401 is terminal. Token usage
is taken verbatim from the provider's usage block and never estimated: a
missing block counts as zero tokens and sets a warning flag. Every call,
success or failure, is reported to the configured event sink exactly once.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import requests

from evojudge.core import DomainError, InvalidInputError, canonical_json, sha256_hex

API_KEY_ENV = "MADE_API_KEY"
API_BASE_ENV = "MADE_API_BASE"

Role = Literal["system", "user", "assistant"]


class TransportError(DomainError):
    """Retries exhausted without a usable reply."""


class CredentialError(DomainError):
    """The endpoint rejected our credentials; never retried."""


class ProtocolError(DomainError):
    """The provider replied with something that is not a chat completion."""


@dataclass(frozen=True, slots=True)
class ChatMessage:
    role: Role
    content: str


@dataclass(frozen=True, slots=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 2048
    request_id: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise InvalidInputError("chat request needs at least one message")
        for m in self.messages:
            if m.role not in ("system", "user", "assistant"):
                raise InvalidInputError(f"unknown message role {m.role!r}")

    def digest(self) -> str:
        body = canonical_json(
            {
                "model": self.model,
                "messages": [{"role": m.role, "content": m.content} for m in self.messages],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }
        )
        return sha256_hex(body.encode("utf-8"))


@dataclass(frozen=True, slots=True)
class Usage:
    """Exact accounting for one completed call."""

    input_tokens: int
    output_tokens: int
    latency_s: float
    cost: float
    usage_missing: bool = False

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise InvalidInputError("token counts must be nonnegative")


@dataclass(frozen=True, slots=True)
class UsageSummary:
    count: int
    total_cost: float
    average_cost: float
    total_time_s: float
    average_time_s: float
    total_input_tokens: int
    average_input_tokens: float
    total_output_tokens: int
    average_output_tokens: float


def account(usages: Sequence[Usage]) -> UsageSummary:
    """Exact sums and arithmetic means; an empty list yields all zeros."""
    n = len(usages)
    if n == 0:
        return UsageSummary(0, 0.0, 0.0, 0.0, 0.0, 0, 0.0, 0, 0.0)
    cost = sum(u.cost for u in usages)
    latency = sum(u.latency_s for u in usages)
    tokens_in = sum(u.input_tokens for u in usages)
    tokens_out = sum(u.output_tokens for u in usages)
    return UsageSummary(
        count=n,
        total_cost=cost,
        average_cost=cost / n,
        total_time_s=latency,
        average_time_s=latency / n,
        total_input_tokens=tokens_in,
        average_input_tokens=tokens_in / n,
        total_output_tokens=tokens_out,
        average_output_tokens=tokens_out / n,
    )


@dataclass(frozen=True, slots=True)
class PriceTable:
    """Per-token prices by model name. Unknown models price at zero."""

    prices: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for model, (p_in, p_out) in self.prices.items():
            if p_in < 0 or p_out < 0:
                raise InvalidInputError(f"negative price for model {model!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "PriceTable":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({m: (float(v["input"]), float(v["output"])) for m, v in raw.items()})

    def cost(self, model: str, input_tokens: int, output_tokens: int) -> float:
        p_in, p_out = self.prices.get(model, (0.0, 0.0))
        return input_tokens * p_in + output_tokens * p_out


@dataclass(frozen=True, slots=True)
class GatewayConfig:
    base_url: str
    api_key: str = ""
    timeout_s: float = 60.0
    max_attempts: int = 5
    backoff_base_s: float = 1.0
    backoff_factor: float = 2.0
    retry_budget_s: float = 120.0
    max_concurrent: int = 4

    @classmethod
    def from_env(cls, **overrides) -> "GatewayConfig":
        base = overrides.pop("base_url", None) or os.environ.get(API_BASE_ENV, "")
        key = overrides.pop("api_key", None) or os.environ.get(API_KEY_ENV, "")
        if not base:
            raise InvalidInputError(f"no endpoint configured (set {API_BASE_ENV})")
        return cls(base_url=base, api_key=key, **overrides)


_RETRYABLE = {429, 500, 502, 503, 504}

EventSink = Callable[[dict], None]


class ChatGateway:
    """Thread-safe client; concurrent in-flight requests bounded by config."""

    def __init__(
        self,
        config: GatewayConfig,
        price_table: PriceTable | None = None,
        event_sink: EventSink | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        self._config = config
        self._prices = price_table or PriceTable()
        self._event_sink = event_sink
        self._sleep = sleeper
        self._slots = threading.Semaphore(config.max_concurrent)
        self._lock = threading.Lock()
        self._usages: list[Usage] = []

    @property
    def usages(self) -> list[Usage]:
        with self._lock:
            return list(self._usages)

    def summary(self) -> UsageSummary:
        return account(self.usages)

    def complete(self, request: ChatRequest) -> tuple[str, Usage]:
        with self._slots:
            return self._complete(request)

    def _complete(self, request: ChatRequest) -> tuple[str, Usage]:
        cfg = self._config
        url = cfg.base_url.rstrip("/") + "/v1/chat/completions"
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        body = {
            "model": request.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

        start = time.monotonic()
        attempts = 0
        last_error = ""
        while attempts < cfg.max_attempts:
            attempts += 1
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=cfg.timeout_s)
            except requests.RequestException as exc:
                last_error = f"transport: {exc}"
            else:
                if resp.status_code == 200:
                    elapsed = time.monotonic() - start
                    try:
                        text, usage = self._parse_reply(request.model, resp.json(), elapsed)
                    except ProtocolError as exc:
                        self._emit(request, attempts, None, ok=False, error=str(exc))
                        raise
                    self._record(usage)
                    self._emit(request, attempts, usage, ok=True)
                    return text, usage
                if resp.status_code == 401:
                    self._emit(request, attempts, None, ok=False, error="credential rejected")
                    raise CredentialError("endpoint rejected credentials (401)")
                if resp.status_code not in _RETRYABLE:
                    msg = f"unexpected status {resp.status_code}: {resp.text[:200]}"
                    self._emit(request, attempts, None, ok=False, error=msg)
                    raise ProtocolError(msg)
                last_error = f"status {resp.status_code}"

            if attempts >= cfg.max_attempts:
                break
            delay = cfg.backoff_base_s * cfg.backoff_factor ** (attempts - 1)
            if time.monotonic() - start + delay > cfg.retry_budget_s:
                last_error += " (retry budget exhausted)"
                break
            self._sleep(delay)

        self._emit(request, attempts, None, ok=False, error=last_error)
        raise TransportError(f"retries exhausted after {attempts} attempts: {last_error}")

    def _parse_reply(self, model: str, payload: dict, elapsed: float) -> tuple[str, Usage]:
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(f"malformed completion payload: {str(payload)[:200]}")
        if not isinstance(text, str):
            raise ProtocolError("completion content is not a string")
        raw_usage = payload.get("usage")
        if isinstance(raw_usage, dict):
            tokens_in = int(raw_usage.get("prompt_tokens", 0))
            tokens_out = int(raw_usage.get("completion_tokens", 0))
            missing = False
        else:
            tokens_in = tokens_out = 0
            missing = True
        usage = Usage(
            input_tokens=tokens_in,
            output_tokens=tokens_out,
            latency_s=elapsed,
            cost=self._prices.cost(model, tokens_in, tokens_out),
            usage_missing=missing,
        )
        return text, usage

    def _record(self, usage: Usage) -> None:
        with self._lock:
            self._usages.append(usage)

    def _emit(self, request: ChatRequest, attempts: int, usage: Usage | None, *, ok: bool, error: str = "") -> None:
        if self._event_sink is None:
            return
        payload = {
            "request_digest": request.digest(),
            "model": request.model,
            "attempts": attempts,
            "ok": ok,
            "input_tokens": usage.input_tokens if usage else 0,
            "output_tokens": usage.output_tokens if usage else 0,
            "cost": usage.cost if usage else 0.0,
            "latency_s": usage.latency_s if usage else None,
            "usage_missing": usage.usage_missing if usage else False,
        }
        if error:
            payload["error"] = error
        self._event_sink(payload)
