"""Minimal chat-completion client: one wire shape, strict JSON extraction,
retries with backoff, and a null backend for offline determinism."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

log = logging.getLogger(__name__)

ENV_ENDPOINT = "S2C_LLM_ENDPOINT"
ENV_MODEL = "S2C_LLM_MODEL"
ENV_API_KEY = "S2C_LLM_API_KEY"


class LlmUnavailable(RuntimeError):
    """Transport, auth, or rate-limit failure; callers fall back uniformly."""


class NoJsonFound(ValueError):
    """The reply contains no balanced top-level JSON object."""


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str
    api_key: str = ""
    temperature: float = 0.0
    timeout_s: float = 30.0
    max_retries: int = 3

    def __post_init__(self):
        if not (self.timeout_s > 0):
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")


@dataclass
class ChatExchange:
    """Log record of one completed (or failed) chat call."""

    system: str
    user: str
    reply: Optional[str]
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0
    attempts: int = 0


def config_from_env() -> Optional[LlmConfig]:
    """Build a config from environment variables; None when not configured.

    The API key is read from the environment only and never written to files
    or logs.
    """
    endpoint = os.environ.get(ENV_ENDPOINT)
    model = os.environ.get(ENV_MODEL)
    if not endpoint or not model:
        return None
    return LlmConfig(endpoint=endpoint, model=model,
                     api_key=os.environ.get(ENV_API_KEY, ""))


class NullClient:
    """Offline backend: every completion is the empty JSON object."""

    def complete(self, system: str, user: str) -> str:
        return "{}"


class HttpClient:
    """Chat-completion client over the standard messages/model/temperature
    wire shape; all failures collapse to LlmUnavailable."""

    def __init__(self, cfg: LlmConfig):
        self.cfg = cfg
        self.exchanges: list = []

    def complete(self, system: str, user: str) -> str:
        import requests

        cfg = self.cfg
        payload = {
            "model": cfg.model,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        start = time.monotonic()
        last_err = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = requests.post(cfg.endpoint, json=payload, headers=headers,
                                     timeout=cfg.timeout_s)
                resp.raise_for_status()
                doc = resp.json()
                reply = doc["choices"][0]["message"]["content"]
                usage = doc.get("usage", {})
                self.exchanges.append(ChatExchange(
                    system=system, user=user, reply=reply,
                    prompt_tokens=int(usage.get("prompt_tokens", 0)),
                    completion_tokens=int(usage.get("completion_tokens", 0)),
                    latency_ms=(time.monotonic() - start) * 1e3,
                    attempts=attempt + 1,
                ))
                return reply
            except Exception as exc:  # transport/auth/rate-limit/shape: uniform
                last_err = exc
                log.debug("llm attempt %d failed: %s", attempt + 1, type(exc).__name__)
                if attempt < cfg.max_retries:
                    time.sleep(min(2.0 ** attempt * 0.5, 8.0))
        self.exchanges.append(ChatExchange(
            system=system, user=user, reply=None,
            latency_ms=(time.monotonic() - start) * 1e3,
            attempts=cfg.max_retries + 1,
        ))
        raise LlmUnavailable(f"llm endpoint unavailable: {type(last_err).__name__}")


def make_client(mode: str = "off"):
    """Client factory for the CLI flag: 'off' is the null backend (default)."""
    if mode == "off":
        return NullClient()
    if mode == "on":
        cfg = config_from_env()
        if cfg is None:
            log.warning("llm requested but %s/%s not set; using null backend",
                        ENV_ENDPOINT, ENV_MODEL)
            return NullClient()
        return HttpClient(cfg)
    raise ValueError(f"unknown llm mode {mode!r}")


def _strip_fences(text: str) -> str:
    out = []
    for chunk in text.split("```"):
        body = chunk
        if body[:4].lower() == "json":
            body = body[4:]
        out.append(body)
    return "\n".join(out)


def extract_json(reply: str) -> dict:
    """Parse the first balanced top-level JSON object in the reply.

    Fenced code blocks are unwrapped first. Raises NoJsonFound when no
    parseable object exists.
    """
    if not isinstance(reply, str):
        raise NoJsonFound("reply is not text")
    text = _strip_fences(reply)
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_str = False
                continue
            if ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start:i + 1]
                    try:
                        doc = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(doc, dict):
                        return doc
                    break
        start = text.find("{", start + 1)
    raise NoJsonFound("no balanced JSON object in reply")
