"""Minimal chat-completion client with timeout and bounded retries."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import httpx

from .errors import InfrastructureError, OpeForgeError, FailureKind

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECS = 600.0
DEFAULT_RETRIES = 2
DEFAULT_BACKOFF_SECS = 2.0


class EmptyResponseError(OpeForgeError):
    failure_kind = FailureKind.SYNTAX_CODE_ERROR


class LLMConfigError(OpeForgeError, ValueError):
    failure_kind = FailureKind.INFRASTRUCTURE


@dataclass
class LLMConfig:
    url: str
    key: str
    timeout: float = DEFAULT_TIMEOUT_SECS
    model: str | None = None
    retries: int = DEFAULT_RETRIES
    backoff: float = DEFAULT_BACKOFF_SECS

    @classmethod
    def from_env(cls, environ=None) -> "LLMConfig":
        env = os.environ if environ is None else environ
        url = env.get("OPEFORGE_LLM_URL")
        key = env.get("OPEFORGE_LLM_KEY")
        if not url or not key:
            raise LLMConfigError("OPEFORGE_LLM_URL and OPEFORGE_LLM_KEY must both be set")
        timeout = float(env.get("OPEFORGE_LLM_TIMEOUT_SECS", DEFAULT_TIMEOUT_SECS))
        return cls(url, key, timeout, env.get("OPEFORGE_LLM_MODEL"))


class LLMClient:
    """POSTs OpenAI-style chat requests; safe to share between threads."""

    def __init__(self, config: LLMConfig, transport: httpx.BaseTransport | None = None, sleep=time.sleep):
        self.config = config
        self._sleep = sleep
        self._http = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self) -> None:
        self._http.close()

    def chat(self, system: str, user: str) -> str:
        cfg = self.config
        body = {"messages": [{"role": "system", "content": system}, {"role": "user", "content": user}]}
        if cfg.model:
            body["model"] = cfg.model
        headers = {"Authorization": f"Bearer {cfg.key}"}
        last: str = ""
        for attempt in range(cfg.retries + 1):
            if attempt:
                delay = cfg.backoff * 2 ** (attempt - 1)
                log.warning("LLM request failed (%s); retry %d/%d in %.1fs", last, attempt, cfg.retries, delay)
                self._sleep(delay)
            try:
                resp = self._http.post(cfg.url, json=body, headers=headers)
            except httpx.TimeoutException:
                last = f"Timeout of {cfg.timeout:.1f}s exceeded"
                continue
            except httpx.TransportError as exc:
                last = f"connection error: {exc}"
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise InfrastructureError(f"LLM endpoint returned HTTP {resp.status_code}")
            return _content(resp)
        raise InfrastructureError(f"RetryError: {last} after {cfg.retries + 1} attempts")


def _content(resp: httpx.Response) -> str:
    try:
        payload = resp.json()
        text = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise InfrastructureError("malformed LLM response") from None
    if not text or not str(text).strip():
        raise EmptyResponseError("empty response from LLM")
    return str(text)
