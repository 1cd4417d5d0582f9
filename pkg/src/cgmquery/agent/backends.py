"""LLM backend implementations: a deterministic scripted test double and an
OpenAI-compatible HTTP client.

Backend contract: ``complete(system_prompt, messages) -> str`` where
``messages`` is a list of {"role", "content"} dicts. The scripted backend
is fully deterministic; the HTTP backend carries the retry/timeout policy
a real client needs.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import httpx

ENV_API_BASE = "CGMQUERY_API_BASE"
ENV_API_KEY = "CGMQUERY_API_KEY"
ENV_MODEL = "CGMQUERY_MODEL"


class BackendError(Exception):
    pass


class ScriptedMiss(BackendError):
    """No script rule matched the prompt (or a rule ran out of replies)."""


Reply = "str | dict | Callable[[list[dict]], str]"


@dataclass
class ScriptRule:
    """Fires when every ``match`` substring appears in the conversation.

    ``replies`` are consumed in order across matches, so one rule can drive
    a multi-step exchange (tool call, then final). A reply may be a string,
    a JSON-serializable dict, or a callable over the message list for
    replies that must be derived from earlier tool results.
    """

    match: tuple[str, ...]
    replies: list[Any]
    _cursor: int = field(default=0, repr=False)

    def matches(self, haystack: str) -> bool:
        return all(fragment in haystack for fragment in self.match)

    def next_reply(self, messages: list[dict]) -> str:
        if self._cursor >= len(self.replies):
            raise ScriptedMiss(
                f"script rule {self.match!r} exhausted after {len(self.replies)} replies"
            )
        reply = self.replies[self._cursor]
        self._cursor += 1
        if callable(reply):
            return reply(messages)
        if isinstance(reply, dict):
            return json.dumps(reply, sort_keys=True)
        return str(reply)


def echo_merged_results(messages: list[dict]) -> str:
    """Final-answer reply assembled from the tool results seen so far.

    Mirrors what a faithful model does: copy the dispatched aggregates into
    the final payload verbatim.
    """
    merged: dict[str, dict] = {}
    for msg in messages:
        try:
            obj = json.loads(msg.get("content", ""))
        except (json.JSONDecodeError, TypeError):
            continue
        result = obj.get("tool_result") if isinstance(obj, dict) else None
        if isinstance(result, dict):
            for date_key, row in result.items():
                if isinstance(row, dict):
                    merged.setdefault(date_key, {}).update(row)
    return json.dumps({"action": "final", "result": merged}, sort_keys=True)


class ScriptedBackend:
    """Deterministic test double: first matching rule wins, in order."""

    def __init__(self, rules: Sequence[ScriptRule], model_name: str = "scripted"):
        self.rules = list(rules)
        self.model_name = model_name
        self.temperature = 0.0
        self.calls = 0

    def complete(self, system_prompt: str, messages: list[dict]) -> str:
        self.calls += 1
        haystack = system_prompt + "\n" + "\n".join(
            str(m.get("content", "")) for m in messages
        )
        for rule in self.rules:
            if rule.matches(haystack):
                return rule.next_reply(messages)
        head = haystack[:200].replace("\n", " ")
        raise ScriptedMiss(f"no script rule matches prompt starting: {head!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        """Load rules from JSON: [{"match": [...], "replies": [...]}].

        A reply of {"echo_merged_results": true} becomes the callable that
        finalizes from accumulated tool results.
        """
        rules = []
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        for entry in data:
            replies: list[Any] = []
            for r in entry["replies"]:
                if isinstance(r, dict) and r.get("echo_merged_results"):
                    replies.append(echo_merged_results)
                else:
                    replies.append(r)
            rules.append(ScriptRule(tuple(entry["match"]), replies))
        return cls(rules)


class HttpBackend:
    """OpenAI-compatible chat-completions client.

    Configured via environment (CGMQUERY_API_BASE, CGMQUERY_API_KEY,
    CGMQUERY_MODEL) or constructor arguments; 2 retries with exponential
    backoff and a 60 s per-call timeout.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model_name: str | None = None,
        temperature: float = 1.0,
        timeout_seconds: float = 60.0,
        max_retries: int = 2,
    ):
        self.base_url = (base_url or os.environ.get(ENV_API_BASE, "")).rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.model_name = model_name or os.environ.get(ENV_MODEL, "")
        self.temperature = temperature
        self.timeout_seconds = timeout_seconds
        self.max_retries = max_retries
        if not self.base_url or not self.model_name:
            raise BackendError(
                f"HTTP backend needs {ENV_API_BASE} and {ENV_MODEL} (or explicit args)"
            )

    def complete(self, system_prompt: str, messages: list[dict]) -> str:
        body = {
            "model": self.model_name,
            "temperature": self.temperature,
            "messages": [{"role": "system", "content": system_prompt}, *messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                response = httpx.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout_seconds,
                )
                response.raise_for_status()
                payload = response.json()
                return payload["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(2.0 ** attempt)
        raise BackendError(f"backend call failed after retries: {last_error}")
