"""Tool registry and dispatcher enforcing the privacy boundary.

Tool calls come in as {"name": ..., "arguments": {...}}; results go out as
nested {date_key: {feature: value}} mappings (or trend/excursion
aggregates). Raw readings never cross: every payload is scanned before it
leaves :func:`ToolRegistry.dispatch`, and the audit log records an argument
digest rather than argument values.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time as time_mod
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Sequence

from .privacy import assert_payload_safe

#: Parameter kinds understood by schema validation.
PARAM_TYPES = (
    "string",
    "number",
    "integer",
    "boolean",
    "date",
    "datetime",
    "date_list",
    "clock_window",
)


class SandboxError(Exception):
    pass


class UnknownToolError(SandboxError):
    pass


class DuplicateToolError(SandboxError):
    pass


class SchemaError(SandboxError):
    pass


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: str
    required: bool = False
    description: str = ""

    def __post_init__(self) -> None:
        if self.type not in PARAM_TYPES:
            raise SandboxError(f"unknown parameter type: {self.type!r}")


@dataclass(frozen=True)
class ToolSpec:
    """What the reasoning layer sees: name, parameters, description."""

    name: str
    description: str
    params: tuple[ParamSpec, ...] = ()

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": [
                {
                    "name": p.name,
                    "type": p.type,
                    "required": p.required,
                    "description": p.description,
                }
                for p in self.params
            ],
        }


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"name": self.name, "arguments": self.arguments},
            sort_keys=True,
        )

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "ToolCall":
        if not isinstance(obj, dict) or "name" not in obj:
            raise SchemaError(f"not a tool call: {obj!r}")
        args = obj.get("arguments") or {}
        if not isinstance(args, dict):
            raise SchemaError("tool-call arguments must be an object")
        return cls(name=str(obj["name"]), arguments=args)


@dataclass(frozen=True)
class ToolResult:
    """Aggregates only: nested date_key -> feature -> value."""

    payload: dict[str, Any]

    def to_json(self) -> str:
        return json.dumps(self.payload, sort_keys=True)


def merge_payloads(payloads: Sequence[dict[str, Any]]) -> dict[str, Any]:
    """Fold several tool payloads into one: rows merge per date key, later
    calls win on feature collisions."""
    merged: dict[str, Any] = {}
    for payload in payloads:
        for date_key, row in payload.items():
            if isinstance(row, dict) and isinstance(merged.get(date_key), dict):
                merged[date_key].update(row)
            else:
                merged[date_key] = row
    return merged


def _validate_value(param: ParamSpec, value: Any) -> None:
    t = param.type
    ok = True
    if t == "string":
        ok = isinstance(value, str)
    elif t == "number":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif t == "integer":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif t == "boolean":
        ok = isinstance(value, bool)
    elif t == "date":
        ok = isinstance(value, str) and _is_date(value)
    elif t == "datetime":
        ok = isinstance(value, str) and _is_datetime(value)
    elif t == "date_list":
        ok = (
            isinstance(value, list)
            and len(value) > 0
            and all(isinstance(v, str) and _is_date(v) for v in value)
        )
    elif t == "clock_window":
        ok = isinstance(value, str) and "-" in value
    if not ok:
        raise SchemaError(
            f"argument {param.name!r} does not match type {t!r}: {value!r}"
        )


def _is_date(text: str) -> bool:
    try:
        datetime.strptime(text, "%Y-%m-%d")
        return True
    except ValueError:
        return False


def _is_datetime(text: str) -> bool:
    try:
        datetime.fromisoformat(text)
        return True
    except ValueError:
        return False


class AuditLog:
    """Append-only JSON-lines log of dispatches.

    Records tool name, a SHA-256 digest of the canonical argument JSON, and
    wall-clock latency. Argument values (and raw data, a fortiori) are never
    written unless ``full_arguments`` is explicitly enabled for debugging.
    """

    def __init__(self, path: str | Path | None = None, full_arguments: bool = False):
        self.path = Path(path) if path is not None else None
        self.full_arguments = full_arguments
        self.entries: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def record(self, call: ToolCall, latency_seconds: float, ok: bool) -> None:
        digest = hashlib.sha256(call.to_json().encode("utf-8")).hexdigest()
        entry: dict[str, Any] = {
            "tool": call.name,
            "arguments_sha256": digest,
            "latency_seconds": round(latency_seconds, 6),
            "ok": ok,
        }
        if self.full_arguments:
            entry["arguments"] = call.arguments
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")


Executor = Callable[..., dict[str, Any]]


class ToolRegistry:
    """Immutable-after-startup catalog of tools plus the dispatcher.

    Dispatch is reentrant: executors are pure functions over the read-only
    data store passed per call, so concurrent dispatches are safe.
    """

    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolSpec, Executor]] = {}

    def register(self, spec: ToolSpec, executor: Executor) -> None:
        if spec.name in self._tools:
            raise DuplicateToolError(f"tool already registered: {spec.name!r}")
        self._tools[spec.name] = (spec, executor)

    def catalog(self) -> list[ToolSpec]:
        """Registration order, deterministically."""
        return [spec for spec, _ in self._tools.values()]

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def validate(self, call: ToolCall) -> ToolSpec:
        if call.name not in self._tools:
            raise UnknownToolError(f"unknown tool: {call.name!r}")
        spec, _ = self._tools[call.name]
        known = {p.name: p for p in spec.params}
        for arg in call.arguments:
            if arg not in known:
                raise SchemaError(f"unknown argument {arg!r} for {call.name}")
        for p in spec.params:
            if p.name in call.arguments:
                _validate_value(p, call.arguments[p.name])
            elif p.required:
                raise SchemaError(f"missing required argument {p.name!r} for {call.name}")
        return spec

    def dispatch(
        self,
        call: ToolCall,
        data: Any,
        audit: AuditLog | None = None,
    ) -> ToolResult:
        """Validate, execute over local data, privacy-scan, and return.

        A privacy-filter rejection signals an executor bug and raises; it
        never silently truncates the payload.
        """
        self.validate(call)
        _, executor = self._tools[call.name]
        started = time_mod.perf_counter()
        ok = False
        try:
            payload = executor(data, **call.arguments)
            assert_payload_safe(payload)
            ok = True
            return ToolResult(payload=payload)
        finally:
            if audit is not None:
                audit.record(call, time_mod.perf_counter() - started, ok)


@dataclass(frozen=True)
class ModalityExecutor:
    """A bundle of tools for one data modality (insulin, carbohydrate, ...).

    Contributed tool names are namespaced as "<modality>.<tool>" so new
    modalities never collide with the core toolkit or each other.
    """

    modality: str
    tools: tuple[tuple[ToolSpec, Executor], ...]

    def register_into(self, registry: ToolRegistry) -> list[str]:
        names = []
        for spec, fn in self.tools:
            namespaced = f"{self.modality}.{spec.name}"
            registry.register(
                ToolSpec(namespaced, spec.description, spec.params), fn
            )
            names.append(namespaced)
        return names


def register_modality(registry: ToolRegistry, executor: ModalityExecutor) -> list[str]:
    return executor.register_into(registry)


def catalog_prompt_lines(registry: ToolRegistry) -> list[str]:
    """One-line tool menu entries for reasoning-layer prompts."""
    lines = []
    for spec in registry.catalog():
        params = ", ".join(
            f"{p.name}{'' if p.required else '?'}: {p.type}" for p in spec.params
        )
        lines.append(f"- {spec.name}({params}): {spec.description}")
    return lines
