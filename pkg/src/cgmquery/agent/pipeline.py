"""The three-layer pipeline: query refinement, task routing + tool
execution, and response generation.

Answerable path: refine -> route -> execute (per task) -> respond.
Unanswerable path: refine -> respond, with the analysis layer bypassed
entirely (no tool calls are ever made for a refused query).

Backends must reply with structured JSON; on a violation the layer re-asks
once with the parse error attached, then fails with layer attribution.
"""
from __future__ import annotations

import json
import time as time_mod
from dataclasses import dataclass, field
from datetime import date, datetime
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from ..sandbox import (
    SandboxError,
    ToolCall,
    ToolRegistry,
    AuditLog,
    UnknownToolError,
    catalog_prompt_lines,
    merge_payloads,
)
from ..store import DataStore
from .backends import BackendError
from .defaults import (
    DEFAULT_COMPLEXITY,
    DEFAULT_MAX_CLARIFICATION_ROUNDS,
    DEFAULT_MAX_STEPS,
    DEFAULT_TONE,
    VAGUE_TIME_WINDOWS,
)

PROMPT_FILES = {
    "refine": "input_processor.txt",
    "clarify": "clarifier.txt",
    "route": "router.txt",
    "execute": "executor.txt",
    "respond": "response_generator.txt",
    "judge": "judge.txt",
}


class PipelineError(Exception):
    def __init__(self, layer: str, message: str):
        super().__init__(f"[{layer}] {message}")
        self.layer = layer


@dataclass(frozen=True)
class UserQuery:
    text: str
    reference_date: date
    reference_datetime: datetime | None = None
    session_id: str = ""

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("empty query text")
        if (
            self.reference_datetime is not None
            and self.reference_datetime.date() != self.reference_date
        ):
            raise ValueError("reference_datetime disagrees with reference_date")


@dataclass(frozen=True)
class RefinedQuery:
    is_answerable: bool
    refined_question: str
    rationale: str = ""

    def __post_init__(self) -> None:
        if not self.refined_question.strip():
            raise ValueError("refined question must not be empty")


@dataclass(frozen=True)
class TaskPlan:
    date_list: tuple[str, ...]
    question_list: tuple[str, ...]


@dataclass(frozen=True)
class ClarificationTurn:
    agent_question: str
    user_answer: str


@dataclass
class ExecutionResult:
    payload: dict[str, Any]
    tool_trace: list[ToolCall] = field(default_factory=list)


@dataclass(frozen=True)
class FinalResponse:
    text: str
    cited_period: str | None
    is_refusal: bool


@dataclass
class QueryTrace:
    """Everything observable about one answer() run.

    ``prompts`` holds the exact text sent to the backend per call so the
    privacy scan can prove no raw readings ever left the sandbox.
    """

    prompts: list[str] = field(default_factory=list)
    tool_calls: list[ToolCall] = field(default_factory=list)
    layer_latencies: dict[str, float] = field(default_factory=dict)
    backend_calls: int = 0
    predicted_answerable: bool | None = None
    refined_question: str | None = None
    payload: dict[str, Any] | None = None
    clarification: ClarificationTurn | None = None
    latency_seconds: float = 0.0
    error: str | None = None

    def to_record(self) -> dict[str, Any]:
        return {
            "predicted_answerable": self.predicted_answerable,
            "refined_question": self.refined_question,
            "payload": self.payload,
            "tool_calls": [
                {"name": c.name, "arguments": c.arguments} for c in self.tool_calls
            ],
            "layer_latencies": {
                k: round(v, 6) for k, v in self.layer_latencies.items()
            },
            "backend_calls": self.backend_calls,
            "latency_seconds": round(self.latency_seconds, 6),
            "prompts": list(self.prompts),
            "clarification": (
                {
                    "question": self.clarification.agent_question,
                    "answer": self.clarification.user_answer,
                }
                if self.clarification
                else None
            ),
            "error": self.error,
        }


_PROMPT_CACHE: dict[str, str] = {}


def load_prompt(name: str, prompts_dir: str | Path | None = None) -> str:
    filename = PROMPT_FILES[name]
    if prompts_dir is not None:
        return (Path(prompts_dir) / filename).read_text(encoding="utf-8")
    if name not in _PROMPT_CACHE:
        _PROMPT_CACHE[name] = (
            resources.files("cgmquery.agent.prompts")
            .joinpath(filename)
            .read_text("utf-8")
        )
    return _PROMPT_CACHE[name]


@dataclass
class PipelineConfig:
    backend: Any
    registry: ToolRegistry
    data: DataStore
    prompts_dir: str | Path | None = None
    interactive: bool = False
    use_input_processor: bool = True
    max_steps: int = DEFAULT_MAX_STEPS
    max_clarification_rounds: int = DEFAULT_MAX_CLARIFICATION_ROUNDS
    tone: str = DEFAULT_TONE
    complexity_level: str = DEFAULT_COMPLEXITY
    vague_time_windows: dict[str, tuple[str, str]] = field(
        default_factory=lambda: dict(VAGUE_TIME_WINDOWS)
    )
    audit: AuditLog | None = None


class Pipeline:
    """One configured pipeline; shareable read-only across sessions."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._prompts = {
            name: load_prompt(name, config.prompts_dir) for name in PROMPT_FILES
        }

    # -- backend plumbing ----------------------------------------------

    def _call(
        self,
        layer: str,
        prompt_key: str,
        messages: list[dict],
        trace: QueryTrace,
        extra_system: str = "",
    ) -> str:
        system_prompt = self._prompts[prompt_key]
        if extra_system:
            system_prompt = system_prompt + "\n\n" + extra_system
        started = time_mod.perf_counter()
        try:
            reply = self.config.backend.complete(system_prompt, messages)
        except BackendError as exc:
            raise PipelineError(layer, str(exc)) from exc
        finally:
            elapsed = time_mod.perf_counter() - started
            trace.layer_latencies[layer] = trace.layer_latencies.get(layer, 0.0) + elapsed
            trace.backend_calls += 1
            trace.prompts.append(
                system_prompt
                + "\n"
                + "\n".join(str(m.get("content", "")) for m in messages)
            )
        return reply

    def _structured(
        self,
        layer: str,
        prompt_key: str,
        messages: list[dict],
        trace: QueryTrace,
        validate: Callable[[dict], Any],
        extra_system: str = "",
    ) -> Any:
        reply = self._call(layer, prompt_key, messages, trace, extra_system)
        for attempt in range(2):
            try:
                return validate(json.loads(reply))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if attempt == 1:
                    raise PipelineError(
                        layer, f"unparseable backend output: {exc}"
                    ) from exc
                retry_messages = messages + [
                    {"role": "assistant", "content": reply},
                    {
                        "role": "user",
                        "content": json.dumps(
                            {"error": f"invalid reply: {exc}; respond with valid JSON"}
                        ),
                    },
                ]
                reply = self._call(layer, prompt_key, retry_messages, trace, extra_system)

    # -- layers ----------------------------------------------------------

    def refine_query(
        self,
        query: UserQuery,
        trace: QueryTrace,
        clarifications: list[ClarificationTurn] | None = None,
    ) -> RefinedQuery:
        """Resolve temporal references and decide answerability."""
        payload = {
            "user_question": query.text,
            "reference_date": query.reference_date.isoformat(),
            "reference_datetime": (
                query.reference_datetime.isoformat(sep=" ")
                if query.reference_datetime
                else None
            ),
            "clarifications": [
                {"question": turn.agent_question, "answer": turn.user_answer}
                for turn in (clarifications or [])
            ],
        }
        windows_note = "Default windows for vague terms: " + json.dumps(
            self.config.vague_time_windows, sort_keys=True
        )

        def validate(obj: dict) -> RefinedQuery:
            return RefinedQuery(
                is_answerable=bool(obj["is_answerable"]),
                refined_question=str(obj["refined_question"]),
                rationale=str(obj.get("rationale", "")),
            )

        return self._structured(
            "refine",
            "refine",
            [{"role": "user", "content": json.dumps(payload, sort_keys=True)}],
            trace,
            validate,
            extra_system=windows_note,
        )

    def detect_ambiguity(self, query: UserQuery, trace: QueryTrace) -> str | None:
        payload = {
            "user_question": query.text,
            "reference_date": query.reference_date.isoformat(),
        }

        def validate(obj: dict) -> str | None:
            if not obj.get("needs_clarification"):
                return None
            question = obj.get("clarification_question")
            return str(question) if question else None

        return self._structured(
            "clarify",
            "clarify",
            [{"role": "user", "content": json.dumps(payload, sort_keys=True)}],
            trace,
            validate,
        )

    def route_tasks(self, refined: RefinedQuery, trace: QueryTrace) -> TaskPlan:
        if not refined.is_answerable:
            raise PipelineError("route", "cannot route an unanswerable query")

        def validate(obj: dict) -> TaskPlan:
            questions = tuple(str(q) for q in obj["question_list"])
            if not questions:
                raise ValueError("empty question_list")
            return TaskPlan(
                date_list=tuple(str(d) for d in obj.get("date_list", [])),
                question_list=questions,
            )

        return self._structured(
            "route",
            "route",
            [{"role": "user", "content": json.dumps(
                {"user_request": refined.refined_question}, sort_keys=True)}],
            trace,
            validate,
        )

    def execute_task(self, sub_question: str, trace: QueryTrace) -> ExecutionResult:
        """Iterative tool-call loop until the backend emits a final payload."""
        tools_menu = "\n".join(catalog_prompt_lines(self.config.registry))
        messages: list[dict] = [
            {
                "role": "user",
                "content": json.dumps(
                    {"question": sub_question, "available_tools": tools_menu},
                    sort_keys=True,
                ),
            }
        ]
        calls: list[ToolCall] = []
        unknown_streak = 0
        for _ in range(self.config.max_steps):
            def validate(obj: dict) -> dict:
                action = obj.get("action")
                if action == "tool_call":
                    ToolCall.from_dict(obj)
                    return obj
                if action == "final":
                    if not isinstance(obj.get("result"), dict):
                        raise ValueError("final result must be a mapping")
                    return obj
                raise ValueError(f"unknown action: {action!r}")

            reply = self._structured("execute", "execute", messages, trace, validate)
            if reply["action"] == "final":
                return ExecutionResult(payload=reply["result"], tool_trace=calls)
            call = ToolCall.from_dict(reply)
            messages.append(
                {"role": "assistant", "content": json.dumps(reply, sort_keys=True)}
            )
            try:
                result = self.config.registry.dispatch(
                    call, self.config.data, audit=self.config.audit
                )
            except UnknownToolError as exc:
                unknown_streak += 1
                if unknown_streak >= 3:
                    raise PipelineError(
                        "execute", f"unknown tool repeated {unknown_streak} times: {exc}"
                    ) from exc
                messages.append(
                    {"role": "user", "content": json.dumps({"tool_error": str(exc)})}
                )
                continue
            except (SandboxError, KeyError) as exc:
                messages.append(
                    {"role": "user", "content": json.dumps({"tool_error": str(exc)})}
                )
                continue
            unknown_streak = 0
            calls.append(call)
            trace.tool_calls.append(call)
            messages.append(
                {
                    "role": "user",
                    "content": json.dumps(
                        {"tool_result": result.payload}, sort_keys=True
                    ),
                }
            )
        raise PipelineError(
            "execute", f"step cap {self.config.max_steps} exceeded for: {sub_question!r}"
        )

    def generate_response(
        self,
        query: UserQuery,
        refined: RefinedQuery,
        result: ExecutionResult | None,
        trace: QueryTrace,
    ) -> FinalResponse:
        if refined.is_answerable and result is None:
            raise PipelineError("respond", "answerable query without execution result")
        if not refined.is_answerable and result is not None:
            raise PipelineError("respond", "refusal must not carry execution results")
        payload = {
            "raw_question": query.text,
            "is_answerable": refined.is_answerable,
            "rationale": refined.rationale or refined.refined_question,
            "execution_result": result.payload if result else None,
            "tone": self.config.tone,
            "complexity_level": self.config.complexity_level,
            "reference_date": query.reference_date.isoformat(),
        }

        def validate(obj: dict) -> FinalResponse:
            text = str(obj["final_response"])
            if not text.strip():
                raise ValueError("empty final_response")
            period = obj.get("cited_period")
            return FinalResponse(
                text=text,
                cited_period=str(period) if period else None,
                is_refusal=not refined.is_answerable,
            )

        return self._structured(
            "respond",
            "respond",
            [{"role": "user", "content": json.dumps(payload, sort_keys=True)}],
            trace,
            validate,
        )

    # -- composition ------------------------------------------------------

    def answer(
        self,
        query: UserQuery,
        clarifier: Callable[[str], str] | None = None,
        clarifications: list[ClarificationTurn] | None = None,
    ) -> tuple[FinalResponse, QueryTrace]:
        """Full pipeline run; returns the response and its trace.

        ``clarifier`` is the interactive hook (terminal prompt or simulated
        user): called at most ``max_clarification_rounds`` times when the
        clarification checker finds the query ambiguous. Pre-collected
        ``clarifications`` (the service resume path) skip detection.
        """
        trace = QueryTrace()
        started = time_mod.perf_counter()
        try:
            turns = list(clarifications or [])
            if (
                self.config.interactive
                and clarifier is not None
                and not turns
                and self.config.use_input_processor
            ):
                for _ in range(self.config.max_clarification_rounds):
                    question = self.detect_ambiguity(query, trace)
                    if question is None:
                        break
                    answer_text = clarifier(question)
                    turn = ClarificationTurn(question, answer_text)
                    turns.append(turn)
                    trace.clarification = turn

            if self.config.use_input_processor:
                refined = self.refine_query(query, trace, turns)
            else:
                # Ablation mode: raw question goes straight to the analysis
                # layers with only a timestamp prefix for grounding.
                refined = RefinedQuery(
                    is_answerable=True,
                    refined_question=(
                        f"Today is {query.reference_date.isoformat()}. "
                        f"User Question: {query.text}"
                    ),
                    rationale="input processor disabled",
                )
            trace.predicted_answerable = refined.is_answerable
            trace.refined_question = refined.refined_question

            if not refined.is_answerable:
                response = self.generate_response(query, refined, None, trace)
                trace.payload = {}
                return response, trace

            plan = self.route_tasks(refined, trace)
            payloads = []
            all_calls: list[ToolCall] = []
            for sub_question in plan.question_list:
                result = self.execute_task(sub_question, trace)
                payloads.append(result.payload)
                all_calls.extend(result.tool_trace)
            merged = ExecutionResult(
                payload=merge_payloads(payloads), tool_trace=all_calls
            )
            trace.payload = merged.payload
            response = self.generate_response(query, refined, merged, trace)
            return response, trace
        except PipelineError as exc:
            trace.error = str(exc)
            raise
        finally:
            trace.latency_seconds = time_mod.perf_counter() - started
