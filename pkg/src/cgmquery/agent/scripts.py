"""Benchmark-aligned deterministic scripts.

For each benchmark item this builds the scripted replies a faithful model
would produce at every layer: the standardized refinement, a single-task
route, the item's reference tool calls, and a final payload echoed from the
dispatched results. Running the real pipeline against these scripts
exercises routing, the tool loop, the sandbox, and response generation
end to end with no network.
"""
from __future__ import annotations

import json
from typing import Callable

from ..benchgen import BenchmarkItem
from .backends import ScriptRule, ScriptedBackend, echo_merged_results

# Distinctive phrases from each layer's system prompt, used as match anchors.
MARK_REFINE = "query refiner"
MARK_CLARIFY = "clarification checker"
MARK_ROUTE = "task router"
MARK_EXECUTE = "analytical executor"
MARK_RESPOND = "response generator"


def aligned_rules_for_item(item: BenchmarkItem) -> list[ScriptRule]:
    rules = [
        ScriptRule(
            (MARK_CLARIFY, item.question),
            [{"needs_clarification": False, "clarification_question": None}],
        ),
        ScriptRule(
            (MARK_REFINE, item.question),
            [{
                "is_answerable": item.is_answerable,
                "refined_question": item.refined_question,
                "rationale": "benchmark-aligned refinement",
            }],
        ),
    ]
    if item.is_answerable:
        rules.append(ScriptRule(
            (MARK_ROUTE, item.refined_question),
            [{"date_list": [], "question_list": [item.refined_question]}],
        ))
        executor_replies: list = [
            {
                "action": "tool_call",
                "name": call.name,
                "arguments": call.arguments,
            }
            for call in item.procedure
        ]
        executor_replies.append(echo_merged_results)
        rules.append(ScriptRule(
            (MARK_EXECUTE, item.refined_question), executor_replies
        ))
        answer_text = (
            f"Here is what your CGM data shows for {item.refined_question} "
            "The numbers above come straight from your local data."
        )
        rules.append(ScriptRule(
            (MARK_RESPOND, item.question),
            [{
                "final_response": answer_text,
                "cited_period": _cited_period(item),
            }],
        ))
    else:
        refusal = (
            f"I can't answer that from CGM data alone: {item.refined_question} "
            "Consider discussing it with your care team or connecting the "
            "missing data source."
        )
        rules.append(ScriptRule(
            (MARK_RESPOND, item.question),
            [{"final_response": refusal, "cited_period": None}],
        ))
    return rules


def _cited_period(item: BenchmarkItem) -> str:
    if item.ground_truth:
        return next(iter(sorted(item.ground_truth)))
    return item.reference_date.isoformat()


def aligned_backend_for_item(item: BenchmarkItem) -> ScriptedBackend:
    return ScriptedBackend(aligned_rules_for_item(item), model_name="aligned")


def simulated_user_for_item(item: BenchmarkItem) -> Callable[[str], str]:
    """Clarification responder with access to the item's template parameters,
    standing in for the real user during interactive runs."""

    def respond(question: str) -> str:
        flat = {
            k: v for k, v in item.params.items() if not isinstance(v, list)
        }
        return json.dumps(flat, sort_keys=True) if flat else item.refined_question

    return respond
