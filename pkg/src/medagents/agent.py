"""Multi-step think/act/observe agent loop."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Union

from .llm import Backend, BackendError, ChatMessage, CompletionRequest
from .toolspec import ToolInvocation, ToolRegistry, ToolResult, dispatch, render_catalog

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 12

ACTION_GRAMMAR = """\
Respond with exactly one JSON object, optionally inside a ```json fenced block:
  {"thought": "<your reasoning>", "action": {"tool": "<tool name>", "arguments": {<name>: <value>, ...}}}
to call a tool, or
  {"thought": "<your reasoning>", "final_answer": "<answer text>"}
when the task is finished. Use exactly one of "action" or "final_answer"."""


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: dict

    def to_dict(self) -> dict:
        return {"type": "tool_call", "tool": self.tool, "arguments": self.arguments}


@dataclass(frozen=True)
class FinalAnswer:
    text: str

    def to_dict(self) -> dict:
        return {"type": "final_answer", "text": self.text}


@dataclass(frozen=True)
class ParseFailure:
    message: str

    def to_dict(self) -> dict:
        return {"type": "parse_failure", "message": self.message}


Action = Union[ToolCall, FinalAnswer, ParseFailure]


def action_from_dict(d: dict) -> Action:
    kind = d.get("type")
    if kind == "tool_call":
        return ToolCall(d["tool"], dict(d.get("arguments") or {}))
    if kind == "final_answer":
        return FinalAnswer(d["text"])
    if kind == "parse_failure":
        return ParseFailure(d["message"])
    raise ValueError(f"unknown action type {kind!r}")


@dataclass(frozen=True)
class AgentConfig:
    name: str
    role_description: str
    max_steps: int = DEFAULT_MAX_STEPS
    tool_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if len(set(self.tool_names)) != len(self.tool_names):
            raise ValueError(f"agent {self.name}: duplicate tool names")


@dataclass(frozen=True)
class AgentStep:
    index: int
    thought: str
    action: Action
    observation: str
    wall_time_ms: int = 0
    model_output: str = ""
    artifacts: tuple[str, ...] = ()
    sub_transcript: str | None = None  # path of a nested specialist transcript

    def to_dict(self) -> dict:
        d = {
            "index": self.index,
            "thought": self.thought,
            "action": self.action.to_dict(),
            "observation": self.observation,
            "wall_time_ms": self.wall_time_ms,
            "model_output": self.model_output,
        }
        if self.artifacts:
            d["artifacts"] = list(self.artifacts)
        if self.sub_transcript:
            d["sub_transcript"] = self.sub_transcript
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentStep":
        return cls(
            index=int(d["index"]),
            thought=d.get("thought", ""),
            action=action_from_dict(d["action"]),
            observation=d.get("observation", ""),
            wall_time_ms=int(d.get("wall_time_ms", 0)),
            model_output=d.get("model_output", ""),
            artifacts=tuple(d.get("artifacts", ())),
            sub_transcript=d.get("sub_transcript"),
        )


@dataclass(frozen=True)
class Outcome:
    kind: str  # Completed | BudgetExhausted | FatalError | Running
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.detail})" if self.detail else self.kind


RUNNING = Outcome("Running")


class TranscriptError(ValueError):
    pass


@dataclass(frozen=True)
class AgentTranscript:
    agent_name: str
    task_text: str
    steps: tuple[AgentStep, ...] = ()
    outcome: Outcome = RUNNING

    @property
    def completed(self) -> bool:
        return self.outcome.kind == "Completed"

    @property
    def answer(self) -> str:
        return self.outcome.detail if self.completed else ""

    def tool_calls(self) -> list[ToolCall]:
        return [s.action for s in self.steps if isinstance(s.action, ToolCall)]

    def artifacts(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.steps:
            for a in s.artifacts:
                seen.setdefault(a, None)
        return list(seen)

    def to_dict(self) -> dict:
        return {
            "agent_name": self.agent_name,
            "task_text": self.task_text,
            "outcome": {"kind": self.outcome.kind, "detail": self.outcome.detail},
            "steps": [s.to_dict() for s in self.steps],
        }


def record_step(transcript: AgentTranscript, step: AgentStep) -> AgentTranscript:
    if transcript.outcome.kind != "Running":
        raise TranscriptError(f"transcript already finished with {transcript.outcome}")
    if step.index != len(transcript.steps):
        raise TranscriptError(f"step index {step.index} out of order; expected {len(transcript.steps)}")
    outcome = transcript.outcome
    if isinstance(step.action, FinalAnswer):
        outcome = Outcome("Completed", step.action.text)
    return replace(transcript, steps=transcript.steps + (step,), outcome=outcome)


def finish(transcript: AgentTranscript, outcome: Outcome) -> AgentTranscript:
    if outcome.kind == "Completed":
        raise TranscriptError("Completed is only reached through a FinalAnswer step")
    return replace(transcript, outcome=outcome)


def render_system_prompt(config: AgentConfig, catalog: str) -> str:
    parts = [
        f"You are {config.name}.",
        config.role_description.strip(),
        "## Action format",
        ACTION_GRAMMAR,
        "## Tools",
        catalog.strip() or "(no tools available)",
        "## Finishing",
        "Work step by step. After each tool call you will receive an Observation. "
        "When the task is done, or cannot be done, end with a final_answer that reports what was produced "
        "and where.",
    ]
    return "\n\n".join(parts) + "\n"


def _scan_json_objects(raw: str):
    """Yield every top-level balanced {...} substring decoding to a dict, in order."""
    decoder = json.JSONDecoder()
    i = raw.find("{")
    while i != -1:
        try:
            obj, end = decoder.raw_decode(raw, i)
        except ValueError:
            i = raw.find("{", i + 1)
            continue
        if isinstance(obj, dict):
            yield obj
        i = raw.find("{", end)


def _action_from_object(obj: dict) -> Action | None:
    """None if `obj` is not an action-shaped object at all."""
    has_action = "action" in obj
    has_final = "final_answer" in obj
    if not has_action and not has_final:
        return None
    if has_action and has_final:
        return ParseFailure('the object contains both "action" and "final_answer"; use exactly one')
    if "thought" in obj and not isinstance(obj["thought"], str):
        return ParseFailure('"thought" must be a string')
    if has_final:
        ans = obj["final_answer"]
        if not isinstance(ans, str):
            ans = json.dumps(ans, ensure_ascii=False)
        return FinalAnswer(ans)
    act = obj["action"]
    if not isinstance(act, dict) or not isinstance(act.get("tool"), str) or not act.get("tool"):
        return ParseFailure('"action" must be an object with a string "tool" and an "arguments" object')
    args = act.get("arguments", {})
    if args is None:
        args = {}
    if not isinstance(args, dict):
        return ParseFailure('"action.arguments" must be a JSON object')
    return ToolCall(act["tool"], args)


def parse_model_action(raw: str) -> Action:
    for obj in _scan_json_objects(raw or ""):
        action = _action_from_object(obj)
        if action is not None:
            return action
    return ParseFailure("no JSON action object found in the response")


def extract_thought(raw: str) -> str:
    for obj in _scan_json_objects(raw or ""):
        if "action" in obj or "final_answer" in obj:
            t = obj.get("thought", "")
            return t if isinstance(t, str) else ""
    return ""


def corrective_observation(failure: ParseFailure) -> str:
    return (f"Your last response could not be parsed: {failure.message}.\n"
            f"{ACTION_GRAMMAR}")


StepHook = Callable[[AgentStep], None]
ToolRunner = Callable[[ToolCall], ToolResult]


def run_agent(config: AgentConfig, task: str, registry: ToolRegistry, backend: Backend,
              workspace: Any = None, *, on_step: StepHook | None = None,
              tool_runner: ToolRunner | None = None) -> AgentTranscript:
    """Drive one agent until a final answer, the step budget, or a fatal backend error."""
    for name in config.tool_names:
        registry.resolve(name)
    catalog = render_catalog(registry.descriptors(config.tool_names))
    messages = [ChatMessage("system", render_system_prompt(config, catalog)),
                ChatMessage("user", task if task.strip() else "(empty task)")]
    transcript = AgentTranscript(agent_name=config.name, task_text=task)
    allowed = set(config.tool_names)

    def run_tool(call: ToolCall) -> ToolResult:
        if call.tool not in allowed:
            return ToolResult.failed(
                f"unknown tool '{call.tool}'. Available tools: {sorted(allowed)}")
        if tool_runner is not None:
            return tool_runner(call)
        return dispatch(ToolInvocation(call.tool, call.arguments), registry, workspace)

    for index in range(config.max_steps):
        started = time.monotonic()
        request = CompletionRequest(model_id=backend.model_id, messages=tuple(messages))
        try:
            response = backend.complete(request)
        except BackendError as exc:
            logger.info("agent %s: backend failed: %s", config.name, exc)
            return finish(transcript, Outcome("FatalError", f"{type(exc).__name__}: {exc}"))
        raw = response.text
        action = parse_model_action(raw)
        thought = extract_thought(raw)
        artifacts: tuple[str, ...] = ()
        sub = None
        if isinstance(action, FinalAnswer):
            observation = ""
        elif isinstance(action, ParseFailure):
            observation = corrective_observation(action)
        else:
            result = run_tool(action)
            observation = result.summary
            if result.ok:
                artifacts = tuple(result.artifacts)
            sub = result.sub_transcript
        step = AgentStep(index=index, thought=thought, action=action, observation=observation,
                         wall_time_ms=int((time.monotonic() - started) * 1000), model_output=raw,
                         artifacts=artifacts, sub_transcript=sub)
        transcript = record_step(transcript, step)
        if on_step is not None:
            on_step(step)
        if transcript.completed:
            return transcript
        messages.append(ChatMessage("assistant", raw))
        messages.append(ChatMessage("user", f"Observation:\n{observation}"))
    return finish(transcript, Outcome("BudgetExhausted", f"no final answer within {config.max_steps} steps"))
