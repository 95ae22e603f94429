"""The master agent and its eight specialists; specialists are exposed to the master as tools."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..agent import DEFAULT_MAX_STEPS, AgentConfig, AgentTranscript, run_agent
from ..llm import Backend, BackendProfile, open_backend
from ..toolspec import ParamSpec, ToolDescriptor, ToolError, ToolRegistry, ToolResult
from . import tools as T

MASTER = "master_agent"
SUMMARY_ARTIFACTS = 60
OBSERVATION_TAIL = 1500


@dataclass(frozen=True)
class SpecialistSpec:
    name: str
    capability: str
    role: str
    tools: tuple[str, ...]


SPECIALISTS: tuple[SpecialistSpec, ...] = (
    SpecialistSpec(
        "eda_agent",
        "Exploratory data analysis of tabular CSV files: summary statistics, missing values, outliers, "
        "correlations, plots and a report.",
        "You perform exploratory data analysis on CSV files with the eda tool. Honour requests about plots "
        "and output folders exactly.",
        (T.EDA,)),
    SpecialistSpec(
        "feature_importance_agent",
        "Feature importance analysis and feature selection for tabular data; exports CSV files with the "
        "top-k features plus the target.",
        "You rank features by importance for a target column and export top-k feature files with the "
        "feature_importance tool.",
        (T.FEATURE_IMPORTANCE,)),
    SpecialistSpec(
        "radiomics_agent",
        "Radiomic feature extraction from NIfTI images and segmentation masks (shape, first order and "
        "texture features, optional image filters).",
        "You extract radiomic features from medical images and their masks with the radiomics_extract tool. "
        "Only request filters and feature classes the tool supports; say so when a request cannot be met.",
        (T.RADIOMICS,)),
    SpecialistSpec(
        "nnunet_agent",
        "Training nnU-Net segmentation models and running inference with trained nnU-Net models.",
        "You train nnU-Net models and segment scans with trained ones using the nnunet tools.",
        ("nnunet_train", "nnunet_infer")),
    SpecialistSpec(
        "totalsegmentator_agent",
        "Anatomical segmentation of CT or MR scans with TotalSegmentator, optionally restricted to a "
        "subset of structures.",
        "You segment CT and MR scans with the totalseg tool.",
        ("totalseg",)),
    SpecialistSpec(
        "classifier_agent",
        "Training tabular classification models (leaderboard, tuning, blending) and predicting with saved "
        "classification models.",
        "You train tabular classifiers and run inference with saved classification bundles.",
        (T.CLASSIFIER_TRAIN, T.CLASSIFIER_INFER)),
    SpecialistSpec(
        "regressor_agent",
        "Training tabular regression models (leaderboard, tuning, blending) and predicting with saved "
        "regression models.",
        "You train tabular regressors and run inference with saved regression bundles.",
        (T.REGRESSOR_TRAIN, T.REGRESSOR_INFER)),
    SpecialistSpec(
        "image_classifier_agent",
        "Training CNN image classifiers (ResNet, VGG16, InceptionV3) and classifying image folders with "
        "trained models.",
        "You train image classification networks and run inference with trained checkpoints.",
        ("image_cls_train", "image_cls_infer")),
)
SPECIALIST_NAMES = tuple(s.name for s in SPECIALISTS)

MASTER_ROLE = (
    "You coordinate a team of specialist agents. Each tool available to you is a specialist; call it with "
    "a self-contained `task` text. Split multi-step requests into one delegation per specialist, in the "
    "order the steps depend on each other. Copy file and directory paths character for character, "
    "including paths reported by earlier specialists. When every step is done, give a final answer that "
    "lists the outputs and where they were saved."
)


@dataclass(frozen=True)
class SpecialistHandle:
    name: str
    capability_description: str
    config: AgentConfig

    def descriptor(self) -> ToolDescriptor:
        return ToolDescriptor(
            self.name, self.capability_description,
            (ParamSpec("task", "string", True, description="complete instructions, including all paths"),),
            "the specialist's outcome, final answer and produced file paths")


@dataclass
class Team:
    master: AgentConfig
    specialists: dict[str, SpecialistHandle]
    tools: ToolRegistry  # concrete tools only
    backend: Backend
    registry: ToolRegistry = field(default_factory=ToolRegistry)  # concrete tools plus handles

    def handle(self, name: str) -> SpecialistHandle:
        try:
            return self.specialists[name]
        except KeyError:
            raise KeyError(f"unknown specialist {name!r}; team has {sorted(self.specialists)}") from None

    def with_backend(self, backend: Backend | BackendProfile) -> "Team":
        return build_default_team(self.tools, backend, max_steps=self.specialists[SPECIALIST_NAMES[0]].config.max_steps,
                                  master_max_steps=self.master.max_steps)


def _backend(b: Backend | BackendProfile) -> Backend:
    return open_backend(b) if isinstance(b, BackendProfile) else b


def build_default_team(registry: ToolRegistry, backend: Backend | BackendProfile, workspace: Any = None, *,
                       max_steps: int = DEFAULT_MAX_STEPS, master_max_steps: int = DEFAULT_MAX_STEPS) -> Team:
    """Master plus eight specialists over `registry`, which is left untouched."""
    missing = [f"{t} (needed by {s.name})" for s in SPECIALISTS for t in s.tools if t not in registry]
    if missing:
        raise ToolError("missing tool registration: " + ", ".join(missing))
    handles = {
        s.name: SpecialistHandle(s.name, s.capability,
                                 AgentConfig(s.name, s.role, max_steps, s.tools))
        for s in SPECIALISTS
    }
    master = AgentConfig(MASTER, MASTER_ROLE, master_max_steps, SPECIALIST_NAMES)
    team = Team(master, handles, registry, _backend(backend))
    combined = ToolRegistry()
    for d in registry.descriptors():
        combined.register(d, registry.executor(d.name))
    for h in handles.values():
        combined.register(h.descriptor(), _delegation_executor(team, h.name))
    team.registry = combined.freeze()
    return team


def _delegation_executor(team: Team, name: str):
    def execute(args: dict, workspace: Any) -> ToolResult:
        return delegate(team, name, args["task"], workspace)
    return execute


def delegation_summary(transcript: AgentTranscript) -> str:
    lines = [f"{transcript.agent_name} outcome: {transcript.outcome.kind}"]
    if transcript.completed:
        lines.append(f"answer: {transcript.answer}")
    else:
        if transcript.outcome.detail:
            lines.append(f"detail: {transcript.outcome.detail}")
        if transcript.steps:
            obs = transcript.steps[-1].observation
            lines.append("last observation: " + (obs if len(obs) <= OBSERVATION_TAIL
                                                 else "..." + obs[-OBSERVATION_TAIL:]))
    calls = [c.tool for c in transcript.tool_calls()]
    lines.append("tool calls: " + (", ".join(calls) if calls else "none"))
    arts = transcript.artifacts()
    lines.append(f"artifacts ({len(arts)}):")
    lines += T._listing(arts, SUMMARY_ARTIFACTS)
    return "\n".join(lines)


def delegate(team: Team, name: str, subtask: str, workspace: Any = None) -> ToolResult:
    """Run one specialist to the end; its failures come back in the summary, never as exceptions."""
    handle = team.handle(name)
    transcript = run_agent(handle.config, subtask, team.tools, team.backend, workspace)
    sub = workspace.save_specialist(transcript) if hasattr(workspace, "save_specialist") else None
    status = "ok" if transcript.completed else "failed"
    return ToolResult(status, delegation_summary(transcript), transcript.artifacts(),
                      {"steps": float(len(transcript.steps))}, sub_transcript=sub)


def run_master(prompt: str, team: Team, backend: Backend | BackendProfile | None = None,
               workspace: Any = None) -> AgentTranscript:
    if backend is not None and backend is not team.backend:
        team = team.with_backend(backend)
    hook = workspace.append_step if hasattr(workspace, "append_step") else None
    transcript = run_agent(team.master, prompt, team.registry, team.backend, workspace, on_step=hook)
    if hasattr(workspace, "finish"):
        workspace.finish(transcript)
    return transcript


def invoked_agents(transcript: AgentTranscript) -> list[str]:
    return [c.tool for c in transcript.tool_calls() if c.tool in SPECIALIST_NAMES]
