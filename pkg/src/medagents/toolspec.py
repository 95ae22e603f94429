"""Tool metadata, argument validation, catalog rendering and dispatch."""

from __future__ import annotations

import json
import logging
import os
import re
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

logger = logging.getLogger(__name__)

SCALAR_KINDS = ("string", "integer", "float", "boolean", "path")
NO_TOOLS_SENTINEL = "(no tools available)"

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class ToolError(Exception):
    """Base class for tool registry and invocation errors."""


class DuplicateToolError(ToolError):
    pass


class UnknownToolError(ToolError, KeyError):
    def __str__(self) -> str:
        return f"unknown tool: {self.args[0]!r}"


class ValidationError(ToolError):
    """Aggregated argument validation failure."""

    def __init__(self, tool: str, problems: list[str]):
        self.tool = tool
        self.problems = problems
        super().__init__(f"invalid arguments for tool '{tool}': " + "; ".join(problems))


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    required: bool = False
    default: Any = None
    description: str = ""
    values: tuple[str, ...] = ()  # enum members
    item_kind: str | None = None  # list element kind

    def __post_init__(self) -> None:
        if self.kind not in SCALAR_KINDS + ("enum", "list"):
            raise ValueError(f"param {self.name}: unknown kind {self.kind!r}")
        if self.kind == "enum" and not self.values:
            raise ValueError(f"param {self.name}: enum needs at least one value")
        if self.kind == "list" and self.item_kind not in SCALAR_KINDS + ("enum",):
            raise ValueError(f"param {self.name}: list needs a scalar item kind")
        if self.required and self.default is not None:
            raise ValueError(f"param {self.name}: required params cannot carry a default")
        if self.default is not None:
            problems: list[str] = []
            _coerce(self, self.default, problems)
            if problems:
                raise ValueError(f"param {self.name}: default does not satisfy kind: {problems[0]}")

    def kind_label(self) -> str:
        if self.kind == "enum":
            return "enum(" + "|".join(self.values) + ")"
        if self.kind == "list":
            inner = "enum(" + "|".join(self.values) + ")" if self.item_kind == "enum" else self.item_kind
            return f"list({inner})"
        return self.kind

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind, "required": self.required,
                             "description": self.description}
        if self.default is not None:
            d["default"] = self.default
        if self.values:
            d["values"] = list(self.values)
        if self.item_kind:
            d["item_kind"] = self.item_kind
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ParamSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            required=bool(d.get("required", False)),
            default=d.get("default"),
            description=d.get("description", ""),
            values=tuple(d.get("values", ())),
            item_kind=d.get("item_kind"),
        )


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    params: tuple[ParamSpec, ...] = ()
    output_description: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("tool name must be non-empty")
        names = [p.name for p in self.params]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ValueError(f"tool {self.name}: duplicate params {dupes}")

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class ToolInvocation:
    tool: str
    args: dict = field(default_factory=dict)


@dataclass
class ToolResult:
    status: str  # "ok" | "failed"
    summary: str
    artifacts: list[str] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    sub_transcript: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def failed(cls, summary: str, **kw: Any) -> "ToolResult":
        return cls(status="failed", summary=summary, **kw)


Executor = Callable[[dict, Any], ToolResult]


class ToolRegistry:
    """Append-only name -> (descriptor, executor) map."""

    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolDescriptor, Executor]] = {}
        self._frozen = False

    def register(self, descriptor: ToolDescriptor, executor: Executor) -> "ToolRegistry":
        if self._frozen:
            raise ToolError("registry is frozen")
        if descriptor.name in self._tools:
            raise DuplicateToolError(f"tool already registered: {descriptor.name}")
        self._tools[descriptor.name] = (descriptor, executor)
        return self

    def freeze(self) -> "ToolRegistry":
        self._frozen = True
        return self

    def resolve(self, name: str) -> ToolDescriptor:
        try:
            return self._tools[name][0]
        except KeyError:
            raise UnknownToolError(name) from None

    def executor(self, name: str) -> Executor:
        try:
            return self._tools[name][1]
        except KeyError:
            raise UnknownToolError(name) from None

    def __contains__(self, name: object) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return sorted(self._tools)

    def descriptors(self, names: Iterable[str] | None = None) -> list[ToolDescriptor]:
        selected = self.names() if names is None else list(names)
        return [self.resolve(n) for n in selected]


def register_tool(registry: ToolRegistry, descriptor: ToolDescriptor, executor: Executor) -> ToolRegistry:
    return registry.register(descriptor, executor)


def _coerce_scalar(kind: str, value: Any, values: tuple[str, ...], where: str, problems: list[str]) -> Any:
    if kind == "string":
        if isinstance(value, str):
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return str(value)
    elif kind == "path":
        if isinstance(value, str) and value.strip():
            return os.path.normpath(os.path.expanduser(value.strip()))
    elif kind == "integer":
        if isinstance(value, bool):
            pass
        elif isinstance(value, int):
            return value
        elif isinstance(value, float) and value.is_integer():
            return int(value)
        elif isinstance(value, str) and _INT_RE.match(value.strip()):
            return int(value.strip())
    elif kind == "float":
        if isinstance(value, bool):
            pass
        elif isinstance(value, (int, float)):
            return float(value)
        elif isinstance(value, str) and _FLOAT_RE.match(value.strip()):
            return float(value.strip())
    elif kind == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.strip().lower() in ("true", "false"):
            return value.strip().lower() == "true"
    elif kind == "enum":
        if isinstance(value, str) and value in values:
            return value
        problems.append(f"{where}: {value!r} is not one of {list(values)}")
        return None
    problems.append(f"{where}: expected {kind}, got {value!r}")
    return None


def _coerce(spec: ParamSpec, value: Any, problems: list[str]) -> Any:
    if spec.kind != "list":
        return _coerce_scalar(spec.kind, value, spec.values, f"'{spec.name}'", problems)
    if isinstance(value, str):
        # a bare string for a list param is read as a one-element list or a comma list
        value = [v.strip() for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        problems.append(f"'{spec.name}': expected a list, got {value!r}")
        return None
    out = []
    for i, item in enumerate(value):
        out.append(_coerce_scalar(spec.item_kind or "string", item, spec.values, f"'{spec.name}'[{i}]", problems))
    return out


def validate_invocation(descriptor: ToolDescriptor, args: Mapping[str, Any] | None) -> dict:
    """Return normalized arguments or raise one ValidationError listing every violation."""
    if args is None:
        args = {}
    problems: list[str] = []
    if not isinstance(args, Mapping):
        raise ValidationError(descriptor.name, ["arguments must be an object"])
    allowed = [p.name for p in descriptor.params]
    unknown = sorted(k for k in args if k not in allowed)
    if unknown:
        problems.append(f"unknown parameter(s) {unknown}; allowed parameters: {sorted(allowed)}")
    out: dict[str, Any] = {}
    for p in descriptor.params:
        if p.name not in args or args[p.name] is None:
            if p.required:
                problems.append(f"missing required parameter '{p.name}'")
            elif p.default is not None:
                out[p.name] = _coerce(p, p.default, problems)
            continue
        out[p.name] = _coerce(p, args[p.name], problems)
    if problems:
        raise ValidationError(descriptor.name, problems)
    return out


def render_catalog(descriptors: Iterable[ToolDescriptor]) -> str:
    descs = sorted(descriptors, key=lambda d: d.name)
    if not descs:
        return NO_TOOLS_SENTINEL
    blocks = []
    for d in descs:
        lines = [f"### {d.name}", d.description.strip()]
        if d.params:
            lines.append("Parameters:")
            for p in d.params:
                req = "required" if p.required else "optional"
                default = f", default={json.dumps(p.default)}" if p.default is not None else ""
                desc = f" - {p.description}" if p.description else ""
                lines.append(f"  - {p.name} ({p.kind_label()}, {req}{default}){desc}")
        else:
            lines.append("Parameters: none")
        if d.output_description:
            lines.append(f"Output: {d.output_description.strip()}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def dispatch(invocation: ToolInvocation, registry: ToolRegistry, workspace: Any = None) -> ToolResult:
    """Run a tool; every failure comes back as a failed ToolResult."""
    try:
        descriptor = registry.resolve(invocation.tool)
    except UnknownToolError:
        return ToolResult.failed(
            f"unknown tool '{invocation.tool}'. Available tools: {registry.names()}")
    try:
        args = validate_invocation(descriptor, invocation.args)
    except ValidationError as exc:
        return ToolResult.failed(str(exc))
    try:
        result = registry.executor(descriptor.name)(args, workspace)
    except Exception as exc:  # noqa: BLE001 - executors are untrusted
        logger.debug("tool %s raised\n%s", descriptor.name, traceback.format_exc())
        return ToolResult.failed(f"tool '{descriptor.name}' failed: {type(exc).__name__}: {exc}")
    if not isinstance(result, ToolResult):
        return ToolResult.failed(f"tool '{descriptor.name}' returned {type(result).__name__}, not a ToolResult")
    if result.ok:
        missing = [a for a in result.artifacts if not os.path.exists(a)]
        if missing:
            return ToolResult.failed(
                f"tool '{descriptor.name}' reported artifacts that do not exist: {missing}",
                artifacts=[a for a in result.artifacts if a not in missing], metrics=result.metrics)
    if workspace is not None and hasattr(workspace, "record_artifacts"):
        workspace.record_artifacts(result.artifacts)
    return result
