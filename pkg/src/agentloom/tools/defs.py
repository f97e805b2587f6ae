"""Tool definitions, call/result records, and argument-schema checking.

The schema checker is deliberately independent of any third-party JSON
Schema library: it covers the object-schema subset tools declare (types,
required, enum, numeric bounds, nested objects/arrays) and is verified
against an external implementation in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from ..gateway import ToolDeclaration

TOOL_SOURCES = ("builtin_env", "builtin_pure", "synthesized", "remote_protocol", "agent")


class ToolTimeout(Exception):
    """Raised inside a binding when its execution hit the time budget."""


@dataclass(frozen=True)
class ToolDef:
    name: str
    description: str
    parameters: dict[str, Any]  # JSON Schema, object type
    source: str
    binding: Callable[[dict[str, Any], "InvokeContext"], str] | None = None
    toolkit: str = ""

    def declaration(self) -> ToolDeclaration:
        return ToolDeclaration(self.name, self.description, self.parameters)


@dataclass(frozen=True)
class ToolCall:
    id: str
    tool_name: str
    arguments: Any  # raw text from the model, or a parsed mapping


@dataclass(frozen=True)
class ToolResult:
    id: str
    status: str  # ok | error | timeout | invalid
    content: str
    wall_time_ms: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "status": self.status,
            "content": self.content,
            "wall_time_ms": self.wall_time_ms,
        }


@dataclass
class InvokeContext:
    """Per-call execution context threaded through tool bindings."""

    env: Any = None  # EnvHandle for env-bound tools
    transport: Any = None  # gateway transport, inherited by sub-agents
    budget_s: float = 30.0
    episode_deadline: Any = None  # budget.Deadline of the enclosing episode
    depth: int = 0  # agent-as-tool nesting depth of the caller
    clock: Callable[[], float] = None  # type: ignore[assignment]
    extra: dict[str, Any] = field(default_factory=dict)


def check_arguments(schema: Mapping[str, Any], args: Any, path: str = "$") -> str | None:
    """Return None if ``args`` satisfies the object schema, else the violation.

    Supported keywords: type, properties, required, enum, additionalProperties,
    items, minimum, maximum, minLength, maxLength.
    """
    return _check(schema, args, path)


def _type_ok(expected: str, value: Any) -> bool:
    if expected == "object":
        return isinstance(value, Mapping)
    if expected == "array":
        return isinstance(value, list)
    if expected == "string":
        return isinstance(value, str)
    if expected == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "null":
        return value is None
    return True  # unknown type names do not constrain


def _check(schema: Mapping[str, Any], value: Any, path: str) -> str | None:
    expected = schema.get("type")
    if isinstance(expected, str):
        if not _type_ok(expected, value):
            return f"{path}: expected {expected}, got {type(value).__name__}"
    elif isinstance(expected, list):
        if not any(_type_ok(t, value) for t in expected):
            return f"{path}: value matches none of types {expected}"

    if "enum" in schema and value not in schema["enum"]:
        return f"{path}: value not in enum {schema['enum']}"

    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if "minimum" in schema and value < schema["minimum"]:
            return f"{path}: below minimum {schema['minimum']}"
        if "maximum" in schema and value > schema["maximum"]:
            return f"{path}: above maximum {schema['maximum']}"

    if isinstance(value, str):
        if "minLength" in schema and len(value) < schema["minLength"]:
            return f"{path}: shorter than minLength {schema['minLength']}"
        if "maxLength" in schema and len(value) > schema["maxLength"]:
            return f"{path}: longer than maxLength {schema['maxLength']}"

    if isinstance(value, Mapping):
        properties = schema.get("properties", {})
        for name in schema.get("required", []):
            if name not in value:
                return f"{path}.{name}: missing required property"
        for name, sub in value.items():
            if name in properties:
                error = _check(properties[name], sub, f"{path}.{name}")
                if error:
                    return error
            elif schema.get("additionalProperties") is False:
                return f"{path}.{name}: unexpected property"

    if isinstance(value, list) and isinstance(schema.get("items"), Mapping):
        for i, item in enumerate(value):
            error = _check(schema["items"], item, f"{path}[{i}]")
            if error:
                return error

    return None


def object_schema(
    properties: dict[str, dict[str, Any]],
    required: list[str] | None = None,
    additional: bool = False,
) -> dict[str, Any]:
    """Convenience constructor for the object schemas tools declare."""
    return {
        "type": "object",
        "properties": properties,
        "required": required if required is not None else list(properties),
        "additionalProperties": additional,
    }
