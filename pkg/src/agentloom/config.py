"""Agent configuration schema: parsing, validation, canonical emission.

A config is declared in YAML with the top-level blocks ``agent``, ``env``,
``context_manager``, ``toolkits``, ``sampling`` and ``timeouts`` (canonical
order).  Parsing fills documented defaults; emission omits them, so
``emit -> parse -> emit`` is a byte-level fixpoint.

All values here are immutable; every function is pure and thread-safe.
"""
from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass, field, replace
from difflib import get_close_matches
from typing import Any, Iterable, Mapping

import yaml

NAME_RE = re.compile(r"^[A-Za-z0-9_-]+$")

# Cloud backends named in the wild resolve to the local sandbox jail.
BACKEND_ALIASES = {"e2b": "sandbox", "browser": "sandbox"}

DEFAULT_ENV_NAME = "mock"
DEFAULT_CTX_NAME = "base"
DEFAULT_TEMPERATURE = 0.7
DEFAULT_MAX_TURNS = 32
DEFAULT_MAX_TOKENS = 4096
DEFAULT_TOOL_S = 30.0
DEFAULT_STEP_S = 120.0
DEFAULT_EPISODE_S = 600.0

_TOP_LEVEL_KEYS = ("agent", "env", "context_manager", "toolkits", "sampling", "timeouts")


class ConfigError(Exception):
    """Base for config failures; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.reason = message


class ConfigSyntaxError(ConfigError):
    """Input is not well-formed YAML."""


class SchemaError(ConfigError):
    """A field is missing, mistyped, or violates an invariant."""


class UnknownComponentError(ConfigError):
    """env / context_manager name does not resolve against the registry."""


class InvalidConfigError(ConfigError):
    """Raised by ``emit_config`` when the config fails validation."""


@dataclass(frozen=True)
class EnvSpec:
    name: str = DEFAULT_ENV_NAME
    config: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CtxSpec:
    name: str = DEFAULT_CTX_NAME
    config: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ToolkitActivation:
    """Empty ``activated_tools`` means: all tools of the toolkit."""

    activated_tools: tuple[str, ...] = ()
    config: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    max_turns: int = DEFAULT_MAX_TURNS
    max_tokens: int = DEFAULT_MAX_TOKENS


@dataclass(frozen=True)
class TimeoutSpec:
    tool_s: float = DEFAULT_TOOL_S
    step_s: float = DEFAULT_STEP_S
    episode_s: float = DEFAULT_EPISODE_S


@dataclass(frozen=True)
class AgentConfig:
    name: str
    instructions: str
    env: EnvSpec = field(default_factory=EnvSpec)
    context_manager: CtxSpec = field(default_factory=CtxSpec)
    toolkits: Mapping[str, ToolkitActivation] = field(default_factory=dict)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    timeouts: TimeoutSpec = field(default_factory=TimeoutSpec)

    def with_temperature(self, temperature: float) -> "AgentConfig":
        return replace(self, sampling=replace(self.sampling, temperature=temperature))


@dataclass(frozen=True)
class RegistrySnapshot:
    """Names resolvable at validation time."""

    env_backends: frozenset[str]
    context_managers: frozenset[str]
    toolkits: Mapping[str, frozenset[str]]  # toolkit name -> tool names


@dataclass(frozen=True)
class Finding:
    kind: str
    path: str
    message: str
    suggestion: str | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "path": self.path, "message": self.message}
        if self.suggestion is not None:
            d["suggestion"] = self.suggestion
        return d


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    findings: tuple[Finding, ...] = ()

    def to_json(self) -> str:
        return json.dumps(
            {"valid": self.valid, "findings": [f.to_dict() for f in self.findings]},
            sort_keys=True,
        )


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of merging them."""


def _strict_mapping(loader: _StrictLoader, node: yaml.MappingNode, deep: bool = False) -> dict:
    mapping: dict = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in mapping:
            raise yaml.constructor.ConstructorError(
                None, None, f"duplicate key: {key!r}", key_node.start_mark
            )
        mapping[key] = loader.construct_object(value_node, deep=deep)
    return mapping


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping
)


def _require_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise SchemaError(f"expected a mapping, got {type(value).__name__}", path)
    return value


def _require_str(block: Mapping[str, Any], key: str, path: str) -> str:
    if key not in block:
        raise SchemaError(f"missing required field '{key}'", path)
    value = block[key]
    if not isinstance(value, str):
        raise SchemaError(f"expected a string, got {type(value).__name__}", f"{path}.{key}")
    return value


def _opt_number(block: Mapping[str, Any], key: str, path: str, default: float) -> float:
    value = block.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected a number, got {type(value).__name__}", f"{path}.{key}")
    return float(value)


def _opt_posint(block: Mapping[str, Any], key: str, path: str, default: int) -> int:
    value = block.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"expected an integer, got {type(value).__name__}", f"{path}.{key}")
    if value <= 0:
        raise SchemaError("must be a positive integer", f"{path}.{key}")
    return value


def _reject_unknown(block: Mapping[str, Any], allowed: Iterable[str], path: str) -> None:
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise SchemaError(f"unknown key '{unknown[0]}'", f"{path}.{unknown[0]}" if path else unknown[0])


def _default_snapshot() -> RegistrySnapshot:
    from .registries import default_registry_snapshot

    return default_registry_snapshot()


def _resolve_backend(name: str, path: str) -> str:
    alias = BACKEND_ALIASES.get(name)
    if alias is not None:
        warnings.warn(
            f"env backend '{name}' is a deprecated alias for '{alias}'",
            DeprecationWarning,
            stacklevel=3,
        )
        return alias
    return name


def _parse_component(
    raw: Any, path: str, registered: frozenset[str], default_name: str, kind: str
) -> tuple[str, Mapping[str, Any]]:
    block = _require_mapping(raw, path)
    _reject_unknown(block, ("name", "config"), path)
    name = block.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise SchemaError("expected a nonempty string", f"{path}.name")
    if path == "env":
        name = _resolve_backend(name, path)
    if name not in registered:
        raise UnknownComponentError(f"unknown {kind} '{name}'", f"{path}.name")
    config = _require_mapping(block.get("config"), f"{path}.config")
    return name, dict(config)


def _parse_activation(raw: Any, path: str) -> ToolkitActivation:
    block = _require_mapping(raw, path)
    _reject_unknown(block, ("activated_tools", "config"), path)
    tools_raw = block.get("activated_tools", [])
    if tools_raw is None:
        tools_raw = []
    if not isinstance(tools_raw, list):
        raise SchemaError("expected a list of tool names", f"{path}.activated_tools")
    tools: list[str] = []
    for i, item in enumerate(tools_raw):
        if not isinstance(item, str) or not item:
            raise SchemaError("tool names must be nonempty strings", f"{path}.activated_tools[{i}]")
        if item in tools:
            raise SchemaError(f"duplicate tool name '{item}'", f"{path}.activated_tools[{i}]")
        tools.append(item)
    config = _require_mapping(block.get("config"), f"{path}.config")
    return ToolkitActivation(activated_tools=tuple(tools), config=dict(config))


def parse_config(yaml_text: str, registries: RegistrySnapshot | None = None) -> AgentConfig:
    """Parse YAML text into a fully-defaulted AgentConfig.

    Raises ConfigSyntaxError on malformed YAML, SchemaError on structural
    problems (with a field path), UnknownComponentError when the env or
    context-manager name is not registered.
    """
    registries = registries or _default_snapshot()
    try:
        doc = yaml.load(yaml_text, Loader=_StrictLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "document"
        raise ConfigSyntaxError(f"malformed YAML: {exc}", path=where) from exc

    root = _require_mapping(doc, "")
    _reject_unknown(root, _TOP_LEVEL_KEYS, "")

    agent = _require_mapping(root.get("agent"), "agent")
    if not agent:
        raise SchemaError("missing required block", "agent")
    _reject_unknown(agent, ("name", "instructions"), "agent")
    name = _require_str(agent, "name", "agent")
    if not NAME_RE.match(name):
        raise SchemaError("name must match [A-Za-z0-9_-]+", "agent.name")
    instructions = _require_str(agent, "instructions", "agent")
    if not instructions.strip():
        raise SchemaError("instructions must be nonempty", "agent.instructions")

    env_name, env_config = _parse_component(
        root.get("env"), "env", registries.env_backends, DEFAULT_ENV_NAME, "env backend"
    )
    ctx_name, ctx_config = _parse_component(
        root.get("context_manager"),
        "context_manager",
        registries.context_managers,
        DEFAULT_CTX_NAME,
        "context manager",
    )

    toolkits_raw = _require_mapping(root.get("toolkits"), "toolkits")
    toolkits: dict[str, ToolkitActivation] = {}
    for tk_name, raw in toolkits_raw.items():
        if not isinstance(tk_name, str) or not tk_name:
            raise SchemaError("toolkit names must be nonempty strings", "toolkits")
        toolkits[tk_name] = _parse_activation(raw, f"toolkits.{tk_name}")

    sampling_raw = _require_mapping(root.get("sampling"), "sampling")
    _reject_unknown(sampling_raw, ("temperature", "max_turns", "max_tokens"), "sampling")
    temperature = _opt_number(sampling_raw, "temperature", "sampling", DEFAULT_TEMPERATURE)
    if not 0.0 <= temperature <= 2.0:
        raise SchemaError("temperature must be within [0, 2]", "sampling.temperature")
    sampling = SamplingParams(
        temperature=temperature,
        max_turns=_opt_posint(sampling_raw, "max_turns", "sampling", DEFAULT_MAX_TURNS),
        max_tokens=_opt_posint(sampling_raw, "max_tokens", "sampling", DEFAULT_MAX_TOKENS),
    )

    timeouts_raw = _require_mapping(root.get("timeouts"), "timeouts")
    _reject_unknown(timeouts_raw, ("tool_s", "step_s", "episode_s"), "timeouts")
    timeouts = TimeoutSpec(
        tool_s=_opt_number(timeouts_raw, "tool_s", "timeouts", DEFAULT_TOOL_S),
        step_s=_opt_number(timeouts_raw, "step_s", "timeouts", DEFAULT_STEP_S),
        episode_s=_opt_number(timeouts_raw, "episode_s", "timeouts", DEFAULT_EPISODE_S),
    )
    if not 0 < timeouts.tool_s <= timeouts.step_s <= timeouts.episode_s:
        raise SchemaError("required ordering is 0 < tool_s <= step_s <= episode_s", "timeouts")

    return AgentConfig(
        name=name,
        instructions=instructions,
        env=EnvSpec(env_name, env_config),
        context_manager=CtxSpec(ctx_name, ctx_config),
        toolkits=toolkits,
        sampling=sampling,
        timeouts=timeouts,
    )


def _structural_findings(cfg: AgentConfig) -> list[Finding]:
    findings: list[Finding] = []
    if not cfg.name or not NAME_RE.match(cfg.name):
        findings.append(Finding("InvalidName", "agent.name", "name must match [A-Za-z0-9_-]+"))
    if not cfg.instructions.strip():
        findings.append(
            Finding("EmptyInstructions", "agent.instructions", "instructions must be nonempty")
        )
    if not 0.0 <= cfg.sampling.temperature <= 2.0:
        findings.append(
            Finding("SamplingOutOfRange", "sampling.temperature", "temperature must be within [0, 2]")
        )
    if cfg.sampling.max_turns <= 0:
        findings.append(Finding("SamplingOutOfRange", "sampling.max_turns", "must be positive"))
    if cfg.sampling.max_tokens <= 0:
        findings.append(Finding("SamplingOutOfRange", "sampling.max_tokens", "must be positive"))
    t = cfg.timeouts
    if not 0 < t.tool_s <= t.step_s <= t.episode_s:
        findings.append(
            Finding("TimeoutOrdering", "timeouts", "required ordering is 0 < tool_s <= step_s <= episode_s")
        )
    for tk_name, act in cfg.toolkits.items():
        seen: set[str] = set()
        for tool in act.activated_tools:
            if not tool:
                findings.append(
                    Finding("InvalidName", f"toolkits.{tk_name}.activated_tools", "empty tool name")
                )
            elif tool in seen:
                findings.append(
                    Finding(
                        "DuplicateTool",
                        f"toolkits.{tk_name}.activated_tools",
                        f"tool '{tool}' activated twice",
                    )
                )
            seen.add(tool)
    return findings


def validate_config(cfg: AgentConfig, registries: RegistrySnapshot | None = None) -> ValidationReport:
    """Classify a config as valid/invalid, listing every violation.

    Problems are reported, never thrown; referential checks resolve names
    against ``registries``.
    """
    registries = registries or _default_snapshot()
    findings = _structural_findings(cfg)

    env_name = BACKEND_ALIASES.get(cfg.env.name, cfg.env.name)
    if env_name not in registries.env_backends:
        findings.append(
            Finding(
                "UnknownEnv",
                "env.name",
                f"unknown env backend '{cfg.env.name}'",
                _suggest(cfg.env.name, registries.env_backends),
            )
        )
    if cfg.context_manager.name not in registries.context_managers:
        findings.append(
            Finding(
                "UnknownContextManager",
                "context_manager.name",
                f"unknown context manager '{cfg.context_manager.name}'",
                _suggest(cfg.context_manager.name, registries.context_managers),
            )
        )
    for tk_name, act in cfg.toolkits.items():
        available = registries.toolkits.get(tk_name)
        if available is None:
            findings.append(
                Finding(
                    "UnknownToolkit",
                    f"toolkits.{tk_name}",
                    f"unknown toolkit '{tk_name}'",
                    _suggest(tk_name, registries.toolkits),
                )
            )
            continue
        for tool in act.activated_tools:
            if tool not in available:
                findings.append(
                    Finding(
                        "UnknownTool",
                        f"toolkits.{tk_name}.activated_tools",
                        f"toolkit '{tk_name}' has no tool '{tool}'",
                        _suggest(tool, available),
                    )
                )
    return ValidationReport(valid=not findings, findings=tuple(findings))


def _suggest(name: str, candidates: Iterable[str]) -> str | None:
    matches = get_close_matches(name, list(candidates), n=1, cutoff=0.6)
    return matches[0] if matches else None


def _emit_scalar(x: float) -> int | float:
    return int(x) if float(x).is_integer() else x


def emit_config(cfg: AgentConfig) -> str:
    """Emit canonical YAML: fixed key order, 2-space indent, defaults omitted."""
    findings = _structural_findings(cfg)
    if findings:
        raise InvalidConfigError(
            "config fails structural validation: " + "; ".join(f.message for f in findings)
        )

    doc: dict[str, Any] = {"agent": {"name": cfg.name, "instructions": cfg.instructions}}

    env_block: dict[str, Any] = {}
    if cfg.env.name != DEFAULT_ENV_NAME:
        env_block["name"] = cfg.env.name
    if cfg.env.config:
        env_block.setdefault("name", cfg.env.name)
        env_block["config"] = dict(cfg.env.config)
    if env_block:
        doc["env"] = env_block

    ctx_block: dict[str, Any] = {}
    if cfg.context_manager.name != DEFAULT_CTX_NAME:
        ctx_block["name"] = cfg.context_manager.name
    if cfg.context_manager.config:
        ctx_block.setdefault("name", cfg.context_manager.name)
        ctx_block["config"] = dict(cfg.context_manager.config)
    if ctx_block:
        doc["context_manager"] = ctx_block

    if cfg.toolkits:
        tks: dict[str, Any] = {}
        for tk_name in cfg.toolkits:
            act = cfg.toolkits[tk_name]
            block: dict[str, Any] = {}
            if act.activated_tools:
                block["activated_tools"] = list(act.activated_tools)
            if act.config:
                block["config"] = dict(act.config)
            tks[tk_name] = block
        doc["toolkits"] = tks

    sampling: dict[str, Any] = {}
    if cfg.sampling.temperature != DEFAULT_TEMPERATURE:
        sampling["temperature"] = _emit_scalar(cfg.sampling.temperature)
    if cfg.sampling.max_turns != DEFAULT_MAX_TURNS:
        sampling["max_turns"] = cfg.sampling.max_turns
    if cfg.sampling.max_tokens != DEFAULT_MAX_TOKENS:
        sampling["max_tokens"] = cfg.sampling.max_tokens
    if sampling:
        doc["sampling"] = sampling

    timeouts: dict[str, Any] = {}
    if cfg.timeouts.tool_s != DEFAULT_TOOL_S:
        timeouts["tool_s"] = _emit_scalar(cfg.timeouts.tool_s)
    if cfg.timeouts.step_s != DEFAULT_STEP_S:
        timeouts["step_s"] = _emit_scalar(cfg.timeouts.step_s)
    if cfg.timeouts.episode_s != DEFAULT_EPISODE_S:
        timeouts["episode_s"] = _emit_scalar(cfg.timeouts.episode_s)
    if timeouts:
        doc["timeouts"] = timeouts

    return yaml.dump(doc, sort_keys=False, indent=2, default_flow_style=False, allow_unicode=True)


def config_fingerprint(cfg: AgentConfig) -> str:
    """Stable short hash identifying a config's canonical form."""
    cached = cfg.__dict__.get("_fingerprint_cache")
    if cached is None:
        cached = hashlib.sha256(emit_config(cfg).encode("utf-8")).hexdigest()[:16]
        object.__setattr__(cfg, "_fingerprint_cache", cached)  # frozen-safe memo
    return cached
