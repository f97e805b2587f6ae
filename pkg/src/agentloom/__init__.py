"""agentloom: declarative agent runtime, generation, practice, and rollouts."""

__version__ = "0.1.0"

from .config import (
    AgentConfig,
    ConfigError,
    ConfigSyntaxError,
    CtxSpec,
    EnvSpec,
    InvalidConfigError,
    RegistrySnapshot,
    SamplingParams,
    SchemaError,
    TimeoutSpec,
    ToolkitActivation,
    UnknownComponentError,
    ValidationReport,
    config_fingerprint,
    emit_config,
    parse_config,
    validate_config,
)
from .environment import EnvHandle, ExecResult, create_env
from .evalharness import EvalTask, MetricsReport, evaluate, load_dataset, normalize_answer
from .experience import BankEdit, ExperienceBank, load_bank, save_bank
from .gateway import (
    ChatRequest,
    ChatResponse,
    HttpTransport,
    Message,
    RecordTransport,
    ReplayTransport,
    ScriptedTransport,
    Transport,
    complete,
    count_tokens,
    request_fingerprint,
)
from .practice import RolloutGroup, distill_semantic_advantage, practice_run, rollout_group, score_group, test_with_bank
from .runtime import ContextState, RuntimeDeps, Trajectory, Turn, inject_experiences, manage_context, mark_invalid_turns, run_episode
from .service.advantages import compute_advantages

__all__ = [
    "AgentConfig",
    "BankEdit",
    "ChatRequest",
    "ChatResponse",
    "ConfigError",
    "ConfigSyntaxError",
    "ContextState",
    "CtxSpec",
    "EnvHandle",
    "EnvSpec",
    "EvalTask",
    "ExecResult",
    "ExperienceBank",
    "HttpTransport",
    "InvalidConfigError",
    "Message",
    "MetricsReport",
    "RecordTransport",
    "RegistrySnapshot",
    "ReplayTransport",
    "RolloutGroup",
    "RuntimeDeps",
    "SamplingParams",
    "SchemaError",
    "ScriptedTransport",
    "TimeoutSpec",
    "ToolkitActivation",
    "Trajectory",
    "Transport",
    "Turn",
    "UnknownComponentError",
    "ValidationReport",
    "complete",
    "compute_advantages",
    "config_fingerprint",
    "count_tokens",
    "create_env",
    "distill_semantic_advantage",
    "emit_config",
    "evaluate",
    "inject_experiences",
    "load_bank",
    "load_dataset",
    "manage_context",
    "mark_invalid_turns",
    "normalize_answer",
    "parse_config",
    "practice_run",
    "request_fingerprint",
    "rollout_group",
    "run_episode",
    "save_bank",
    "score_group",
    "test_with_bank",
    "validate_config",
]
