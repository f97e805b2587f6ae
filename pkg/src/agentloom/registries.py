"""Default registry snapshot used by config validation."""
from __future__ import annotations

from .config import RegistrySnapshot

CONTEXT_MANAGERS = frozenset({"base", "pruning"})


def default_registry_snapshot(
    extra_toolkits: dict[str, frozenset[str]] | None = None,
) -> RegistrySnapshot:
    from .environment import BACKENDS
    from .tools.builtins import builtin_tool_names

    toolkits = builtin_tool_names()
    if extra_toolkits:
        toolkits.update(extra_toolkits)
    return RegistrySnapshot(
        env_backends=frozenset(BACKENDS),
        context_managers=CONTEXT_MANAGERS,
        toolkits=toolkits,
    )
