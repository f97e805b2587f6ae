from .library import LibraryEntry, TestReport, ToolLibrary, search_tools, seed_builtin_library
from .meta import DialogueSession, meta_agent_config, run_meta_agent
from .synthesis import SynthesisFailed, SynthesizedTool, synthesize_tool
from .workflow import (
    GenerationError,
    GenerationReport,
    RequirementSpec,
    assemble_config,
    clarify,
    generate_workflow,
)

__all__ = [
    "DialogueSession",
    "GenerationError",
    "GenerationReport",
    "LibraryEntry",
    "RequirementSpec",
    "SynthesisFailed",
    "SynthesizedTool",
    "TestReport",
    "ToolLibrary",
    "assemble_config",
    "clarify",
    "generate_workflow",
    "meta_agent_config",
    "run_meta_agent",
    "search_tools",
    "seed_builtin_library",
    "synthesize_tool",
]
