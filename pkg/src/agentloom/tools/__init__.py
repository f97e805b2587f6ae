from .agent_tool import agent_as_tool
from .builtins import BUILTIN_TOOLKITS, ToolkitFactory, builtin_tool_names
from .defs import InvokeContext, ToolCall, ToolDef, ToolResult, check_arguments, object_schema
from .registry import BindingError, ToolRegistry, UnknownTool, UnknownToolkit, build_registry, invoke
from .remote import HandshakeError, RemoteClient, RemoteError, RemoteSpec, connect_remote_toolkit

__all__ = [
    "BUILTIN_TOOLKITS",
    "BindingError",
    "HandshakeError",
    "InvokeContext",
    "RemoteClient",
    "RemoteError",
    "RemoteSpec",
    "ToolCall",
    "ToolDef",
    "ToolRegistry",
    "ToolResult",
    "ToolkitFactory",
    "UnknownTool",
    "UnknownToolkit",
    "agent_as_tool",
    "build_registry",
    "builtin_tool_names",
    "check_arguments",
    "connect_remote_toolkit",
    "invoke",
    "object_schema",
]
