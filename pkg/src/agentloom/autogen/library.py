"""Searchable tool library with flat-file persistence.

The library is one metadata file (JSON) plus one source file per synthesized
tool: simple, diffable, no database.  Registrations are serialized under a
single writer lock; search is a pure function of (library, query, k).
"""
from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from ..tools.defs import ToolDef

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class TestReport:
    passed: bool
    rounds_used: int
    last_error: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "rounds_used": self.rounds_used, "last_error": self.last_error}


@dataclass(frozen=True)
class LibraryEntry:
    tool: ToolDef
    tags: tuple[str, ...]
    created_by: str  # builtin | workflow | meta_agent
    created_at: float
    source_file: str | None = None
    test_report: TestReport | None = None

    def tokens(self) -> set[str]:
        toks = tokenize(self.tool.name) | tokenize(self.tool.description)
        for tag in self.tags:
            toks |= tokenize(tag)
        toks |= tokenize(self.tool.toolkit)
        return toks

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.tool.name,
            "description": self.tool.description,
            "parameters": self.tool.parameters,
            "source": self.tool.source,
            "toolkit": self.tool.toolkit,
            "tags": list(self.tags),
            "created_by": self.created_by,
            "created_at": self.created_at,
            "source_file": self.source_file,
            "test_report": self.test_report.to_dict() if self.test_report else None,
        }


class ToolLibrary:
    """Name-unique tool index; synthesized entries must carry a passing test."""

    def __init__(self, root: str | Path | None = None, clock: Callable[[], float] = time.time):
        self.root = Path(root) if root else None
        self._clock = clock
        self._lock = threading.Lock()
        self.entries: list[LibraryEntry] = []
        if self.root and (self.root / "library.json").exists():
            self._load()

    def register(
        self,
        tool: ToolDef,
        tags: Iterable[str],
        created_by: str,
        source_code: str | None = None,
        test_report: TestReport | None = None,
    ) -> LibraryEntry:
        with self._lock:
            if any(e.tool.name == tool.name for e in self.entries):
                raise ValueError(f"library already has a tool named '{tool.name}'")
            if tool.source == "synthesized" and not (test_report and test_report.passed):
                raise ValueError("synthesized tools require a passing self-test record")
            source_file = None
            if source_code is not None and self.root is not None:
                tools_dir = self.root / "tools"
                tools_dir.mkdir(parents=True, exist_ok=True)
                source_file = str(tools_dir / f"{tool.name}.py")
                Path(source_file).write_text(source_code, encoding="utf-8")
            entry = LibraryEntry(
                tool=tool,
                tags=tuple(tags),
                created_by=created_by,
                created_at=self._clock(),
                source_file=source_file,
                test_report=test_report,
            )
            self.entries.append(entry)
            if self.root is not None:
                self._save()
            return entry

    def get(self, name: str) -> LibraryEntry | None:
        return next((e for e in self.entries if e.tool.name == name), None)

    def toolkit_names(self) -> dict[str, frozenset[str]]:
        """Toolkit -> tool names view, for registry snapshots."""
        out: dict[str, set[str]] = {}
        for e in self.entries:
            out.setdefault(e.tool.toolkit or e.tool.name, set()).add(e.tool.name)
        return {k: frozenset(v) for k, v in out.items()}

    def _save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {"entries": [e.to_dict() for e in self.entries]}
        (self.root / "library.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
        )

    def _load(self) -> None:
        payload = json.loads((self.root / "library.json").read_text(encoding="utf-8"))
        for d in payload.get("entries", []):
            report = d.get("test_report")
            self.entries.append(
                LibraryEntry(
                    tool=ToolDef(
                        name=d["name"],
                        description=d["description"],
                        parameters=d["parameters"],
                        source=d["source"],
                        binding=None,
                        toolkit=d.get("toolkit", ""),
                    ),
                    tags=tuple(d.get("tags", [])),
                    created_by=d.get("created_by", "builtin"),
                    created_at=d.get("created_at", 0.0),
                    source_file=d.get("source_file"),
                    test_report=TestReport(**report) if report else None,
                )
            )


_BUILTIN_TAGS: dict[str, list[str]] = {
    "search": ["web", "web-search", "internet"],
    "web_qa": ["web", "page", "question-answering"],
    "download_papers": ["arxiv", "paper", "pdf", "download", "research"],
    "execute_python_code": ["python", "code", "code-execution", "interpreter"],
    "run_command": ["shell", "bash", "command"],
    "read_file": ["file", "filesystem", "read"],
    "write_file": ["file", "filesystem", "write"],
    "current_time": ["time", "date", "clock"],
    "evaluate": ["math", "arithmetic", "calculator"],
}


def seed_builtin_library(root: str | Path | None = None, clock: Callable[[], float] = time.time) -> ToolLibrary:
    """A library pre-populated with every builtin tool."""
    from ..tools.builtins import BUILTIN_TOOLKITS

    lib = ToolLibrary(root=root, clock=clock)
    for factory in BUILTIN_TOOLKITS.values():
        for tool in factory(None, {}):
            if lib.get(tool.name) is None:
                lib.register(tool, _BUILTIN_TAGS.get(tool.name, []), created_by="builtin")
    return lib


def search_tools(lib: ToolLibrary, query: str, k: int) -> list[ToolDef]:
    """Rank by case-insensitive token overlap; ties break lexicographically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query_tokens = tokenize(query)
    scored: list[tuple[int, str, ToolDef]] = []
    for entry in lib.entries:
        score = len(query_tokens & entry.tokens())
        if score > 0:
            scored.append((score, entry.tool.name, entry.tool))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [tool for _, _, tool in scored[:k]]
