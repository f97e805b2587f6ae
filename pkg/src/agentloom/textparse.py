"""Parsing helpers for structured model output (fenced blocks)."""
from __future__ import annotations

import json
import re
from typing import Any

_FENCE_RE = re.compile(r"```([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


def fenced_blocks(text: str, lang: str | None = None) -> list[str]:
    """All fenced code blocks, optionally filtered by language tag."""
    out = []
    for match in _FENCE_RE.finditer(text):
        tag, body = match.group(1).lower(), match.group(2)
        if lang is None or tag == lang:
            out.append(body.strip("\n"))
    return out


def first_json_block(text: str) -> Any:
    """Parse the first fenced JSON block; falls back to a bare JSON document."""
    for candidate in fenced_blocks(text, "json") + fenced_blocks(text, ""):
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            continue
    stripped = text.strip()
    if stripped.startswith(("{", "[")):
        return json.loads(stripped)
    raise ValueError("no parsable JSON block in model output")
