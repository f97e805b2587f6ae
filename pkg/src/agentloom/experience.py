"""Ordered bank of textual experience entries with per-epoch snapshots.

Entries are injected into agent contexts at inference time; the practice
loop edits the bank between epochs.  The bank is single-writer: edits are
applied sequentially, snapshots are immutable once written.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

DEFAULT_CAPACITY = 32
MAX_ENTRY_WORDS = 64

EXPERIENCE_HEADER = "## Learned Experiences"


@dataclass(frozen=True)
class ExperienceEntry:
    id: str
    text: str
    epoch_added: int
    last_modified_epoch: int
    origin_task_id: str


@dataclass(frozen=True)
class BankEdit:
    op: str  # add | revise | remove | keep
    target_id: str | None = None
    text: str | None = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BankEdit":
        return cls(op=d["op"], target_id=d.get("target_id"), text=d.get("text"))


@dataclass(frozen=True)
class EditOutcome:
    applied: tuple[BankEdit, ...]
    rejected: tuple[tuple[BankEdit, str], ...]  # (edit, reason)


def _cap_words(text: str) -> str:
    words = text.split()
    return " ".join(words[:MAX_ENTRY_WORDS])


@dataclass(frozen=True)
class ExperienceBank:
    entries: tuple[ExperienceEntry, ...] = ()
    capacity: int = DEFAULT_CAPACITY
    next_id: int = 1

    def __len__(self) -> int:
        return len(self.entries)

    def render(self) -> str:
        """Numbered block appended to system prompts; empty bank renders empty."""
        if not self.entries:
            return ""
        lines = [EXPERIENCE_HEADER]
        lines += [f"{i}. {e.text}" for i, e in enumerate(self.entries, start=1)]
        return "\n".join(lines)

    def apply_edits(
        self, edits: Iterable[BankEdit], epoch: int, origin_task_id: str
    ) -> tuple["ExperienceBank", EditOutcome]:
        """Apply edits in order; invalid edits are rejected individually."""
        entries = list(self.entries)
        next_id = self.next_id
        applied: list[BankEdit] = []
        rejected: list[tuple[BankEdit, str]] = []
        by_id = lambda eid: next((i for i, e in enumerate(entries) if e.id == eid), None)

        for edit in edits:
            if edit.op == "keep":
                applied.append(edit)
                continue
            if edit.op == "add":
                if not edit.text or not edit.text.strip():
                    rejected.append((edit, "add requires nonempty text"))
                    continue
                if len(entries) >= self.capacity:
                    entries.pop(0)  # oldest-entry eviction
                entries.append(
                    ExperienceEntry(
                        id=f"exp-{next_id:04d}",
                        text=_cap_words(edit.text.strip()),
                        epoch_added=epoch,
                        last_modified_epoch=epoch,
                        origin_task_id=origin_task_id,
                    )
                )
                next_id += 1
                applied.append(edit)
                continue
            if edit.op in ("revise", "remove"):
                idx = by_id(edit.target_id)
                if idx is None:
                    rejected.append((edit, f"no entry with id {edit.target_id!r}"))
                    continue
                if edit.op == "remove":
                    entries.pop(idx)
                else:
                    if not edit.text or not edit.text.strip():
                        rejected.append((edit, "revise requires nonempty text"))
                        continue
                    entries[idx] = replace(
                        entries[idx],
                        text=_cap_words(edit.text.strip()),
                        last_modified_epoch=epoch,
                    )
                applied.append(edit)
                continue
            rejected.append((edit, f"unknown op {edit.op!r}"))

        bank = ExperienceBank(entries=tuple(entries), capacity=self.capacity, next_id=next_id)
        return bank, EditOutcome(applied=tuple(applied), rejected=tuple(rejected))

    def to_dict(self) -> dict[str, Any]:
        return {
            "capacity": self.capacity,
            "next_id": self.next_id,
            "entries": [
                {
                    "id": e.id,
                    "text": e.text,
                    "epoch_added": e.epoch_added,
                    "last_modified_epoch": e.last_modified_epoch,
                    "origin_task_id": e.origin_task_id,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperienceBank":
        return cls(
            entries=tuple(
                ExperienceEntry(
                    id=e["id"],
                    text=e["text"],
                    epoch_added=e["epoch_added"],
                    last_modified_epoch=e["last_modified_epoch"],
                    origin_task_id=e["origin_task_id"],
                )
                for e in d.get("entries", [])
            ),
            capacity=d.get("capacity", DEFAULT_CAPACITY),
            next_id=d.get("next_id", 1),
        )


def save_bank(bank: ExperienceBank, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(bank.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def load_bank(path: str | Path) -> ExperienceBank:
    return ExperienceBank.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def snapshot_path(root: str | Path, run_id: str, epoch: int) -> Path:
    return Path(root) / "banks" / run_id / f"epoch_{epoch}.json"
