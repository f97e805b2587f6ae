"""Deadline arithmetic and bounded execution of blocking calls.

The runtime enforces nested tool < step < episode budgets.  Everything
blocking (gateway calls, pure tool functions) goes through ``run_bounded``;
subprocess-backed work is bounded by the environment itself.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Any, Callable


@dataclass(frozen=True)
class Deadline:
    """An absolute point on a monotonic clock."""

    at: float
    clock: Callable[[], float] = time.monotonic

    @classmethod
    def after(cls, seconds: float, clock: Callable[[], float] = time.monotonic) -> "Deadline":
        return cls(at=clock() + seconds, clock=clock)

    def remaining(self) -> float:
        return self.at - self.clock()

    def expired(self) -> bool:
        return self.remaining() <= 0

    def capped(self, seconds: float) -> float:
        """Budget of at most ``seconds``, never exceeding this deadline."""
        return min(seconds, max(self.remaining(), 0.0))


class BoundedTimeout(Exception):
    """Raised by ``run_bounded`` when the callable did not finish in time."""


def run_bounded(fn: Callable[[], Any], timeout_s: float) -> Any:
    """Run ``fn`` in a daemon thread and wait at most ``timeout_s`` seconds.

    Returns the callable's result or re-raises its exception.  On timeout the
    worker thread is abandoned (it must not hold locks across blocking work)
    and ``BoundedTimeout`` is raised.
    """
    if timeout_s <= 0:
        raise BoundedTimeout("budget already exhausted")

    box: dict[str, Any] = {}
    done = threading.Event()

    def worker() -> None:
        try:
            box["value"] = fn()
        except BaseException as exc:  # propagated to the caller below
            box["error"] = exc
        finally:
            done.set()

    thread = threading.Thread(target=worker, daemon=True)
    thread.start()
    if not done.wait(timeout_s):
        raise BoundedTimeout(f"call exceeded {timeout_s:.3f}s budget")
    if "error" in box:
        raise box["error"]
    return box.get("value")
