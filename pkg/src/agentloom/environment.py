"""Execution environments: local shell, sandbox jail, and a scripted mock.

The sandbox is a local subprocess jail: dedicated scratch directory,
kill-on-timeout of the whole process group, 64 KiB output cap per stream,
and best-effort network denial unless explicitly enabled.
"""
from __future__ import annotations

import json
import os
import re
import resource
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import time
import uuid
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .config import BACKEND_ALIASES, EnvSpec

TIMEOUT_EXIT = -1001
STREAM_CAP_BYTES = 64 * 1024
_CPU_LIMIT_SLACK_S = 5
_FSIZE_LIMIT_BYTES = 64 * 1024 * 1024


class UnknownBackend(Exception):
    pass


class ResourceError(Exception):
    pass


class EnvClosed(Exception):
    pass


class SpawnError(Exception):
    pass


class InterpreterMissing(Exception):
    pass


@dataclass(frozen=True)
class ExecResult:
    stdout: str
    stderr: str
    exit_code: int
    wall_time_ms: int
    truncated: bool = False
    stdout_original_bytes: int = 0
    stderr_original_bytes: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "stdout": self.stdout,
            "stderr": self.stderr,
            "exit_code": self.exit_code,
            "wall_time_ms": self.wall_time_ms,
            "truncated": self.truncated,
            "stdout_original_bytes": self.stdout_original_bytes,
            "stderr_original_bytes": self.stderr_original_bytes,
        }

    def render(self) -> str:
        """Render for tool results: prefix kept, truncation marked with byte counts."""
        parts = []
        if self.stdout:
            parts.append(self.stdout)
        if self.stderr:
            parts.append(f"[stderr]\n{self.stderr}")
        if self.truncated:
            parts.append(
                f"[truncated: stdout {self.stdout_original_bytes} bytes, "
                f"stderr {self.stderr_original_bytes} bytes]"
            )
        if self.exit_code == TIMEOUT_EXIT:
            parts.append("[killed: timeout]")
        elif self.exit_code != 0:
            parts.append(f"[exit code {self.exit_code}]")
        return "\n".join(parts) if parts else "(no output)"


def _truncate(data: bytes) -> tuple[str, bool, int]:
    original = len(data)
    truncated = original > STREAM_CAP_BYTES
    if truncated:
        data = data[:STREAM_CAP_BYTES]
    return data.decode("utf-8", errors="replace"), truncated, original


class EnvHandle:
    """Base handle; primitives are callable only while lifecycle == 'ready'."""

    backend = "abstract"

    def __init__(self, clock: Callable[[], float] = time.monotonic) -> None:
        self.session_id = uuid.uuid4().hex
        self.lifecycle = "created"
        self._clock = clock
        self._last_exit_code: int | None = None

    def _require_ready(self) -> None:
        if self.lifecycle != "ready":
            raise EnvClosed(f"environment is {self.lifecycle}, not ready")

    def state_snapshot(self) -> dict[str, Any]:
        return {
            "backend": self.backend,
            "session_id": self.session_id,
            "lifecycle": self.lifecycle,
            "cwd": getattr(self, "scratch_dir", None) and str(self.scratch_dir),
            "last_exit_code": self._last_exit_code,
        }

    def exec_command(self, command: str, timeout_s: float) -> ExecResult:
        raise NotImplementedError

    def exec_code(self, source: str, timeout_s: float) -> ExecResult:
        raise NotImplementedError

    def close(self) -> None:
        self.lifecycle = "closed"

    def __enter__(self) -> "EnvHandle":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


class _SubprocessEnv(EnvHandle):
    """Shared machinery for subprocess-backed environments."""

    def __init__(self, spec_config: Mapping[str, Any], clock: Callable[[], float]) -> None:
        super().__init__(clock)
        workdir = Path(spec_config.get("workdir") or Path(tempfile.gettempdir()) / "agentloom")
        self.scratch_dir = workdir / "sessions" / self.session_id
        try:
            self.scratch_dir.mkdir(parents=True, exist_ok=False)
        except OSError as exc:
            raise ResourceError(f"cannot allocate scratch directory: {exc}") from exc
        self.interpreter = spec_config.get("interpreter", sys.executable)
        self.allow_network = bool(spec_config.get("allow_network", False))
        self._keep_scratch = bool(spec_config.get("keep_scratch", False))
        self._pgids: list[int] = []
        self._code_counter = 0
        self.lifecycle = "ready"

    def _jailed(self) -> bool:
        return False

    def _child_env(self) -> dict[str, str]:
        env = dict(os.environ)
        env["HOME"] = str(self.scratch_dir)
        if self._jailed() and not self.allow_network:
            # Best-effort denial: unroutable proxies plus a sitecustomize that
            # refuses socket connections for the bundled interpreter.
            env["http_proxy"] = env["https_proxy"] = "http://127.0.0.1:9"
            env["HTTP_PROXY"] = env["HTTPS_PROXY"] = "http://127.0.0.1:9"
            env["PYTHONPATH"] = str(self._jail_dir())
        return env

    def _jail_dir(self) -> Path:
        jail = self.scratch_dir / "_jail"
        if not jail.exists():
            jail.mkdir()
            (jail / "sitecustomize.py").write_text(
                "import socket\n"
                "def _deny(*a, **k):\n"
                "    raise OSError('network access is disabled in this sandbox')\n"
                "socket.socket.connect = _deny\n"
                "socket.create_connection = _deny\n",
                encoding="utf-8",
            )
        return jail

    def _preexec(self) -> Callable[[], None]:
        cpu_limit = None
        if self._jailed():
            cpu_limit = int(self._current_timeout) + _CPU_LIMIT_SLACK_S

        def setup() -> None:
            os.setsid()
            if cpu_limit is not None:
                resource.setrlimit(resource.RLIMIT_CPU, (cpu_limit, cpu_limit + 1))
                resource.setrlimit(resource.RLIMIT_FSIZE, (_FSIZE_LIMIT_BYTES, _FSIZE_LIMIT_BYTES))

        return setup

    def _run(self, argv: list[str] | str, timeout_s: float, shell: bool) -> ExecResult:
        self._require_ready()
        self._current_timeout = max(timeout_s, 0.1)
        start = self._clock()
        try:
            proc = subprocess.Popen(
                argv,
                shell=shell,
                cwd=str(self.scratch_dir),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                env=self._child_env(),
                preexec_fn=self._preexec(),
            )
        except OSError as exc:
            raise SpawnError(f"cannot spawn process: {exc}") from exc
        self._pgids.append(proc.pid)  # setsid makes pid == pgid

        timed_out = False
        try:
            out, err = proc.communicate(timeout=timeout_s)
        except subprocess.TimeoutExpired:
            timed_out = True
            self._kill_pgid(proc.pid)
            out, err = proc.communicate()
        wall_ms = int((self._clock() - start) * 1000)

        stdout, out_trunc, out_len = _truncate(out or b"")
        stderr, err_trunc, err_len = _truncate(err or b"")
        exit_code = TIMEOUT_EXIT if timed_out else proc.returncode
        self._last_exit_code = exit_code
        return ExecResult(
            stdout=stdout,
            stderr=stderr,
            exit_code=exit_code,
            wall_time_ms=wall_ms,
            truncated=out_trunc or err_trunc,
            stdout_original_bytes=out_len,
            stderr_original_bytes=err_len,
        )

    @staticmethod
    def _kill_pgid(pgid: int) -> None:
        try:
            os.killpg(pgid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass

    def exec_command(self, command: str, timeout_s: float) -> ExecResult:
        return self._run(command, timeout_s, shell=True)

    def exec_code(self, source: str, timeout_s: float) -> ExecResult:
        self._require_ready()
        if not source:
            raise ValueError("source must be nonempty")
        if not (os.path.isabs(self.interpreter) and os.path.exists(self.interpreter)) and not shutil.which(
            self.interpreter
        ):
            raise InterpreterMissing(f"interpreter not found: {self.interpreter}")
        self._code_counter += 1
        script = self.scratch_dir / f"job_{self._code_counter}.py"
        script.write_text(source, encoding="utf-8")
        return self._run([self.interpreter, str(script)], timeout_s, shell=False)

    def close(self) -> None:
        if self.lifecycle == "closed":
            return
        for pgid in self._pgids:
            self._kill_pgid(pgid)
        if not self._keep_scratch:
            shutil.rmtree(self.scratch_dir, ignore_errors=True)
        self.lifecycle = "closed"


class LocalShellEnv(_SubprocessEnv):
    """Host shell access; commands run in the session scratch directory."""

    backend = "local_shell"


class SandboxEnv(_SubprocessEnv):
    """Subprocess jail with resource caps and network denial by default."""

    backend = "sandbox"

    def _jailed(self) -> bool:
        return True


class MockEnv(EnvHandle):
    """Fully scripted environment.

    The script is a list of rules: ``{"match": regex, "on": "command" |
    "code" | "any", "result": {stdout, stderr, exit_code, sleep_s}}``.
    The first matching rule wins; ``sleep_s`` really sleeps so timeout
    behaviour can be exercised.  Unmatched input exits 127.
    """

    backend = "mock"

    def __init__(
        self,
        spec_config: Mapping[str, Any],
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        super().__init__(clock)
        script = spec_config.get("script", [])
        if isinstance(script, str):
            script = json.loads(Path(script).read_text(encoding="utf-8"))
        self._rules = [
            (re.compile(rule["match"], re.DOTALL), rule.get("on", "any"), rule.get("result", {}))
            for rule in script
        ]
        self._scratch: Path | None = None
        self.lifecycle = "ready"

    @property
    def scratch_dir(self) -> Path:
        if self._scratch is None:
            self._scratch = Path(tempfile.mkdtemp(prefix="agentloom-mock-"))
        return self._scratch

    def _dispatch(self, text: str, channel: str, timeout_s: float) -> ExecResult:
        self._require_ready()
        start = self._clock()
        for pattern, on, result in self._rules:
            if on not in ("any", channel):
                continue
            if pattern.search(text):
                sleep_s = float(result.get("sleep_s", 0.0))
                timed_out = sleep_s >= timeout_s
                if sleep_s:
                    time.sleep(min(sleep_s, timeout_s))
                wall_ms = int((self._clock() - start) * 1000)
                if timed_out:
                    self._last_exit_code = TIMEOUT_EXIT
                    return ExecResult("", "", TIMEOUT_EXIT, wall_ms)
                exit_code = int(result.get("exit_code", 0))
                self._last_exit_code = exit_code
                return ExecResult(
                    stdout=result.get("stdout", ""),
                    stderr=result.get("stderr", ""),
                    exit_code=exit_code,
                    wall_time_ms=wall_ms,
                )
        self._last_exit_code = 127
        wall_ms = int((self._clock() - start) * 1000)
        return ExecResult("", f"no mock rule matches: {text[:80]}", 127, wall_ms)

    def exec_command(self, command: str, timeout_s: float) -> ExecResult:
        return self._dispatch(command, "command", timeout_s)

    def exec_code(self, source: str, timeout_s: float) -> ExecResult:
        if not source:
            raise ValueError("source must be nonempty")
        return self._dispatch(source, "code", timeout_s)

    def close(self) -> None:
        if self.lifecycle == "closed":
            return
        if self._scratch is not None:
            shutil.rmtree(self._scratch, ignore_errors=True)
        self.lifecycle = "closed"


BACKENDS: dict[str, type[EnvHandle]] = {
    "local_shell": LocalShellEnv,
    "sandbox": SandboxEnv,
    "mock": MockEnv,
}


def create_env(spec: EnvSpec, clock: Callable[[], float] = time.monotonic) -> EnvHandle:
    """Create a ready environment handle for a registered backend."""
    name = spec.name
    if name in BACKEND_ALIASES:
        resolved = BACKEND_ALIASES[name]
        warnings.warn(
            f"env backend '{name}' is a deprecated alias for '{resolved}'",
            DeprecationWarning,
            stacklevel=2,
        )
        name = resolved
    backend = BACKENDS.get(name)
    if backend is None:
        raise UnknownBackend(f"unknown env backend '{spec.name}'")
    if backend is MockEnv:
        return MockEnv(spec.config, clock)
    return backend(spec.config, clock)


def quote_command(argv: list[str]) -> str:
    return " ".join(shlex.quote(a) for a in argv)
