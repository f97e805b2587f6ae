"""REST service: rollout jobs, training-batch export, dialogue sessions, banks.

Endpoints (JSON bodies):
  GET  /healthz
  POST /v1/jobs                      -> {job_id}
  GET  /v1/jobs/{id}
  GET  /v1/jobs/{id}/trajectories[?task_id=]
  POST /v1/jobs/{id}/export          {estimator} -> TrainingBatch JSON
  POST /v1/sessions                  -> {session_id}
  GET  /v1/sessions/{id}             -> session status
  GET  /v1/sessions/{id}/events      -> server-sent event stream
  POST /v1/sessions/{id}/answer      {text}
  GET  /v1/banks/{run_id}/{epoch}
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import uvicorn
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from ..autogen.library import ToolLibrary, seed_builtin_library
from ..config import ConfigError, EnvSpec
from ..environment import EnvHandle, create_env
from ..gateway import Transport, default_model, transport_from_env
from ..runtime import RuntimeDeps
from ..service.advantages import ESTIMATORS, GroupTooSmall
from ..service.jobs import JobManager, JobNotDone, JobNotFound, JobStore, job_from_request
from ..service.sessions import NotAwaitingUser, SessionManager, SessionNotFound


@dataclass
class ServiceSettings:
    data_dir: Path
    job_runtime: RuntimeDeps
    session_transport_factory: Callable[[dict[str, Any]], Transport]
    session_sandbox_factory: Callable[[], EnvHandle]
    library: ToolLibrary
    model: str = "scripted-model"
    pool_size: int = 64


def default_settings(data_dir: str | Path, pool_size: int = 64) -> ServiceSettings:
    """Production wiring: HTTP transport from env vars, local sandbox."""
    data_dir = Path(data_dir)
    transport = transport_from_env()
    model = default_model()
    return ServiceSettings(
        data_dir=data_dir,
        job_runtime=RuntimeDeps(transport=transport, model=model),
        session_transport_factory=lambda body: transport,
        session_sandbox_factory=lambda: create_env(EnvSpec(name="sandbox")),
        library=seed_builtin_library(data_dir / "library"),
        model=model,
        pool_size=pool_size,
    )


def create_app(settings: ServiceSettings) -> FastAPI:
    app = FastAPI(title="agentloom rollout service")
    store = JobStore(settings.data_dir)
    manager = JobManager(store, settings.job_runtime, pool_size=settings.pool_size)
    sessions = SessionManager(
        settings.library,
        settings.session_transport_factory,
        settings.session_sandbox_factory,
        model=settings.model,
    )
    app.state.manager = manager
    app.state.sessions = sessions

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/v1/jobs")
    async def create_job(request: Request) -> dict[str, str]:
        body = await request.json()
        try:
            job = job_from_request(body)
        except (ValueError, ConfigError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        manager.submit(job)
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str) -> dict[str, Any]:
        try:
            return manager.get(job_id).to_dict()
        except JobNotFound:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")

    @app.get("/v1/jobs/{job_id}/trajectories")
    def get_trajectories(job_id: str, task_id: str | None = None) -> list[dict[str, Any]]:
        try:
            manager.get(job_id)
        except JobNotFound:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        return [
            {"ref": ref, "trajectory": t.to_dict()}
            for ref, t in store.load_trajectories(job_id, task_id)
        ]

    @app.post("/v1/jobs/{job_id}/export")
    async def export_job(job_id: str, request: Request) -> JSONResponse:
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        estimator = body.get("estimator", "mean_baseline")
        if estimator not in ESTIMATORS:
            raise HTTPException(status_code=422, detail=f"unknown estimator {estimator!r}")
        try:
            batch = manager.export_batch(job_id, estimator)
        except JobNotFound:
            raise HTTPException(status_code=404, detail=f"no job {job_id}")
        except JobNotDone as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except GroupTooSmall as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return JSONResponse(batch.to_dict())

    @app.post("/v1/sessions")
    async def create_session(request: Request) -> dict[str, Any]:
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        state = sessions.create(body)
        return {"session_id": state.session_id, "status": state.status}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str) -> dict[str, Any]:
        try:
            return sessions.get(session_id).to_dict()
        except SessionNotFound:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")

    @app.get("/v1/sessions/{session_id}/events")
    def session_events(session_id: str, request: Request, last_event_id: int = 0) -> StreamingResponse:
        header_id = request.headers.get("last-event-id")
        if header_id:
            last_event_id = int(header_id)
        try:
            stream = sessions.stream(session_id, last_event_id)
        except SessionNotFound:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return StreamingResponse(stream, media_type="text/event-stream")

    @app.post("/v1/sessions/{session_id}/answer")
    async def session_answer(session_id: str, request: Request) -> dict[str, Any]:
        body = await request.json()
        try:
            state = sessions.answer(session_id, str(body.get("text", "")))
        except SessionNotFound:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        except NotAwaitingUser as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return state.to_dict()

    @app.get("/v1/banks/{run_id}/{epoch}")
    def get_bank(run_id: str, epoch: int) -> dict[str, Any]:
        path = settings.data_dir / "banks" / run_id / f"epoch_{epoch}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no bank snapshot {run_id}/{epoch}")
        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/v1/banks/{run_id}")
    def list_bank_epochs(run_id: str) -> dict[str, Any]:
        root = settings.data_dir / "banks" / run_id
        if not root.exists():
            raise HTTPException(status_code=404, detail=f"no bank run {run_id}")
        epochs = sorted(int(p.stem.split("_")[1]) for p in root.glob("epoch_*.json"))
        return {"run_id": run_id, "epochs": epochs}

    @app.on_event("shutdown")
    def _shutdown() -> None:
        manager.shutdown()

    return app


@dataclass
class ServiceHandle:
    server: uvicorn.Server
    thread: threading.Thread

    def shutdown(self) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)


class BindError(Exception):
    pass


def serve(addr: str, settings: ServiceSettings) -> ServiceHandle:
    """Start the service on ``host:port`` in a background thread."""
    host, _, port_text = addr.rpartition(":")
    app = create_app(settings)
    config = uvicorn.Config(app, host=host or "127.0.0.1", port=int(port_text), log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    import time

    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline or not thread.is_alive():
            raise BindError(f"service failed to bind {addr}")
        time.sleep(0.02)
    return ServiceHandle(server=server, thread=thread)
