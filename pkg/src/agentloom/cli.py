"""Command-line interface: run / eval / practice / gen / serve."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .autogen import DialogueSession, generate_workflow, run_meta_agent, seed_builtin_library
from .config import EnvSpec, emit_config, parse_config
from .environment import create_env
from .evalharness import evaluate, load_dataset, persist_report
from .experience import ExperienceBank, load_bank
from .gateway import ChatResponse, ReplayTransport, ScriptedTransport, Transport, default_model, transport_from_env
from .practice import practice_run
from .runtime import RuntimeDeps, run_episode
from .service.app import default_settings, serve


def _build_transport(transport_spec: str | None) -> Transport:
    """http (env vars), replay:<cassette>, or scripted:<responses.json>."""
    if transport_spec is None or transport_spec == "http":
        return transport_from_env()
    kind, _, arg = transport_spec.partition(":")
    if kind == "replay":
        return ReplayTransport(arg)
    if kind == "scripted":
        responses = [
            ChatResponse.from_dict(d)
            for d in json.loads(Path(arg).read_text(encoding="utf-8"))
        ]
        return ScriptedTransport(responses)
    raise click.BadParameter(f"unknown transport {transport_spec!r}")


@click.group()
def main() -> None:
    """Declarative agent runtime and rollout collection tools."""


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("-t", "--task", required=True)
@click.option("--out", type=click.Path(), default=None, help="write trajectory JSON here")
@click.option("--transport", "transport_spec", default=None)
def run(config_path: str, task: str, out: str | None, transport_spec: str | None) -> None:
    """Run one episode and print the final answer."""
    cfg = parse_config(Path(config_path).read_text(encoding="utf-8"))
    deps = RuntimeDeps(transport=_build_transport(transport_spec), model=default_model())
    trajectory = run_episode(cfg, task, deps)
    if out:
        Path(out).write_text(
            json.dumps(trajectory.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
    click.echo(trajectory.final_answer or f"<{trajectory.termination}>")
    if trajectory.termination != "answered":
        sys.exit(1)


@main.command("eval")
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("-d", "--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--metric", type=click.Choice(["pass_at_1", "mean_at_k"]), default="pass_at_1")
@click.option("-k", type=int, default=1)
@click.option("--concurrency", type=int, default=8)
@click.option("--out", type=click.Path(), default=None)
@click.option("--results-dir", type=click.Path(), default="results")
@click.option("--transport", "transport_spec", default=None)
def eval_cmd(
    config_path: str,
    dataset_path: str,
    metric: str,
    k: int,
    concurrency: int,
    out: str | None,
    results_dir: str,
    transport_spec: str | None,
) -> None:
    """Run a benchmark and print the aggregate metric."""
    cfg = parse_config(Path(config_path).read_text(encoding="utf-8"))
    tasks = load_dataset(dataset_path)
    deps = RuntimeDeps(transport=_build_transport(transport_spec), model=default_model())
    report = evaluate(cfg, tasks, metric, k, concurrency, deps)
    persist_report(report, results_dir, Path(dataset_path).stem)
    if out:
        Path(out).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
    click.echo(f"{metric} = {report.aggregate:.4f} over {len(report.per_task)} tasks")


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("-d", "--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--epochs", type=int, default=3)
@click.option("--group-size", "group_size", type=int, default=5)
@click.option("--temp", type=float, default=0.7)
@click.option("--run-id", default="practice")
@click.option("--out-dir", type=click.Path(), default=".")
@click.option("--transport", "transport_spec", default=None)
def practice(
    config_path: str,
    dataset_path: str,
    epochs: int,
    group_size: int,
    temp: float,
    run_id: str,
    out_dir: str,
    transport_spec: str | None,
) -> None:
    """Run the experience practice loop and persist bank snapshots."""
    cfg = parse_config(Path(config_path).read_text(encoding="utf-8"))
    tasks = load_dataset(dataset_path)
    deps = RuntimeDeps(transport=_build_transport(transport_spec), model=default_model())
    bank, report = practice_run(
        cfg, tasks, epochs, group_size, temp, deps, run_id=run_id, persist_root=out_dir
    )
    for epoch in report.epochs:
        click.echo(
            f"epoch {epoch.epoch}: mean_reward={epoch.mean_reward:.3f} "
            f"mean_tool_calls={epoch.mean_tool_calls:.2f}"
        )
    click.echo(f"bank entries: {len(bank)} (snapshots under {out_dir}/banks/{run_id}/)")


@main.group()
def gen() -> None:
    """Automated agent generation."""


@gen.command()
@click.argument("description")
@click.option("--library", "library_dir", type=click.Path(), default="library")
@click.option("--out", type=click.Path(), default=None)
@click.option("--transport", "transport_spec", default=None)
def workflow(description: str, library_dir: str, out: str | None, transport_spec: str | None) -> None:
    """Generate an agent config through the four-stage pipeline."""
    lib = seed_builtin_library(library_dir)
    sandbox = create_env(EnvSpec(name="sandbox"))
    try:
        cfg, report = generate_workflow(
            description, lib, _build_transport(transport_spec), sandbox, model=default_model()
        )
    finally:
        sandbox.close()
    yaml_text = emit_config(cfg)
    if out:
        Path(out).write_text(yaml_text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(yaml_text, nl=False)


@gen.command()
@click.option("--library", "library_dir", type=click.Path(), default="library")
@click.option("--out", type=click.Path(), default=None)
@click.option("--transport", "transport_spec", default=None)
def meta(library_dir: str, out: str | None, transport_spec: str | None) -> None:
    """Interactive meta-agent session; questions arrive on stdin."""
    lib = seed_builtin_library(library_dir)
    sandbox = create_env(EnvSpec(name="sandbox"))
    session = DialogueSession()

    def on_event(event: dict) -> None:
        if event["type"] == "ask_user":
            answer = click.prompt(event["question"])
            session.provide_answer(answer)
        elif event["type"] == "assistant_delta":
            click.echo(f"[architect] {event['content']}")

    session.on_event = on_event
    try:
        cfg, report = run_meta_agent(
            session, lib, _build_transport(transport_spec), sandbox, model=default_model()
        )
    finally:
        sandbox.close()
    yaml_text = emit_config(cfg)
    if out:
        Path(out).write_text(yaml_text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(yaml_text, nl=False)


@main.command()
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
@click.option("--pool", type=int, default=64)
@click.option("--data-dir", type=click.Path(), default="service-data")
def serve_cmd(port: int, host: str, pool: int, data_dir: str) -> None:
    """Start the rollout-collection REST service (blocks until Ctrl-C)."""
    settings = default_settings(data_dir, pool_size=pool)
    handle = serve(f"{host}:{port}", settings)
    click.echo(f"serving on http://{host}:{port} (pool={pool}, data={data_dir})")
    try:
        handle.thread.join()
    except KeyboardInterrupt:
        handle.shutdown()


main.add_command(serve_cmd, name="serve")


if __name__ == "__main__":
    main()
