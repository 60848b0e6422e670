"""Command-line entry points for the pipeline.

Subcommands mirror the separable phases: ``run-all``,
``generate-ontology``, ``generate-kg``, ``export-cypher``, ``evaluate``,
and ``resume``.  Exit codes: 0 success, 2 configuration error, 3 phase
failure.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click

from . import export_eval, kg as kgmod, scoping
from .pipeline import (
    ConfigDrift,
    ConfigError,
    PipelineConfig,
    RunManifest,
    failed_phases,
    resume as resume_run,
    run_pipeline,
)

EXIT_CONFIG = 2
EXIT_PHASE = 3


def _config_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     default=None, help="JSON or TOML config file."),
        click.option("--domain", default=None, help="Domain description text."),
        click.option("--document", "documents", multiple=True,
                     type=click.Path(exists=True),
                     help="Input document (repeatable)."),
        click.option("--qa", "qa_dataset_path", type=click.Path(exists=True),
                     default=None, help="QA dataset (JSON lines)."),
        click.option("--group-size", "l", type=int, default=None,
                     help="Personas per heterogeneous group."),
        click.option("--merge-batch", "k", type=int, default=None,
                     help="Scope documents merged per call."),
        click.option("--cq-batch-size", type=int, default=None),
        click.option("--chunk-size", "chunk_target_size", type=int, default=None),
        click.option("--chunk-overlap", type=int, default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--max-retries", type=int, default=None),
        click.option("--fuzzy-threshold", type=float, default=None),
        click.option("--seed", type=int, default=None),
        click.option("--backend", type=click.Choice(["scripted", "live"]),
                     default=None),
        click.option("--fixture-dir", type=click.Path(), default=None,
                     help="Fixture archive for the scripted backend."),
        click.option("--base-url", default=None, help="Live backend base URL."),
        click.option("--model", default=None, help="Live backend model name."),
        click.option("--api-key-env", default=None,
                     help="Environment variable holding the API key."),
        click.option("--temperature", type=float, default=None),
        click.option("--output-dir", type=click.Path(), default=None),
        click.option("--run-dir", type=click.Path(), default=None,
                     help="Explicit run directory (default: timestamped)."),
        click.option("-v", "--verbose", is_flag=True, default=False),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


_FLAG_FIELDS = (
    "domain_description", "input_document_paths", "qa_dataset_path", "l", "k",
    "cq_batch_size", "chunk_target_size", "chunk_overlap", "epochs",
    "max_retries", "fuzzy_threshold", "seed", "backend", "fixture_dir",
    "base_url", "model", "api_key_env", "temperature", "output_dir",
)


def _build_config(kwargs) -> PipelineConfig:
    logging.basicConfig(
        level=logging.DEBUG if kwargs.get("verbose") else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    if kwargs.get("config_path"):
        config = PipelineConfig.from_file(kwargs["config_path"])
    else:
        config = PipelineConfig()
    overrides = {}
    if kwargs.get("domain") is not None:
        overrides["domain_description"] = kwargs["domain"]
    if kwargs.get("documents"):
        overrides["input_document_paths"] = tuple(kwargs["documents"])
    for field_name in _FLAG_FIELDS:
        if field_name in ("domain_description", "input_document_paths"):
            continue
        if kwargs.get(field_name) is not None:
            overrides[field_name] = kwargs[field_name]
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def _finish(manifest: RunManifest) -> None:
    for record in manifest.phases:
        line = f"{record['name']:<10} {record['status']}"
        if "wall_seconds" in record:
            line += f" ({record['wall_seconds']}s)"
        if record.get("reason"):
            line += f" - {record['reason']}"
        if record.get("error"):
            line += f" - {record['error']}"
        click.echo(line)
    click.echo(f"manifest: {Path(manifest.run_dir) / 'manifest.json'}")
    sys.exit(EXIT_PHASE if failed_phases(manifest) else 0)


def _run(kwargs, stop_after: str | None) -> None:
    try:
        config = _build_config(kwargs)
        manifest = run_pipeline(config, run_dir=kwargs.get("run_dir"),
                                stop_after=stop_after)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    _finish(manifest)


@click.group()
def main() -> None:
    """Contract-driven ontology construction and KG population."""


@main.command("run-all")
@_config_options
def run_all(**kwargs) -> None:
    """Run every phase: scoping, ontology, KG, export, evaluation."""
    _run(kwargs, stop_after=None)


@main.command("generate-ontology")
@_config_options
def generate_ontology(**kwargs) -> None:
    """Run scoping and ontology construction, then stop."""
    _run(kwargs, stop_after="ontology")


@main.command("generate-kg")
@_config_options
def generate_kg(**kwargs) -> None:
    """Run through KG population and Cypher export (no evaluation)."""
    _run(kwargs, stop_after="export")


@main.command("export-cypher")
@click.option("--kg", "kg_path", type=click.Path(exists=True), required=True,
              help="kg.json produced by the kg phase.")
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Destination .cypher file.")
def export_cypher_cmd(kg_path: str, out_path: str) -> None:
    """Export a stored knowledge graph to a Cypher script."""
    graph = kgmod.kg_from_dict(scoping.load_json(kg_path))
    script = export_eval.export_cypher(graph)
    Path(out_path).write_text(script.text, encoding="utf-8")
    click.echo(f"{script.node_count} nodes, {script.rel_count} relationships "
               f"-> {out_path}")


@main.command("evaluate")
@click.option("--kg", "kg_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Directory for qa_report.json / qa_report.txt.")
@_config_options
def evaluate_cmd(kg_path: str, out_dir: str, **kwargs) -> None:
    """Answer a QA dataset from a stored knowledge graph and score it."""
    try:
        config = _build_config(kwargs)
        if not config.qa_dataset_path:
            raise ConfigError("evaluate needs --qa or qa_dataset_path in the config")
        config.validate()
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    from .pipeline import make_backend
    backend = make_backend(config)
    graph = kgmod.kg_from_dict(scoping.load_json(kg_path))
    items = export_eval.load_qa_items(config.qa_dataset_path)
    contract = export_eval.default_qa_contract(config.max_retries)
    evaluated = [export_eval.evaluate_qa(graph, item, backend, contract,
                                         threshold=config.fuzzy_threshold,
                                         seed=config.seed)
                 for item in items]
    report = export_eval.score_run(evaluated, seed=config.seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "qa_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    (out / "qa_report.txt").write_text(report.to_text(), encoding="utf-8")
    click.echo(f"accuracy {report.accuracy:.4f} "
               f"({report.correct}/{report.total}, "
               f"{report.unanswered} unanswered)")


@main.command("resume")
@click.argument("manifest_path", type=click.Path(exists=True))
@_config_options
def resume_cmd(manifest_path: str, **kwargs) -> None:
    """Continue an interrupted run from its manifest."""
    try:
        config = _build_config(kwargs)
        manifest = resume_run(manifest_path, config)
    except (ConfigError, ConfigDrift) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    _finish(manifest)


if __name__ == "__main__":
    main()
