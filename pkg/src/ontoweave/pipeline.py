"""End-to-end orchestration: personas -> scope -> CQs -> ontology -> KG
-> export/eval, with persisted artifacts and resumability.

Every phase reads its inputs from the previous phase's files and writes
its own before the next phase starts, so an interrupted run resumes
from the manifest without recomputation.  All randomness flows from the
configured seed; with the scripted backend a rerun is byte-identical.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import export_eval, kg as kgmod, ontology as ontmod, scoping
from .contracts import Contract, Predicate, compose
from .generator import (
    FixtureStore,
    GeneratorSettings,
    HttpBackend,
    ScriptedBackend,
    fingerprint,
)

log = logging.getLogger(__name__)

PHASES = ("scoping", "ontology", "kg", "export", "evaluate")


class ConfigError(Exception):
    """Invalid configuration; the pipeline never starts."""


class ConfigDrift(Exception):
    """The resume config does not match the manifest's snapshot."""


@dataclass(frozen=True)
class PipelineConfig:
    domain_description: str = ""
    input_document_paths: tuple[str, ...] = ()
    qa_dataset_path: str | None = None
    l: int = scoping.DEFAULT_GROUP_SIZE            # personas per group
    k: int = scoping.DEFAULT_MERGE_BATCH           # scope merge batch size
    cq_batch_size: int = 10
    persona_base_count: int = scoping.DEFAULT_PERSONA_BASE
    chunk_target_size: int = kgmod.DEFAULT_CHUNK_SIZE
    chunk_overlap: int = kgmod.DEFAULT_CHUNK_OVERLAP
    epochs: int = kgmod.DEFAULT_EPOCHS
    max_retries: int = 5
    fuzzy_threshold: float = export_eval.DEFAULT_FUZZY_THRESHOLD
    max_context_triplets: int = kgmod.DEFAULT_CONTEXT_TRIPLETS
    incremental_violations: bool = False
    seed: int = 0
    backend: str = "scripted"                      # "scripted" | "live"
    fixture_dir: str | None = None
    base_url: str | None = None
    model: str | None = None
    api_key_env: str = "GENERATOR_API_KEY"
    temperature: float | None = None
    graphdb_uri: str | None = None                 # optional integration checks
    output_dir: str = "runs"

    def validate(self) -> None:
        if not self.domain_description.strip():
            raise ConfigError("domain_description must be non-empty")
        if self.l < 1:
            raise ConfigError("l (persona group size) must be >= 1")
        if self.k < 2:
            raise ConfigError("k (scope merge batch size) must be >= 2")
        if self.cq_batch_size < 1:
            raise ConfigError("cq_batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")
        if not 0 < self.fuzzy_threshold <= 1:
            raise ConfigError("fuzzy_threshold must be in (0, 1]")
        if not self.chunk_target_size > self.chunk_overlap >= 0:
            raise ConfigError("require chunk_target_size > chunk_overlap >= 0")
        if self.backend not in ("scripted", "live"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "scripted" and not self.fixture_dir:
            raise ConfigError("scripted backend needs fixture_dir")
        if self.backend == "live" and not (self.base_url and self.model):
            raise ConfigError("live backend needs base_url and model")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["input_document_paths"] = list(self.input_document_paths)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "input_document_paths" in data:
            data = dict(data, input_document_paths=tuple(data["input_document_paths"]))
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if path.suffix == ".toml":
            import tomllib
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
        config = cls.from_dict(data)
        base = path.parent
        resolve = lambda p: str((base / p).resolve()) if not Path(p).is_absolute() else p
        return replace(
            config,
            input_document_paths=tuple(resolve(p) for p in config.input_document_paths),
            qa_dataset_path=resolve(config.qa_dataset_path) if config.qa_dataset_path else None,
            fixture_dir=resolve(config.fixture_dir) if config.fixture_dir else None,
            output_dir=resolve(config.output_dir),
        )

    def config_hash(self) -> str:
        return fingerprint(self.to_dict())


def make_backend(config: PipelineConfig):
    if config.backend == "scripted":
        return ScriptedBackend(FixtureStore(config.fixture_dir))
    return HttpBackend(GeneratorSettings(
        base_url=config.base_url,
        model=config.model,
        api_key_env=config.api_key_env,
        temperature=config.temperature,
    ))


# ---------------------------------------------------------------------------
# Manifest

@dataclass
class RunManifest:
    config: dict
    run_dir: str
    phases: list[dict] = field(default_factory=list)
    contract_lineage: list[list[str]] = field(default_factory=list)

    def phase(self, name: str) -> dict:
        for record in self.phases:
            if record["name"] == name:
                return record
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "run_dir": self.run_dir,
            "contract_lineage": self.contract_lineage,
            "phases": self.phases,
        }

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else Path(self.run_dir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(config=data["config"], run_dir=data["run_dir"],
                   phases=data["phases"],
                   contract_lineage=data.get("contract_lineage", []))


def phase_contract_chain() -> Contract:
    """Declared pipeline lineage: each phase's guarantee feeds the next."""
    always = lambda *args: True
    scoping_contract = Contract(
        "scoping", postconditions=(Predicate("cqs_available", always),))
    ontology_contract = Contract(
        "ontology",
        preconditions=(Predicate("cqs_available", always),),
        postconditions=(Predicate("ontology_valid", always),))
    kg_contract = Contract(
        "kg",
        preconditions=(Predicate("ontology_valid", always),),
        postconditions=(Predicate("kg_valid", always),))
    return compose(compose(scoping_contract, ontology_contract), kg_contract)


def _outcome_summary(step: str, outcome) -> dict:
    return {
        "step": step,
        "status": outcome.status,
        "attempts": outcome.attempts,
        "violations_per_attempt": [len(vs) for vs in outcome.violations_history],
    }


# ---------------------------------------------------------------------------
# Phases

def _write(run_dir: Path, rel: str, text: str) -> str:
    path = run_dir / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return rel


def _write_json(run_dir: Path, rel: str, data) -> str:
    return _write(run_dir, rel, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _phase_scoping(config: PipelineConfig, backend, run_dir: Path):
    outcomes = []
    steps: list = []
    stakeholders = scoping.generate_stakeholders(
        config.domain_description, backend, max_retries=config.max_retries,
        seed=config.seed, outcomes=steps)
    personas = scoping.generate_personas(
        stakeholders, backend, domain=config.domain_description,
        base_count=config.persona_base_count, max_retries=config.max_retries,
        seed=config.seed, outcomes=steps)
    groups = scoping.partition_personas(personas, config.l, config.seed)
    scope = scoping.generate_scope(
        config.domain_description, groups, config.k, backend,
        max_retries=config.max_retries, seed=config.seed, outcomes=steps)
    cqs = scoping.generate_cqs(
        config.domain_description, scope, groups, backend,
        max_retries=config.max_retries, seed=config.seed, outcomes=steps)

    artifacts = [
        _write_json(run_dir, "scoping/stakeholders.json",
                    [{"name": g.name, "priority": g.priority, "rationale": g.rationale}
                     for g in stakeholders]),
        _write_json(run_dir, "scoping/personas.json",
                    [{"name": p.name, "group": p.group, "profile": p.profile}
                     for p in personas]),
        _write_json(run_dir, "scoping/persona_groups.json",
                    [{"index": g.index,
                      "members": [{"name": p.name, "group": p.group,
                                   "profile": p.profile} for p in g.members]}
                     for g in groups]),
        _write_json(run_dir, "scoping/scope.json", scoping.scope_to_dict(scope)),
        _write_json(run_dir, "scoping/scope_tree.json",
                    {k: list(v) for k, v in scope.merge_tree().items()}),
        _write_json(run_dir, "scoping/cqs.json", scoping.cqs_to_list(cqs)),
    ]
    outcomes = [_outcome_summary(f"scoping[{i}]", o) for i, o in enumerate(steps)]
    return artifacts, outcomes


def _phase_ontology(config: PipelineConfig, backend, run_dir: Path):
    cqs = scoping.cqs_from_list(scoping.load_json(run_dir / "scoping/cqs.json"))
    batches = scoping.batch_cqs(cqs, config.cq_batch_size)
    result = ontmod.build_ontology(
        batches, backend,
        ontmod.default_ontology_contract(config.max_retries),
        seed=config.seed,
        incremental_violations=config.incremental_violations)
    artifacts = [
        _write_json(run_dir, "ontology/ontology.json",
                    ontmod.ontology_to_dict(result.ontology)),
        _write(run_dir, "ontology/ontology.txt",
               ontmod.to_outline(result.ontology) + "\n"),
    ]
    outcomes = [_outcome_summary(f"cq_batch[{i}]", o)
                for i, o in enumerate(result.outcomes)]
    if result.skipped_batches:
        log.warning("skipped ontology batches: %s", list(result.skipped_batches))
    return artifacts, outcomes


def _phase_kg(config: PipelineConfig, backend, run_dir: Path):
    onto = ontmod.ontology_from_dict(
        scoping.load_json(run_dir / "ontology/ontology.json"))
    docs = [(Path(p).stem, Path(p).read_text(encoding="utf-8"))
            for p in config.input_document_paths]
    chunks = kgmod.chunk_documents(docs, config.chunk_target_size,
                                   config.chunk_overlap)
    result = kgmod.build_kg(
        chunks, onto, backend,
        kgmod.default_kg_contract(config.max_retries),
        epochs=config.epochs, seed=config.seed,
        max_context_triplets=config.max_context_triplets,
        incremental_violations=config.incremental_violations)
    artifacts = [
        _write_json(run_dir, "kg/kg.json", kgmod.kg_to_dict(result.kg)),
    ]
    outcomes = [_outcome_summary(f"chunk[{i}]", o)
                for i, o in enumerate(result.outcomes)]
    if result.skipped_chunks:
        log.warning("skipped chunks: %s", list(result.skipped_chunks))
    return artifacts, outcomes


def _phase_export(config: PipelineConfig, backend, run_dir: Path):
    graph = kgmod.kg_from_dict(scoping.load_json(run_dir / "kg/kg.json"))
    script = export_eval.export_cypher(graph)
    artifacts = [_write(run_dir, "export/kg.cypher", script.text)]
    return artifacts, []


def _phase_evaluate(config: PipelineConfig, backend, run_dir: Path):
    graph = kgmod.kg_from_dict(scoping.load_json(run_dir / "kg/kg.json"))
    items = export_eval.load_qa_items(config.qa_dataset_path)
    contract = export_eval.default_qa_contract(config.max_retries)
    evaluated = [
        export_eval.evaluate_qa(graph, item, backend, contract,
                                threshold=config.fuzzy_threshold,
                                seed=config.seed)
        for item in items
    ]
    report = export_eval.score_run(evaluated, seed=config.seed)
    artifacts = [
        _write_json(run_dir, "evaluate/qa_report.json", report.to_dict()),
        _write(run_dir, "evaluate/qa_report.txt", report.to_text()),
    ]
    return artifacts, []


_PHASE_FUNCS = {
    "scoping": _phase_scoping,
    "ontology": _phase_ontology,
    "kg": _phase_kg,
    "export": _phase_export,
    "evaluate": _phase_evaluate,
}


def _skip_reason(config: PipelineConfig, phase: str) -> str | None:
    if phase in ("kg", "export") and not config.input_document_paths:
        return "no input documents; pipeline ends at the ontology"
    if phase == "evaluate":
        if not config.input_document_paths:
            return "no input documents; pipeline ends at the ontology"
        if not config.qa_dataset_path:
            return "no QA dataset configured"
    return None


# ---------------------------------------------------------------------------
# Orchestration

def _execute_phases(manifest: RunManifest, config: PipelineConfig, backend,
                    run_dir: Path) -> RunManifest:
    for record in manifest.phases:
        if record["status"] in ("complete", "skipped"):
            continue
        name = record["name"]
        reason = _skip_reason(config, name)
        if reason is not None:
            record.update(status="skipped", reason=reason)
            manifest.save()
            continue
        log.info("phase %s: running", name)
        started = time.perf_counter()
        try:
            artifacts, outcomes = _PHASE_FUNCS[name](config, backend, run_dir)
        except Exception as exc:  # recorded, not raised: the manifest is the report
            record.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                          wall_seconds=round(time.perf_counter() - started, 3))
            manifest.save()
            log.error("phase %s failed: %s", name, exc)
            break
        record.update(status="complete", artifacts=artifacts, outcomes=outcomes,
                      wall_seconds=round(time.perf_counter() - started, 3))
        record.pop("error", None)
        manifest.save()
    return manifest


def create_run_dir(config: PipelineConfig) -> Path:
    base = Path(config.output_dir)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    candidate = base / f"run-{stamp}-{config.config_hash()[:12]}"
    counter = 1
    while candidate.exists():
        candidate = base / f"run-{stamp}-{config.config_hash()[:12]}-{counter}"
        counter += 1
    candidate.mkdir(parents=True)
    return candidate


def run_pipeline(config: PipelineConfig, run_dir: str | Path | None = None,
                 backend=None, stop_after: str | None = None) -> RunManifest:
    """Run all phases in order, persisting each phase's artifacts before
    the next begins.  Failures are recorded in the manifest (subsequent
    phases stay pending); they do not raise.  ``stop_after`` marks the
    phases past the named one as skipped (not requested)."""
    config.validate()
    if stop_after is not None and stop_after not in PHASES:
        raise ConfigError(f"unknown phase {stop_after!r}")
    run_dir = Path(run_dir) if run_dir else create_run_dir(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    backend = backend or make_backend(config)
    phases: list[dict] = []
    past_ceiling = False
    for name in PHASES:
        if past_ceiling:
            phases.append({"name": name, "status": "skipped",
                           "reason": "not requested"})
        else:
            phases.append({"name": name, "status": "pending"})
        if stop_after is not None and name == stop_after:
            past_ceiling = True
    manifest = RunManifest(
        config=config.to_dict(),
        run_dir=str(run_dir),
        phases=phases,
        contract_lineage=[list(edge) for edge in phase_contract_chain().lineage],
    )
    manifest.save()
    return _execute_phases(manifest, config, backend, run_dir)


def resume(manifest_path: str | Path, config: PipelineConfig,
           backend=None) -> RunManifest:
    """Continue an interrupted run; completed phases are not re-executed.

    The provided config must match the manifest's snapshot exactly,
    otherwise the artifacts on disk cannot be trusted (ConfigDrift).
    """
    manifest = RunManifest.load(manifest_path)
    config.validate()
    if manifest.config != config.to_dict():
        current = config.to_dict()
        drifted = sorted(
            key for key in set(manifest.config) | set(current)
            if manifest.config.get(key) != current.get(key)
        )
        raise ConfigDrift(f"config does not match the manifest snapshot; "
                          f"differing keys: {drifted}")
    if all(r["status"] in ("complete", "skipped") for r in manifest.phases):
        return manifest
    backend = backend or make_backend(config)
    return _execute_phases(manifest, config, backend, Path(manifest.run_dir))


def failed_phases(manifest: RunManifest) -> list[str]:
    return [r["name"] for r in manifest.phases if r["status"] == "failed"]
