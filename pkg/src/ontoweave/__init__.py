"""Contract-driven ontology construction and verifiable KG population."""

from .contracts import (
    Contract,
    ContractOutcome,
    CompositionGap,
    Predicate,
    PreconditionFailed,
    RetriesExhausted,
    Violation,
    compose,
    run_contract,
)
from .generator import (
    BackendUnavailable,
    CallbackBackend,
    DuplicateKey,
    FixtureStore,
    GeneratorRequest,
    GeneratorResponse,
    GeneratorSettings,
    HttpBackend,
    MalformedResponse,
    PromptKind,
    ScriptedBackend,
    record_fixture,
)
from .ontology import (
    ConceptDelta,
    DataProperty,
    ObjectProperty,
    Ontology,
    OntologyClass,
    UnknownClass,
    build_ontology,
    find_violations,
    is_subclass_of,
    merge_delta,
)
from .kg import (
    DocumentChunk,
    KnowledgeGraph,
    Triplet,
    UnassignedEntity,
    apply_class_assignment,
    build_kg,
    chunk_documents,
    try_auto_swap,
    validate_triplets,
)
from .export_eval import (
    CypherScript,
    EmptyRun,
    GrammarError,
    MultiHopCheck,
    QaItem,
    evaluate_qa,
    export_cypher,
    fuzzy_match,
    parse_cypher_export,
    run_multihop_check,
    score_run,
)
from .pipeline import ConfigDrift, ConfigError, PipelineConfig, RunManifest, resume, run_pipeline
from .scoping import (
    CompetencyQuestion,
    Persona,
    PersonaGroup,
    ScopeDocument,
    StakeholderGroup,
    generate_cqs,
    generate_personas,
    generate_scope,
    generate_stakeholders,
    partition_personas,
)

__version__ = "0.1.0"
