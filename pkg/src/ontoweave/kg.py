"""Triplet extraction, validation against the ontology, and repair.

The knowledge graph accumulates (subject, predicate, object) facts
chunk by chunk over multiple epochs.  Only newly generated triplets are
validated, against the ontology plus everything accepted so far; the
deterministic subject/object swap short-circuits the repair loop for
the one mistake it can fix without re-prompting.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

from .contracts import (
    DEFAULT_MAX_RETRIES,
    Contract,
    ContractOutcome,
    PreconditionFailed,
    RetriesExhausted,
    Violation,
)
from .generator import PromptKind, fingerprint, run_generation_step
from .ontology import Ontology, UnknownClass, find_violations, is_subclass_of, to_outline

log = logging.getLogger(__name__)

ISA = "isA"
ENTITY_NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

DEFAULT_CHUNK_SIZE = 4000
DEFAULT_CHUNK_OVERLAP = 200
DEFAULT_EPOCHS = 2
DEFAULT_CONTEXT_TRIPLETS = 200


@dataclass(frozen=True)
class Triplet:
    subject: str
    predicate: str
    object: str

    def render(self) -> str:
        return f"({self.subject}, {self.predicate}, {self.object})"


@dataclass(frozen=True)
class DocumentChunk:
    id: str
    text: str
    char_span: tuple[int, int]  # non-overlapping core region in the source


@dataclass(frozen=True)
class KnowledgeGraph:
    """Accumulated facts typed against an ontology.

    ``triplets`` holds the non-isA facts; class assignments live in
    ``entity_classes`` (an entity's current, narrowest class — also the
    node label on export).  ``predicate_kinds`` remembers whether each
    predicate is a data or object property so the graph serializes and
    exports without the ontology at hand.
    """

    ontology_ref: str = ""
    triplets: tuple[Triplet, ...] = ()
    entity_classes: dict[str, str] = field(default_factory=dict)
    predicate_kinds: dict[str, str] = field(default_factory=dict)

    def triplet_set(self) -> set[Triplet]:
        return set(self.triplets)

    def size(self) -> int:
        return len(self.triplets) + len(self.entity_classes)


class UnassignedEntity(Exception):
    def __init__(self, name: str):
        super().__init__(f"entity '{name}' has no class assignment")
        self.name = name


# ---------------------------------------------------------------------------
# Chunking

_SENTENCE_BREAK = re.compile(r"[.!?](?=\s)|\n")


def _cut_point(text: str, start: int, target: int) -> int:
    """End offset for the chunk starting at ``start``: prefer a sentence
    break inside +/-10% of the target size, else cut at the target."""
    hard_end = min(len(text), start + target)
    if hard_end == len(text):
        return hard_end
    lo = start + int(target * 0.9)
    hi = min(len(text), start + int(target * 1.1))
    best = None
    for match in _SENTENCE_BREAK.finditer(text, lo, hi):
        best = match.end()
    return best if best is not None else hard_end


def chunk_documents(docs: Sequence[tuple[str, str]], target_size: int = DEFAULT_CHUNK_SIZE,
                    overlap: int = DEFAULT_CHUNK_OVERLAP) -> list[DocumentChunk]:
    """Split documents into chunks of roughly ``target_size`` characters.

    ``char_span`` regions partition each document exactly; the chunk
    text additionally carries up to ``overlap`` characters of context
    from before its span so entities straddling a boundary stay intact.
    """
    if not target_size > overlap >= 0:
        raise PreconditionFailed("chunking_bounds",
                                 "require target_size > overlap >= 0")
    chunks: list[DocumentChunk] = []
    for doc_id, text in docs:
        if not text:
            continue
        start = 0
        while start < len(text):
            end = _cut_point(text, start, target_size)
            if end <= start:  # guarantee progress on degenerate input
                end = min(len(text), start + target_size)
            lead = max(0, start - overlap)
            chunks.append(DocumentChunk(f"{doc_id}@{start}", text[lead:end],
                                        (start, end)))
            start = end
    return chunks


# ---------------------------------------------------------------------------
# Validation

def _safe_subclass(o: Ontology, a: str | None, b: str) -> bool:
    if a is None or a not in o.class_names() or b not in o.class_names():
        return False
    return is_subclass_of(o, a, b)


def validate_triplets(new: Sequence[Triplet], kg: KnowledgeGraph,
                      o: Ontology) -> list[Violation]:
    """Complete violation set for a batch of newly generated triplets.

    Only the new triplets are checked, but against the union of the
    accumulated graph and the batch (class map, functional counts).
    Re-asserting a triplet the graph already holds is an idempotent
    no-op, not a violation; duplicates *within* the batch are flagged.
    """
    out: list[Violation] = []
    seen: set[tuple[str, str]] = set()

    def add(code: str, subject: str, message: str, repairable: bool = False) -> None:
        if (code, subject) not in seen:
            seen.add((code, subject))
            out.append(Violation(code, subject, message, repairable))

    classes = o.class_names()
    data_props = o.data_property_map()
    object_props = o.object_property_map()

    counts = Counter((t.subject, t.predicate, t.object) for t in new)
    for (s, p, obj), count in counts.items():
        if count >= 2:
            add("duplicate_triplet", f"({s}, {p}, {obj})",
                f"triplet ({s}, {p}, {obj}) appears {count} times in the batch")

    for t in new:
        if not ENTITY_NAME_RE.match(t.subject):
            add("entity_naming", t.subject,
                f"entity '{t.subject}' is not lowercase snake_case")
        if t.predicate != ISA and t.predicate in object_props \
                and not ENTITY_NAME_RE.match(t.object):
            add("entity_naming", t.object,
                f"entity '{t.object}' is not lowercase snake_case")

    # Simulate class assignments in batch order; narrowing only.
    working = dict(kg.entity_classes)
    for t in new:
        if t.predicate != ISA:
            continue
        if t.object not in classes:
            add("unknown_class_assignment", t.render(),
                f"isA assigns '{t.subject}' to unknown class '{t.object}'")
            continue
        current = working.get(t.subject)
        if current is None or current == t.object:
            working[t.subject] = t.object
        elif _safe_subclass(o, t.object, current):
            working[t.subject] = t.object  # narrowing is permitted
        else:
            add("illegal_class_reassignment", t.render(),
                f"entity '{t.subject}' is a '{current}'; '{t.object}' is not a "
                f"subclass of it (only narrowing is allowed)")

    for t in new:
        if t.predicate == ISA:
            continue
        if t.predicate not in data_props and t.predicate not in object_props:
            add("unknown_predicate", t.predicate,
                f"predicate '{t.predicate}' is not defined in the ontology")
            continue
        subject_class = working.get(t.subject)
        if subject_class is None:
            add("missing_class_assignment", t.subject,
                f"entity '{t.subject}' has no class assignment")
        if t.predicate in data_props:
            prop = data_props[t.predicate]
            if subject_class is not None and not _safe_subclass(o, subject_class, prop.domain):
                add("domain_mismatch", t.render(),
                    f"subject of '{t.predicate}' must be a '{prop.domain}', "
                    f"got '{subject_class}'")
        else:
            prop = object_props[t.predicate]
            object_class = working.get(t.object)
            if object_class is None:
                add("missing_class_assignment", t.object,
                    f"entity '{t.object}' has no class assignment")
            if subject_class is not None and not _safe_subclass(o, subject_class, prop.domain):
                add("domain_mismatch", t.render(),
                    f"subject of '{t.predicate}' must be a '{prop.domain}', "
                    f"got '{subject_class}'", repairable=True)
            if object_class is not None and not _safe_subclass(o, object_class, prop.range):
                add("range_mismatch", t.render(),
                    f"object of '{t.predicate}' must be a '{prop.range}', "
                    f"got '{object_class}'", repairable=True)

    # Functional properties: at most one value per subject across the
    # union of accepted and new triplets.
    functional = {name for name, p in data_props.items() if p.functional}
    functional |= {name for name, p in object_props.items() if p.functional}
    if functional:
        values: dict[tuple[str, str], set[str]] = {}
        new_pairs: set[tuple[str, str]] = set()
        for t in kg.triplets:
            if t.predicate in functional:
                values.setdefault((t.subject, t.predicate), set()).add(t.object)
        for t in new:
            if t.predicate in functional:
                values.setdefault((t.subject, t.predicate), set()).add(t.object)
                new_pairs.add((t.subject, t.predicate))
        for (s, p), objs in values.items():
            if len(objs) >= 2 and (s, p) in new_pairs:
                add("functional_violation", f"({s}, {p})",
                    f"functional property '{p}' has {len(objs)} values for '{s}'")
    return out


# ---------------------------------------------------------------------------
# Class assignment and deterministic repair

def apply_class_assignment(kg: KnowledgeGraph, entity: str, cls: str,
                           o: Ontology) -> KnowledgeGraph:
    """Assign or narrow an entity's class; widening and lateral moves
    are rejected (the graph is returned unchanged)."""
    if cls not in o.class_names():
        raise UnknownClass(cls)
    current = kg.entity_classes.get(entity)
    if current is None or current == cls or is_subclass_of(o, cls, current):
        updated = dict(kg.entity_classes)
        updated[entity] = cls
        return replace(kg, entity_classes=updated)
    return kg


def try_auto_swap(t: Triplet, kg: KnowledgeGraph, o: Ontology) -> tuple[Triplet, bool]:
    """Swap subject and object iff the swapped triplet validates cleanly
    in isolation.  Never applies to isA or data-property triplets."""
    if t.predicate == ISA or t.predicate not in o.object_property_map():
        return t, False
    swapped = Triplet(t.object, t.predicate, t.subject)
    if validate_triplets([swapped], kg, o):
        return t, False
    return swapped, True


def auto_swap_pass(batch: Sequence[Triplet], kg: KnowledgeGraph,
                   o: Ontology) -> tuple[list[Triplet], int]:
    """Apply try_auto_swap to every triplet flagged with a domain or
    range mismatch; returns the batch with swaps applied.

    The isolation check runs against the graph enriched with the
    batch's own legal class assignments, so a swap can rely on isA
    triplets that arrived in the same batch.
    """
    flagged = {
        v.subject
        for v in validate_triplets(batch, kg, o)
        if v.code in ("domain_mismatch", "range_mismatch")
    }
    enriched = kg
    classes = o.class_names()
    for t in batch:
        if t.predicate == ISA and t.object in classes \
                and ENTITY_NAME_RE.match(t.subject):
            enriched = apply_class_assignment(enriched, t.subject, t.object, o)
    out: list[Triplet] = []
    swapped_count = 0
    for t in batch:
        if t.render() in flagged:
            t, swapped = try_auto_swap(t, enriched, o)
            swapped_count += int(swapped)
        out.append(t)
    return out, swapped_count


def union_batch(kg: KnowledgeGraph, batch: Sequence[Triplet],
                o: Ontology) -> KnowledgeGraph:
    """Fold a validated batch into the graph: class assignments first,
    then the non-isA facts (set semantics, insertion order kept)."""
    updated = kg
    for t in batch:
        if t.predicate == ISA:
            updated = apply_class_assignment(updated, t.subject, t.object, o)
    existing = updated.triplet_set()
    additions = []
    kinds = dict(updated.predicate_kinds)
    data_props = o.data_property_map()
    for t in batch:
        if t.predicate == ISA or t in existing:
            continue
        existing.add(t)
        additions.append(t)
        kinds[t.predicate] = "data" if t.predicate in data_props else "object"
    return replace(updated, triplets=updated.triplets + tuple(additions),
                   predicate_kinds=kinds)


# ---------------------------------------------------------------------------
# Build loop

@dataclass(frozen=True)
class KgBuildResult:
    kg: KnowledgeGraph
    outcomes: tuple[ContractOutcome, ...]       # one per (epoch, chunk)
    skipped_chunks: tuple[tuple[int, str], ...]  # (epoch, chunk id) exhausted


def render_graph_summary(kg: KnowledgeGraph,
                         max_triplets: int = DEFAULT_CONTEXT_TRIPLETS) -> str:
    """Bounded snapshot of the graph for generator context: the full
    class map plus the most recent triplets."""
    if not kg.entity_classes and not kg.triplets:
        return "(empty)"
    lines = ["entities:"]
    for entity in sorted(kg.entity_classes):
        lines.append(f"{entity}: {kg.entity_classes[entity]}")
    recent = kg.triplets[-max_triplets:]
    lines.append(f"triplets (showing {len(recent)} of {len(kg.triplets)}):")
    lines.extend(f"{t.subject}|{t.predicate}|{t.object}" for t in recent)
    return "\n".join(lines)


def render_triplets(batch: Sequence[Triplet]) -> str:
    return "\n".join(f"{t.subject}|{t.predicate}|{t.object}" for t in batch)


def default_kg_contract(max_retries: int = DEFAULT_MAX_RETRIES) -> Contract:
    return Contract(name="kg_generation", max_retries=max_retries)


def build_kg(chunks: Sequence[DocumentChunk], o: Ontology, gen,
             contract: Contract | None = None, *,
             epochs: int = DEFAULT_EPOCHS,
             seed: int | None = None,
             max_context_triplets: int = DEFAULT_CONTEXT_TRIPLETS,
             incremental_violations: bool = False) -> KgBuildResult:
    """Extract triplets chunk by chunk over several epochs.

    Per chunk: generate, auto-swap what is deterministically fixable,
    re-verify, and only feed the residual violations to the repair
    loop.  Accepted batches are unioned into the graph; exhausted
    chunks are skipped and logged.  Later epochs see the grown graph,
    letting facts from different document parts connect.
    """
    if epochs < 1:
        raise PreconditionFailed("epochs_positive")
    leftover = find_violations(o)
    if leftover:
        raise PreconditionFailed("ontology_violation_free",
                                 f"{len(leftover)} ontology violations")
    outline = to_outline(o)
    kg = KnowledgeGraph(ontology_ref=fingerprint(outline))
    outcomes: list[ContractOutcome] = []
    skipped: list[tuple[int, str]] = []
    contract = contract or default_kg_contract()

    for epoch in range(epochs):
        for chunk in chunks:
            current = kg

            def convert(rows, current=current):
                batch = [Triplet(s, p, obj) for s, p, obj in rows]
                swapped, _ = auto_swap_pass(batch, current, o)
                return swapped

            try:
                batch, outcome = run_generation_step(
                    gen, PromptKind.KG,
                    (("chunk", chunk.text),
                     ("graph", render_graph_summary(current, max_context_triplets)),
                     ("ontology", outline)),
                    contract=contract,
                    convert=convert,
                    verify=lambda batch, current=current: validate_triplets(
                        batch, current, o),
                    fix_kind=PromptKind.FIX_KG,
                    render_previous=render_triplets,
                    seed=seed,
                    incremental_violations=incremental_violations,
                )
            except RetriesExhausted as exc:
                log.warning("chunk %s skipped in epoch %d: %s", chunk.id, epoch, exc)
                outcomes.append(exc.outcome)
                skipped.append((epoch, chunk.id))
                continue
            kg = union_batch(kg, batch, o)
            outcomes.append(outcome)
    return KgBuildResult(kg, tuple(outcomes), tuple(skipped))


# ---------------------------------------------------------------------------
# Serialization

def kg_to_dict(kg: KnowledgeGraph) -> dict:
    return {
        "ontology_ref": kg.ontology_ref,
        "entities": [
            {"name": name, "class": kg.entity_classes[name]}
            for name in sorted(kg.entity_classes)
        ],
        "triplets": [
            {"s": t.subject, "p": t.predicate, "o": t.object,
             "kind": kg.predicate_kinds.get(t.predicate, "object")}
            for t in kg.triplets
        ],
    }


def kg_from_dict(data: dict) -> KnowledgeGraph:
    triplets = tuple(Triplet(t["s"], t["p"], t["o"]) for t in data["triplets"])
    kinds = {t["p"]: t["kind"] for t in data["triplets"]}
    return KnowledgeGraph(
        ontology_ref=data.get("ontology_ref", ""),
        triplets=triplets,
        entity_classes={e["name"]: e["class"] for e in data["entities"]},
        predicate_kinds=kinds,
    )
