"""Ontology data model, constraint catalogue, and iterative build loop.

The model covers the feature subset the pipeline needs: a single-rooted
class tree plus data and object properties with functional and inverse
flags.  ``find_violations`` is the complete checker over the closed
violation catalogue; ``build_ontology`` grows the ontology batch by
batch under the contract repair loop, keeping competency-question ids
attached to the classes they motivated.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace

from .contracts import (
    DEFAULT_MAX_RETRIES,
    Contract,
    ContractOutcome,
    PreconditionFailed,
    RetriesExhausted,
    Violation,
)
from .generator import PromptKind, escape_field, parse_payload, run_generation_step
from .scoping import CompetencyQuestion

log = logging.getLogger(__name__)

ROOT_CLASS = "Thing"
LITERAL_RANGES = ("text", "integer", "decimal", "boolean", "date")

CLASS_NAME_RE = re.compile(r"[A-Z][A-Za-z0-9_]*\Z")
PROPERTY_NAME_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


class UnknownClass(Exception):
    def __init__(self, name: str):
        super().__init__(f"unknown class: {name!r}")
        self.name = name


@dataclass(frozen=True)
class OntologyClass:
    name: str
    superclass: str | None  # None only for the root
    description: str
    source_cq_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class DataProperty:
    name: str
    domain: str
    range: str  # one of LITERAL_RANGES
    functional: bool = False


@dataclass(frozen=True)
class ObjectProperty:
    name: str
    domain: str
    range: str  # class name
    functional: bool = False
    inverse_of: str | None = None


@dataclass(frozen=True)
class Ontology:
    """A candidate or accepted ontology snapshot.

    Duplicate names are representable on purpose: merge keeps colliding
    delta elements so ``find_violations`` can report them.
    """

    classes: tuple[OntologyClass, ...] = ()
    data_properties: tuple[DataProperty, ...] = ()
    object_properties: tuple[ObjectProperty, ...] = ()

    def class_names(self) -> set[str]:
        return {c.name for c in self.classes}

    def data_property_map(self) -> dict[str, DataProperty]:
        return {p.name: p for p in self.data_properties}

    def object_property_map(self) -> dict[str, ObjectProperty]:
        return {p.name: p for p in self.object_properties}


@dataclass(frozen=True)
class ConceptDelta:
    """Classes and properties proposed by one generator call."""

    classes: tuple[OntologyClass, ...] = ()
    data_properties: tuple[DataProperty, ...] = ()
    object_properties: tuple[ObjectProperty, ...] = ()


def bootstrap_ontology(root: str = ROOT_CLASS) -> Ontology:
    """Seed ontology: just the root class, so the single-root invariant
    is satisfiable before the first batch lands."""
    return Ontology(classes=(OntologyClass(root, None, "Root of the class hierarchy."),))


# ---------------------------------------------------------------------------
# Violation catalogue

def _strongly_connected(edges: dict[str, set[str]]) -> list[set[str]]:
    """SCCs of size >= 2 via Kosaraju with explicit stacks."""
    nodes = set(edges)
    for targets in edges.values():
        nodes.update(targets)
    reverse: dict[str, set[str]] = {n: set() for n in nodes}
    for src, targets in edges.items():
        for dst in targets:
            reverse[dst].add(src)

    order: list[str] = []
    visited: set[str] = set()
    for start in sorted(nodes):
        if start in visited:
            continue
        stack: list[tuple[str, Iterable[str]]] = [(start, iter(sorted(edges.get(start, ()))))]
        visited.add(start)
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt not in visited:
                    visited.add(nxt)
                    stack.append((nxt, iter(sorted(edges.get(nxt, ())))))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()

    components: list[set[str]] = []
    assigned: set[str] = set()
    for start in reversed(order):
        if start in assigned:
            continue
        component = {start}
        assigned.add(start)
        queue = [start]
        while queue:
            node = queue.pop()
            for nxt in reverse.get(node, ()):
                if nxt not in assigned:
                    assigned.add(nxt)
                    component.add(nxt)
                    queue.append(nxt)
        if len(component) >= 2:
            components.append(component)
    return components


def find_violations(candidate: Ontology) -> list[Violation]:
    """Complete violation set over the closed catalogue.

    Returns an empty list iff the candidate satisfies every ontology
    invariant; malformed structures yield violations, never exceptions.
    One violation per distinct offending element.
    """
    out: list[Violation] = []
    seen: set[tuple[str, str]] = set()

    def add(code: str, subject: str, message: str) -> None:
        if (code, subject) not in seen:
            seen.add((code, subject))
            out.append(Violation(code, subject, message))

    classes = candidate.classes
    names = [c.name for c in classes]
    name_set = set(names)

    # simple constraints: naming, uniqueness, descriptions, references
    for name in sorted(name_set):
        if not CLASS_NAME_RE.match(name):
            add("lowercase_class_name", name,
                f"class name '{name}' must start uppercase (alphanumeric/underscore after)")
    for name in sorted(name_set):
        if names.count(name) >= 2:
            add("duplicate_class", name, f"class '{name}' is defined more than once")
    for c in classes:
        if not c.description.strip():
            add("missing_description", c.name, f"class '{c.name}' has no description")
    for c in classes:
        if c.superclass is not None and c.superclass not in name_set:
            add("unknown_superclass", c.name,
                f"class '{c.name}' extends unknown class '{c.superclass}'")

    # complex constraints: the hierarchy must be a single-rooted tree
    for c in classes:
        if c.superclass == c.name:
            add("self_inheritance", c.name, f"class '{c.name}' is its own superclass")

    declared: dict[str, set[str]] = {}
    for c in classes:
        if c.superclass is not None:
            declared.setdefault(c.name, set()).add(c.superclass)
    for name in sorted(declared):
        if len(declared[name]) >= 2:
            add("multiple_superclasses", name,
                f"class '{name}' declares superclasses {sorted(declared[name])}")

    edges: dict[str, set[str]] = {}
    for c in classes:
        if (c.superclass is not None and c.superclass != c.name
                and c.superclass in name_set):
            edges.setdefault(c.name, set()).add(c.superclass)
    for component in _strongly_connected(edges):
        subject = ",".join(sorted(component))
        add("inheritance_cycle", subject,
            f"classes {sorted(component)} form an inheritance cycle")

    roots = sorted({c.name for c in classes if c.superclass is None})
    if classes and len(roots) != 1:
        add("multiple_roots", ",".join(roots),
            f"expected exactly one root class, found {len(roots)}: {roots}")

    # properties
    properties: list[tuple[str, object]] = (
        [("data", p) for p in candidate.data_properties]
        + [("object", p) for p in candidate.object_properties]
    )
    prop_names = [p.name for _, p in properties]
    for name in sorted(set(prop_names)):
        if not PROPERTY_NAME_RE.match(name):
            add("property_naming", name,
                f"property name '{name}' must start lowercase")
    for name in sorted(set(prop_names)):
        if prop_names.count(name) >= 2:
            add("duplicate_property", name, f"property '{name}' is defined more than once")
    for kind, p in properties:
        if p.domain not in name_set:
            add("unknown_domain", p.name,
                f"property '{p.name}' has unknown domain class '{p.domain}'")
    for kind, p in properties:
        if kind == "data":
            if p.range not in LITERAL_RANGES:
                add("unknown_range", p.name,
                    f"data property '{p.name}' has range '{p.range}', "
                    f"expected one of {LITERAL_RANGES}")
        elif p.range not in name_set:
            add("unknown_range", p.name,
                f"object property '{p.name}' has unknown range class '{p.range}'")

    object_props = candidate.object_properties
    for p in object_props:
        if p.inverse_of is None:
            continue
        reversed_ok = any(
            q.name == p.inverse_of and q.domain == p.range and q.range == p.domain
            for q in object_props
        )
        if not reversed_ok:
            add("bad_inverse", p.name,
                f"property '{p.name}' names inverse '{p.inverse_of}' which is missing "
                f"or whose domain/range are not the reverse")
    return out


# ---------------------------------------------------------------------------
# Merge and queries

def _merged_ids(a: tuple[str, ...], b: tuple[str, ...]) -> tuple[str, ...]:
    seen = dict.fromkeys(a)
    seen.update(dict.fromkeys(b))
    return tuple(seen)


def single_root(o: Ontology) -> str | None:
    roots = {c.name for c in o.classes if c.superclass is None}
    return next(iter(roots)) if len(roots) == 1 else None


def merge_delta(current: Ontology, delta: ConceptDelta) -> Ontology:
    """Set-union of a concept delta into the ontology; pure.

    A delta class matching an existing one by name AND hierarchy
    position replaces its description (identity is the name); a name
    clash at a different position keeps both entries so verification
    reports duplicate_class.  Delta classes with no superclass attach
    under the current root by default.
    """
    root = single_root(current)
    classes = list(current.classes)
    for dc in delta.classes:
        superclass = dc.superclass
        if superclass is None and root is not None and dc.name != root:
            superclass = root
        incoming = replace(dc, superclass=superclass)
        match = next(
            (i for i, c in enumerate(classes)
             if c.name == incoming.name and c.superclass == incoming.superclass),
            None,
        )
        if match is None:
            classes.append(incoming)
        else:
            old = classes[match]
            classes[match] = replace(
                old,
                description=incoming.description.strip() or old.description,
                source_cq_ids=_merged_ids(old.source_cq_ids, incoming.source_cq_ids),
            )

    data_props = list(current.data_properties)
    for p in delta.data_properties:
        if p not in data_props:
            data_props.append(p)
    object_props = list(current.object_properties)
    for p in delta.object_properties:
        if p not in object_props:
            object_props.append(p)
    return Ontology(tuple(classes), tuple(data_props), tuple(object_props))


def is_subclass_of(o: Ontology, a: str, b: str) -> bool:
    """True iff b is reachable from a along superclass edges (reflexive)."""
    names = o.class_names()
    if a not in names:
        raise UnknownClass(a)
    if b not in names:
        raise UnknownClass(b)
    parents = {c.name: c.superclass for c in o.classes}
    current: str | None = a
    visited: set[str] = set()
    while current is not None and current not in visited:
        if current == b:
            return True
        visited.add(current)
        current = parents.get(current)
    return False


# ---------------------------------------------------------------------------
# Serialization

def ontology_to_dict(o: Ontology) -> dict:
    return {
        "classes": [
            {"name": c.name, "superclass": c.superclass, "description": c.description,
             "source_cq_ids": list(c.source_cq_ids)}
            for c in o.classes
        ],
        "data_properties": [
            {"name": p.name, "domain": p.domain, "range": p.range,
             "functional": p.functional}
            for p in o.data_properties
        ],
        "object_properties": [
            {"name": p.name, "domain": p.domain, "range": p.range,
             "functional": p.functional, "inverse_of": p.inverse_of}
            for p in o.object_properties
        ],
    }


def ontology_from_dict(data: dict) -> Ontology:
    return Ontology(
        classes=tuple(
            OntologyClass(c["name"], c["superclass"], c["description"],
                          tuple(c.get("source_cq_ids", ())))
            for c in data["classes"]
        ),
        data_properties=tuple(
            DataProperty(p["name"], p["domain"], p["range"], p["functional"])
            for p in data["data_properties"]
        ),
        object_properties=tuple(
            ObjectProperty(p["name"], p["domain"], p["range"], p["functional"],
                           p.get("inverse_of"))
            for p in data["object_properties"]
        ),
    )


def to_outline(o: Ontology) -> str:
    """Line-per-element text form; also the ontology snapshot sent to
    the generator, so the model reads and writes the same grammar."""
    lines = []
    for c in o.classes:
        lines.append("|".join([
            "class",
            escape_field(c.name),
            escape_field(c.superclass or ""),
            escape_field(c.description),
            ",".join(c.source_cq_ids),
        ]))
    for p in o.data_properties:
        lines.append("|".join([
            "data_property", escape_field(p.name), escape_field(p.domain),
            escape_field(p.range), "true" if p.functional else "false",
        ]))
    for p in o.object_properties:
        lines.append("|".join([
            "object_property", escape_field(p.name), escape_field(p.domain),
            escape_field(p.range), "true" if p.functional else "false",
            escape_field(p.inverse_of or ""),
        ]))
    return "\n".join(lines)


def delta_from_rows(rows: Sequence[dict]) -> ConceptDelta:
    classes = []
    data_props = []
    object_props = []
    for row in rows:
        if row["row"] == "class":
            classes.append(OntologyClass(row["name"], row["superclass"],
                                         row["description"],
                                         tuple(row.get("source_cq_ids", ()))))
        elif row["row"] == "data_property":
            data_props.append(DataProperty(row["name"], row["domain"],
                                           row["range"], row["functional"]))
        else:
            object_props.append(ObjectProperty(row["name"], row["domain"],
                                               row["range"], row["functional"],
                                               row["inverse_of"]))
    return ConceptDelta(tuple(classes), tuple(data_props), tuple(object_props))


def from_outline(text: str) -> Ontology:
    delta = delta_from_rows(parse_payload(PromptKind.ONTOLOGY, text))
    return Ontology(delta.classes, delta.data_properties, delta.object_properties)


# ---------------------------------------------------------------------------
# Build loop

@dataclass(frozen=True)
class OntologyBuildResult:
    ontology: Ontology
    outcomes: tuple[ContractOutcome, ...]   # one per CQ batch, in order
    skipped_batches: tuple[int, ...]        # batch indices whose contract exhausted


def render_cqs(batch: Sequence[CompetencyQuestion]) -> str:
    return "\n".join(f"[{q.id}] {q.text}" for q in batch)


def default_ontology_contract(max_retries: int = DEFAULT_MAX_RETRIES) -> Contract:
    return Contract(name="ontology_generation", max_retries=max_retries)


def build_ontology(cq_batches: Sequence[Sequence[CompetencyQuestion]], gen,
                   contract: Contract | None = None, *,
                   seed: int | None = None,
                   incremental_violations: bool = False) -> OntologyBuildResult:
    """Grow the ontology one CQ batch at a time.

    Each batch's delta is merged into a candidate, verified, and
    repaired under the contract; a batch whose repair loop exhausts is
    skipped and logged, never merged.  Accepted classes carry the ids
    of the questions in their originating batch.
    """
    if not cq_batches:
        raise PreconditionFailed("cq_batches_nonempty")
    contract = contract or default_ontology_contract()

    current = bootstrap_ontology()
    outcomes: list[ContractOutcome] = []
    skipped: list[int] = []
    for index, batch in enumerate(cq_batches):
        batch_ids = tuple(q.id for q in batch)

        def convert(rows, batch_ids=batch_ids):
            delta = delta_from_rows(rows)
            stamped = tuple(replace(c, source_cq_ids=batch_ids) for c in delta.classes)
            return replace(delta, classes=stamped)

        try:
            delta, outcome = run_generation_step(
                gen, PromptKind.ONTOLOGY,
                (("questions", render_cqs(batch)), ("ontology", to_outline(current))),
                contract=contract,
                convert=convert,
                verify=lambda delta, current=current: find_violations(
                    merge_delta(current, delta)),
                fix_kind=PromptKind.FIX_ONTOLOGY,
                render_previous=lambda delta: to_outline(
                    Ontology(delta.classes, delta.data_properties,
                             delta.object_properties)),
                seed=seed,
                incremental_violations=incremental_violations,
            )
        except RetriesExhausted as exc:
            log.warning("ontology batch %d skipped: %s", index, exc)
            outcomes.append(exc.outcome)
            skipped.append(index)
            continue
        current = merge_delta(current, delta)
        outcomes.append(outcome)
    return OntologyBuildResult(current, tuple(outcomes), tuple(skipped))
