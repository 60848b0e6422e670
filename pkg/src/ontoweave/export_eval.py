"""Cypher export, multi-hop boolean checks, and the QA evaluation harness.

The export is a one-to-one mapping: each entity becomes one merge-style
node statement (its class as the label, data-property values as node
attributes) and each object-property triplet one relationship
statement.  The parser inverts the mapping so the round trip is exact.
Multi-hop checks evaluate chained relationship patterns with a final
class-membership condition by in-memory traversal, mirroring what a
graph database answers over the exported script.
"""

from __future__ import annotations

import json
import logging
import re
import string
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

from .contracts import (
    DEFAULT_MAX_RETRIES,
    Contract,
    ContractOutcome,
    PreconditionFailed,
    RetriesExhausted,
    Violation,
)
from .generator import PromptKind, run_generation_step
from .kg import KnowledgeGraph, Triplet, UnassignedEntity, kg_to_dict
from .ontology import Ontology

log = logging.getLogger(__name__)

DEFAULT_FUZZY_THRESHOLD = 0.85


class GrammarError(Exception):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UnknownPredicate(Exception):
    pass


class EmptyRun(Exception):
    pass


# ---------------------------------------------------------------------------
# Cypher export

@dataclass(frozen=True)
class CypherScript:
    statements: tuple[str, ...]
    node_count: int
    rel_count: int

    @property
    def text(self) -> str:
        return "\n".join(self.statements) + ("\n" if self.statements else "")


def _quote(value: str) -> str:
    escaped = value.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n")
    return f"'{escaped}'"


def export_cypher(kg: KnowledgeGraph) -> CypherScript:
    """One-to-one Cypher form of the graph, idempotent on re-ingestion.

    Node statements merge on the name attribute with the entity's class
    as the label; data-property values ride along as attributes (a list
    when a non-functional property holds several).  isA is encoded as
    the label, never as an edge.
    """
    for t in kg.triplets:
        if t.subject not in kg.entity_classes:
            raise UnassignedEntity(t.subject)
        if kg.predicate_kinds.get(t.predicate, "object") == "object" \
                and t.object not in kg.entity_classes:
            raise UnassignedEntity(t.object)

    data_values: dict[str, dict[str, list[str]]] = {}
    relations: list[Triplet] = []
    for t in kg.triplets:
        if kg.predicate_kinds.get(t.predicate, "object") == "data":
            data_values.setdefault(t.subject, {}).setdefault(t.predicate, []).append(t.object)
        else:
            relations.append(t)

    statements: list[str] = []
    if kg.ontology_ref:
        statements.append(f"// ontology_ref: {kg.ontology_ref}")
    for entity in sorted(kg.entity_classes):
        attrs = [f"name: {_quote(entity)}"]
        for prop in sorted(data_values.get(entity, {})):
            values = sorted(set(data_values[entity][prop]))
            if len(values) == 1:
                attrs.append(f"{prop}: {_quote(values[0])}")
            else:
                attrs.append(f"{prop}: [" + ", ".join(_quote(v) for v in values) + "]")
        statements.append(
            f"MERGE (n:{kg.entity_classes[entity]} {{{', '.join(attrs)}}});")
    for t in sorted(relations, key=lambda t: (t.subject, t.predicate, t.object)):
        statements.append(
            f"MATCH (a {{name: {_quote(t.subject)}}}), (b {{name: {_quote(t.object)}}}) "
            f"MERGE (a)-[:{t.predicate}]->(b);")
    return CypherScript(tuple(statements), len(kg.entity_classes), len(relations))


# ---------------------------------------------------------------------------
# Cypher parsing (round trip)

_NODE_RE = re.compile(r"MERGE \(n:([A-Za-z_][A-Za-z0-9_]*) \{(.*)\}\);\Z")
_REL_RE = re.compile(
    r"MATCH \(a \{name: '((?:[^'\\]|\\.)*)'\}\), \(b \{name: '((?:[^'\\]|\\.)*)'\}\) "
    r"MERGE \(a\)-\[:([A-Za-z_][A-Za-z0-9_]*)\]->\(b\);\Z")
_REF_RE = re.compile(r"// ontology_ref: (.*)\Z")


def _unquote(value: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({"n": "\n", "'": "'", "\\": "\\"}.get(nxt, ch + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _parse_attrs(body: str, line_number: int) -> list[tuple[str, str | list[str]]]:
    attrs: list[tuple[str, str | list[str]]] = []
    i = 0

    def scan_quoted(pos: int) -> tuple[str, int]:
        if pos >= len(body) or body[pos] != "'":
            raise GrammarError(line_number, f"expected quoted value at column {pos}")
        j = pos + 1
        while j < len(body):
            if body[j] == "\\":
                j += 2
                continue
            if body[j] == "'":
                return _unquote(body[pos + 1:j]), j + 1
            j += 1
        raise GrammarError(line_number, "unterminated string")

    while i < len(body):
        colon = body.find(":", i)
        if colon < 0:
            raise GrammarError(line_number, "expected 'key: value' attribute")
        key = body[i:colon].strip()
        if not key:
            raise GrammarError(line_number, "empty attribute key")
        i = colon + 1
        while i < len(body) and body[i] == " ":
            i += 1
        if i < len(body) and body[i] == "[":
            values: list[str] = []
            i += 1
            while True:
                value, i = scan_quoted(i)
                values.append(value)
                if body.startswith(", ", i):
                    i += 2
                    continue
                if i < len(body) and body[i] == "]":
                    i += 1
                    break
                raise GrammarError(line_number, "malformed list value")
            attrs.append((key, values))
        else:
            value, i = scan_quoted(i)
            attrs.append((key, value))
        if body.startswith(", ", i):
            i += 2
        elif i != len(body):
            raise GrammarError(line_number, "trailing characters after attribute")
    return attrs


def parse_cypher_export(script: CypherScript | str) -> KnowledgeGraph:
    """Invert :func:`export_cypher`; raises GrammarError with the line
    number on anything outside the export grammar."""
    text = script.text if isinstance(script, CypherScript) else script
    entity_classes: dict[str, str] = {}
    triplets: list[Triplet] = []
    kinds: dict[str, str] = {}
    ontology_ref = ""
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        ref = _REF_RE.match(line)
        if ref:
            ontology_ref = ref.group(1)
            continue
        node = _NODE_RE.match(line)
        if node:
            label, body = node.groups()
            attrs = _parse_attrs(body, line_number)
            names = [v for k, v in attrs if k == "name"]
            if len(names) != 1 or not isinstance(names[0], str):
                raise GrammarError(line_number, "node needs exactly one name attribute")
            entity = names[0]
            entity_classes[entity] = label
            for key, value in attrs:
                if key == "name":
                    continue
                values = value if isinstance(value, list) else [value]
                for v in values:
                    triplets.append(Triplet(entity, key, v))
                    kinds[key] = "data"
            continue
        rel = _REL_RE.match(line)
        if rel:
            subject, obj, predicate = rel.groups()
            triplets.append(Triplet(_unquote(subject), predicate, _unquote(obj)))
            kinds[predicate] = "object"
            continue
        raise GrammarError(line_number, f"unrecognized statement: {line!r}")
    return KnowledgeGraph(ontology_ref=ontology_ref, triplets=tuple(triplets),
                          entity_classes=entity_classes, predicate_kinds=kinds)


def kg_isomorphic(a: KnowledgeGraph, b: KnowledgeGraph) -> bool:
    """Equality up to triplet ordering: entity set, class map, triplet set."""
    return (a.entity_classes == b.entity_classes
            and a.triplet_set() == b.triplet_set())


# ---------------------------------------------------------------------------
# Multi-hop checks

@dataclass(frozen=True)
class MultiHopCheck:
    """A chained relationship pattern with a final class condition."""

    id: str
    natural_language: str
    start: str
    hops: tuple[str, ...]
    target_class: str | None
    expected: bool

    def __post_init__(self) -> None:
        traversals = len(self.hops) + (1 if self.target_class else 0)
        if traversals < 2:
            raise ValueError("multi-hop check needs at least 2 traversals")

    def to_cypher(self) -> str:
        """Equivalent query for a live graph database."""
        pattern = f"(x0 {{name: {_quote(self.start)}}})"
        for i, hop in enumerate(self.hops, start=1):
            pattern += f"-[:{hop}]->(x{i})"
        last = f"x{len(self.hops)}"
        where = f" WHERE {last}:{self.target_class}" if self.target_class else ""
        return f"MATCH {pattern}{where} RETURN count(*) > 0 AS result;"


def run_multihop_check(kg: KnowledgeGraph, check: MultiHopCheck,
                       o: Ontology | None = None) -> bool:
    """Evaluate the chained pattern by frontier traversal.

    Class membership is an exact label match (the entity's current
    class), mirroring the exported node labels.  When an ontology is
    supplied the pattern vocabulary is validated first.
    """
    if o is not None:
        object_props = o.object_property_map()
        for hop in check.hops:
            if hop not in object_props:
                raise UnknownPredicate(hop)
        if check.target_class is not None and check.target_class not in o.class_names():
            from .ontology import UnknownClass
            raise UnknownClass(check.target_class)
    frontier = {check.start}
    for hop in check.hops:
        frontier = {t.object for t in kg.triplets
                    if t.predicate == hop and t.subject in frontier}
        if not frontier:
            return False
    if check.target_class is None:
        return bool(frontier)
    return any(kg.entity_classes.get(e) == check.target_class for e in frontier)


def load_multihop_checks(path: str | Path) -> list[MultiHopCheck]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        MultiHopCheck(d["id"], d["natural_language"], d["start"],
                      tuple(d["hops"]), d.get("target_class"), d["expected"])
        for d in data
    ]


# ---------------------------------------------------------------------------
# Fuzzy matching

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


def _canon_answer(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


def _levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1,
                               current[j - 1] + 1,
                               previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def similarity(a: str, b: str) -> float:
    """1 - edit_distance / max_length over canonicalized text."""
    ca, cb = _canon_answer(a), _canon_answer(b)
    longest = max(len(ca), len(cb))
    if longest == 0:
        return 1.0
    return 1.0 - _levenshtein(ca, cb) / longest


def fuzzy_match(candidate: str, options: Sequence[str],
                threshold: float = DEFAULT_FUZZY_THRESHOLD) -> int | None:
    """Index of the most similar option if its similarity clears the
    threshold, else None; ties break toward the lowest index."""
    if not options:
        raise PreconditionFailed("options_nonempty")
    if not 0 < threshold <= 1:
        raise PreconditionFailed("threshold_bounds", "need 0 < threshold <= 1")
    best_index = None
    best_score = -1.0
    for index, option in enumerate(options):
        score = similarity(candidate, option)
        if score > best_score:
            best_index, best_score = index, score
    return best_index if best_score >= threshold else None


# ---------------------------------------------------------------------------
# QA evaluation

@dataclass(frozen=True)
class QaItem:
    question: str
    options: tuple[str, ...]
    expected: str
    predicted: str | None = None

    def __post_init__(self) -> None:
        if self.expected not in self.options:
            raise ValueError("expected answer must be one of the options")


def render_options(options: Sequence[str]) -> str:
    return "\n".join(f"{i}. {option}" for i, option in enumerate(options, start=1))


def default_qa_contract(max_retries: int = DEFAULT_MAX_RETRIES) -> Contract:
    return Contract(name="qa_evaluation", max_retries=max_retries)


def evaluate_qa(kg: KnowledgeGraph, item: QaItem, gen,
                contract: Contract | None = None, *,
                threshold: float = DEFAULT_FUZZY_THRESHOLD,
                seed: int | None = None) -> QaItem:
    """Best-guess answer grounded only in the serialized graph.

    The contract guarantees the prediction fuzzy-matches one of the
    options; answers that match nothing are re-prompted.  An exhausted
    loop marks the item unanswered (predicted stays None).
    """
    if not item.options:
        raise PreconditionFailed("options_nonempty")
    contract = contract or default_qa_contract()

    def verify(answer: str) -> list[Violation]:
        if fuzzy_match(answer, item.options, threshold) is None:
            return [Violation("answer_not_in_options", answer[:80],
                              "the answer does not match any option; reply with "
                              "the text of one option")]
        return []

    try:
        answer, _ = run_generation_step(
            gen, PromptKind.QA_EVAL,
            (("graph", json.dumps(kg_to_dict(kg), sort_keys=True)),
             ("question", item.question),
             ("options", render_options(item.options))),
            contract=contract,
            convert=lambda text: text,
            verify=verify,
            seed=seed,
        )
    except RetriesExhausted as exc:
        log.warning("question unanswered after %d attempts: %.60s",
                    exc.outcome.attempts, item.question)
        return replace(item, predicted=None)
    matched = fuzzy_match(answer, item.options, threshold)
    return replace(item, predicted=item.options[matched])


# ---------------------------------------------------------------------------
# Scoring

@dataclass(frozen=True)
class ScoreReport:
    accuracy: float
    seed: int | None
    total: int
    correct: int
    unanswered: int
    items: tuple[QaItem, ...]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "seed": self.seed,
            "total": self.total,
            "correct": self.correct,
            "unanswered": self.unanswered,
            "items": [
                {"question": item.question, "expected": item.expected,
                 "predicted": item.predicted,
                 "correct": item.predicted == item.expected}
                for item in self.items
            ],
        }

    def to_text(self) -> str:
        lines = [
            f"accuracy : {self.accuracy:.4f} ({self.correct}/{self.total})",
            f"unanswered: {self.unanswered}",
            f"seed     : {self.seed}",
            "",
            f"{'ok':<4} {'expected':<32} {'predicted':<32} question",
        ]
        for item in self.items:
            ok = "yes" if item.predicted == item.expected else "NO"
            predicted = item.predicted if item.predicted is not None else "(unanswered)"
            lines.append(f"{ok:<4} {item.expected[:32]:<32} "
                         f"{predicted[:32]:<32} {item.question[:60]}")
        return "\n".join(lines) + "\n"


def score_run(items: Sequence[QaItem], *, seed: int | None = None) -> ScoreReport:
    """Accuracy over evaluated items; unanswered items count as wrong."""
    if not items:
        raise EmptyRun("no QA items to score")
    correct = sum(1 for item in items if item.predicted == item.expected)
    unanswered = sum(1 for item in items if item.predicted is None)
    return ScoreReport(
        accuracy=correct / len(items),
        seed=seed,
        total=len(items),
        correct=correct,
        unanswered=unanswered,
        items=tuple(items),
    )


def load_qa_items(path: str | Path) -> list[QaItem]:
    """QA dataset input: JSON lines of {question, options[], answer}."""
    items = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            data = json.loads(line)
            items.append(QaItem(data["question"], tuple(data["options"]),
                                data["answer"]))
    return items
