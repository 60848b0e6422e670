"""Personas, scope documents, and competency questions.

Turns a natural-language domain description into a prioritized
stakeholder panel, persona groups, a recursively merged scope document,
and a deduplicated competency-question set.  Every generator call runs
under a contract with a bounded repair loop.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .contracts import (
    DEFAULT_MAX_RETRIES,
    Contract,
    ContractOutcome,
    Predicate,
    PreconditionFailed,
    Violation,
)
from .generator import PromptKind, run_generation_step

DEFAULT_GROUP_SIZE = 4          # personas per heterogeneous group
DEFAULT_MERGE_BATCH = 6         # scope documents merged per call
DEFAULT_PERSONA_BASE = 2        # persona count floor per stakeholder group

_WS = re.compile(r"\s+")


def canonical_text(text: str) -> str:
    """Lowercase, whitespace-collapsed form used for exact-duplicate checks."""
    return _WS.sub(" ", text.strip().lower())


@dataclass(frozen=True)
class StakeholderGroup:
    name: str
    priority: int  # 1 = highest
    rationale: str


@dataclass(frozen=True)
class Persona:
    name: str
    group: str
    profile: str


@dataclass(frozen=True)
class PersonaGroup:
    index: int
    members: tuple[Persona, ...]


@dataclass(frozen=True)
class ScopeDocument:
    doc_id: str
    text: str
    provenance: tuple[str, ...]                 # direct source ids
    sources: tuple["ScopeDocument", ...] = ()   # direct source documents

    def merge_tree(self) -> dict[str, tuple[str, ...]]:
        """Full merge tree: doc id -> direct provenance, recursively."""
        tree = {self.doc_id: self.provenance}
        for source in self.sources:
            tree.update(source.merge_tree())
        return tree


@dataclass(frozen=True)
class CompetencyQuestion:
    id: str
    text: str
    source_group: int  # persona-group index; -1 if introduced at merge


def _step_contract(name: str, max_retries: int,
                   preconditions: Sequence[Predicate] = ()) -> Contract:
    return Contract(name=name, preconditions=tuple(preconditions),
                    max_retries=max_retries)


def persona_counts(groups: Sequence[StakeholderGroup],
                   base: int = DEFAULT_PERSONA_BASE) -> dict[str, int]:
    """Persona quota per group: base + 2 * (N - rank), so rank 1 gets most."""
    n = len(groups)
    return {g.name: base + 2 * (n - g.priority) for g in groups}


# ---------------------------------------------------------------------------
# Stakeholders

def _verify_stakeholders(groups: Sequence[StakeholderGroup]) -> list[Violation]:
    out: list[Violation] = []
    if not groups:
        return [Violation("empty_generation", "stakeholders",
                          "no stakeholder groups were produced")]
    n = len(groups)
    seen: dict[int, str] = {}
    for g in groups:
        if g.priority in seen:
            out.append(Violation("duplicate_priority", str(g.priority),
                                 f"priority {g.priority} assigned to both "
                                 f"'{seen[g.priority]}' and '{g.name}'"))
        else:
            seen[g.priority] = g.name
        if not 1 <= g.priority <= n:
            out.append(Violation("invalid_priority", str(g.priority),
                                 f"priority {g.priority} outside 1..{n} for '{g.name}'"))
    return out


def generate_stakeholders(domain: str, gen, *,
                          max_retries: int = DEFAULT_MAX_RETRIES,
                          seed: int | None = None,
                          outcomes: list[ContractOutcome] | None = None,
                          ) -> list[StakeholderGroup]:
    """Prioritized stakeholder groups for the domain (strict 1..N ranking)."""
    contract = _step_contract(
        "stakeholder_generation", max_retries,
        [Predicate("domain_nonempty", lambda segs: bool(segs["domain"].strip()))],
    )
    value, outcome = run_generation_step(
        gen, PromptKind.STAKEHOLDERS, (("domain", domain),),
        contract=contract,
        convert=lambda rows: [StakeholderGroup(r["name"], r["priority"], r["rationale"])
                              for r in rows],
        verify=_verify_stakeholders,
        seed=seed,
    )
    if outcomes is not None:
        outcomes.append(outcome)
    return sorted(value, key=lambda g: g.priority)


# ---------------------------------------------------------------------------
# Personas

def render_group_quotas(groups: Sequence[StakeholderGroup], quotas: dict[str, int]) -> str:
    return "\n".join(
        f"{g.name} (priority {g.priority}): {quotas[g.name]} personas"
        for g in sorted(groups, key=lambda g: g.priority)
    )


def _verify_personas(personas: Sequence[Persona],
                     groups: Sequence[StakeholderGroup]) -> list[Violation]:
    out: list[Violation] = []
    if not personas:
        return [Violation("empty_generation", "personas", "no personas were produced")]
    known = {g.name for g in groups}
    flagged: set[str] = set()
    for p in personas:
        if p.group not in known and p.group not in flagged:
            flagged.add(p.group)
            out.append(Violation("unknown_group", p.group,
                                 f"persona '{p.name}' references unknown group '{p.group}'"))
    by_rank = sorted(groups, key=lambda g: g.priority)
    counts = [sum(1 for p in personas if p.group == g.name) for g in by_rank]
    for i in range(1, len(counts)):
        if counts[i] > counts[i - 1]:
            out.append(Violation(
                "persona_count_mismatch", by_rank[i].name,
                f"group '{by_rank[i].name}' (rank {by_rank[i].priority}) has "
                f"{counts[i]} personas, more than the higher-priority "
                f"'{by_rank[i - 1].name}' with {counts[i - 1]}"))
    return out


def generate_personas(groups: Sequence[StakeholderGroup], gen, *,
                      domain: str = "",
                      base_count: int = DEFAULT_PERSONA_BASE,
                      max_retries: int = DEFAULT_MAX_RETRIES,
                      seed: int | None = None,
                      outcomes: list[ContractOutcome] | None = None,
                      ) -> list[Persona]:
    """Personas per group, with quotas decreasing as rank number grows."""
    if not groups:
        raise PreconditionFailed("groups_nonempty")
    quotas = persona_counts(groups, base_count)
    segments: tuple[tuple[str, str], ...] = (
        ("groups", render_group_quotas(groups, quotas)),
    )
    if domain:
        segments += (("domain", domain),)
    contract = _step_contract("persona_generation", max_retries)
    value, outcome = run_generation_step(
        gen, PromptKind.PERSONAS, segments,
        contract=contract,
        convert=lambda rows: [Persona(r["name"], r["group"], r["profile"]) for r in rows],
        verify=lambda personas: _verify_personas(personas, groups),
        seed=seed,
    )
    if outcomes is not None:
        outcomes.append(outcome)
    return value


def partition_personas(personas: Sequence[Persona], l: int,
                       seed: int) -> list[PersonaGroup]:
    """Seeded shuffle then chunking into ceil(len/l) groups.

    The shuffle is Python's Mersenne Twister (`random.Random(seed)`),
    which is stable across versions, so identical inputs and seed give
    an identical partition.
    """
    if not personas:
        raise PreconditionFailed("personas_nonempty")
    if l < 1:
        raise PreconditionFailed("group_size_positive")
    pool = list(personas)
    random.Random(seed).shuffle(pool)
    n = math.ceil(len(pool) / l)
    return [PersonaGroup(i, tuple(pool[i * l:(i + 1) * l])) for i in range(n)]


# ---------------------------------------------------------------------------
# Scope

def render_personas(group: PersonaGroup) -> str:
    return "\n".join(f"{p.name} ({p.group}): {p.profile}" for p in group.members)


def _scope_step(gen, kind: PromptKind, segments, contract, seed,
                outcomes: list[ContractOutcome] | None = None):
    value, outcome = run_generation_step(
        gen, kind, segments,
        contract=contract,
        convert=lambda text: text,
        verify=lambda text: [],
        seed=seed,
    )
    if outcomes is not None:
        outcomes.append(outcome)
    return value


def generate_scope(domain: str, groups: Sequence[PersonaGroup], k: int, gen, *,
                   max_retries: int = DEFAULT_MAX_RETRIES,
                   seed: int | None = None,
                   outcomes: list[ContractOutcome] | None = None,
                   ) -> ScopeDocument:
    """One scope draft per persona group, then recursive k-way merging
    until a single consolidated document remains."""
    if not groups:
        raise PreconditionFailed("groups_nonempty")
    if k < 2:
        raise PreconditionFailed("merge_batch_size", "k must be >= 2")
    contract = _step_contract("scope_generation", max_retries)

    docs: list[ScopeDocument] = []
    for group in groups:
        text = _scope_step(
            gen, PromptKind.SCOPE,
            (("domain", domain), ("personas", render_personas(group))),
            contract, seed, outcomes)
        docs.append(ScopeDocument(f"scope_g{group.index}", text,
                                  (f"group_{group.index}",)))

    level = 0
    while len(docs) > 1:
        merged: list[ScopeDocument] = []
        for i in range(0, len(docs), k):
            batch = docs[i:i + k]
            rendered = "\n\n".join(f"[{d.doc_id}]\n{d.text}" for d in batch)
            text = _scope_step(
                gen, PromptKind.SCOPE_MERGE,
                (("domain", domain), ("documents", rendered)),
                contract, seed, outcomes)
            merged.append(ScopeDocument(
                f"scope_m{level}_{i // k}", text,
                tuple(d.doc_id for d in batch), tuple(batch)))
        docs = merged
        level += 1
    return docs[0]


def expected_merge_calls(initial: int, k: int) -> int:
    """Closed-form call count of the recursive merge loop."""
    total = 0
    size = initial
    while size > 1:
        calls = math.ceil(size / k)
        total += calls
        size = calls
    return total


# ---------------------------------------------------------------------------
# Competency questions

def generate_cqs(domain: str, scope: ScopeDocument,
                 groups: Sequence[PersonaGroup], gen, *,
                 max_retries: int = DEFAULT_MAX_RETRIES,
                 seed: int | None = None,
                 outcomes: list[ContractOutcome] | None = None,
                 ) -> list[CompetencyQuestion]:
    """One CQ batch per persona group, one aggregation call, then a
    symbolic exact-duplicate collapse over canonicalized text."""
    if not scope.text.strip():
        raise PreconditionFailed("scope_finalized")
    contract = _step_contract("cq_generation", max_retries)

    batches: dict[int, list[str]] = {}
    for group in groups:
        idx = group.index
        value, outcome = run_generation_step(
            gen, PromptKind.CQ,
            (("domain", domain), ("scope", scope.text),
             ("personas", render_personas(group))),
            contract=contract,
            convert=lambda qs: list(qs),
            verify=lambda qs, idx=idx: (
                [] if qs else [Violation("empty_cq_batch", f"group_{idx}",
                                         f"persona group {idx} produced no questions")]),
            seed=seed,
        )
        if outcomes is not None:
            outcomes.append(outcome)
        batches[idx] = value

    all_questions = [q for idx in sorted(batches) for q in batches[idx]]
    merged, merge_outcome = run_generation_step(
        gen, PromptKind.CQ_MERGE,
        (("questions", "\n".join(all_questions)),),
        contract=_step_contract("cq_merge", max_retries),
        convert=lambda qs: list(qs),
        verify=lambda qs: (
            [] if qs else [Violation("empty_cq_batch", "merged",
                                     "aggregation produced no questions")]),
        seed=seed,
    )
    if outcomes is not None:
        outcomes.append(merge_outcome)

    # The merge call handles near-duplicates; exact duplicates after
    # canonicalization are collapsed symbolically as a checkable floor.
    origin = {}
    for idx in sorted(batches):
        for q in batches[idx]:
            origin.setdefault(canonical_text(q), idx)
    final: list[CompetencyQuestion] = []
    seen: set[str] = set()
    for q in merged:
        canon = canonical_text(q)
        if canon in seen:
            continue
        seen.add(canon)
        final.append(CompetencyQuestion(
            f"cq_{len(final) + 1:04d}", q, origin.get(canon, -1)))
    return final


def batch_cqs(cqs: Sequence[CompetencyQuestion], batch_size: int,
              ) -> list[list[CompetencyQuestion]]:
    if batch_size < 1:
        raise PreconditionFailed("batch_size_positive")
    return [list(cqs[i:i + batch_size]) for i in range(0, len(cqs), batch_size)]


# ---------------------------------------------------------------------------
# Persistence

def scope_to_dict(doc: ScopeDocument) -> dict:
    return {"text": doc.text, "provenance": list(doc.provenance)}


def scope_from_dict(data: dict, doc_id: str = "scope_final") -> ScopeDocument:
    return ScopeDocument(doc_id, data["text"], tuple(data["provenance"]))


def cqs_to_list(cqs: Sequence[CompetencyQuestion]) -> list[dict]:
    return [{"id": q.id, "text": q.text, "source_group": q.source_group} for q in cqs]


def cqs_from_list(items: Sequence[dict]) -> list[CompetencyQuestion]:
    return [CompetencyQuestion(d["id"], d["text"], d["source_group"]) for d in items]


def save_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
