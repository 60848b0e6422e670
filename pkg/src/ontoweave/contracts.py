"""Design-by-contract execution engine for generative pipeline steps.

A :class:`Contract` bundles named predicates (preconditions over the
input, postconditions over ``(input, output)``, invariants over the
latest pipeline state) with a bounded remediation budget.
:func:`run_contract` drives the produce -> verify -> repair loop and
records every attempt's violation set; :func:`compose` chains phase
contracts by name-level entailment and keeps the lineage recoverable.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

# Closed catalogue of violation codes.  Verifiers across the pipeline
# must not invent codes outside this set; the repair prompts and the
# fixture tooling key off it.
VIOLATION_CODES = frozenset({
    # engine
    "malformed_response",
    "postcondition_failed",
    "invariant_broken",
    # scoping
    "duplicate_priority",
    "invalid_priority",
    "empty_generation",
    "unknown_group",
    "persona_count_mismatch",
    "empty_cq_batch",
    # ontology
    "lowercase_class_name",
    "property_naming",
    "duplicate_class",
    "duplicate_property",
    "missing_description",
    "unknown_superclass",
    "unknown_domain",
    "unknown_range",
    "self_inheritance",
    "inheritance_cycle",
    "multiple_superclasses",
    "multiple_roots",
    "bad_inverse",
    # knowledge graph
    "duplicate_triplet",
    "entity_naming",
    "unknown_predicate",
    "unknown_class_assignment",
    "missing_class_assignment",
    "domain_mismatch",
    "range_mismatch",
    "functional_violation",
    "illegal_class_reassignment",
    # evaluation
    "answer_not_in_options",
})

SATISFIED = "satisfied"
REPAIRED = "repaired"
EXHAUSTED = "exhausted"

DEFAULT_MAX_RETRIES = 5


class PreconditionFailed(Exception):
    """A contract precondition failed; the generator was never invoked."""

    def __init__(self, name: str, message: str = ""):
        super().__init__(f"precondition '{name}' failed" + (f": {message}" if message else ""))
        self.name = name


class RetriesExhausted(Exception):
    """The repair loop ran out of attempts.

    Carries the last attempted output and the full :class:`ContractOutcome`
    (including ``violations_history``) so the caller can decide whether to
    drop the batch or salvage the partial result.
    """

    def __init__(self, contract_name: str, output: Any, outcome: "ContractOutcome"):
        last = outcome.violations_history[-1] if outcome.violations_history else []
        super().__init__(
            f"contract '{contract_name}' exhausted after {outcome.attempts} attempts; "
            f"{len(last)} violation(s) remain"
        )
        self.contract_name = contract_name
        self.output = output
        self.outcome = outcome


class CompositionGap(Exception):
    """A downstream precondition has no upstream guarantor."""

    def __init__(self, name: str):
        super().__init__(f"no upstream postcondition guarantees precondition '{name}'")
        self.name = name


@dataclass(frozen=True)
class Violation:
    """A machine-readable constraint failure with a repair hint."""

    code: str
    subject: str
    message: str
    repairable_deterministically: bool = False

    def __post_init__(self) -> None:
        if self.code not in VIOLATION_CODES:
            raise ValueError(f"unknown violation code: {self.code!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "subject": self.subject,
            "message": self.message,
            "repairable": self.repairable_deterministically,
        }


def violations_to_json(violations: Sequence[Violation]) -> str:
    """Serialize a violation set for logs, fixtures, and repair prompts."""
    return json.dumps([v.to_dict() for v in violations], indent=2, sort_keys=True)


def violations_from_json(text: str) -> list[Violation]:
    return [
        Violation(d["code"], d["subject"], d["message"], d.get("repairable", False))
        for d in json.loads(text)
    ]


@dataclass(frozen=True)
class Predicate:
    """A named boolean check; the name is what lineage and logs refer to."""

    name: str
    fn: Callable[..., bool]

    def __call__(self, *args: Any) -> bool:
        return bool(self.fn(*args))


def _check_unique(kind: str, predicates: Sequence[Predicate]) -> None:
    names = [p.name for p in predicates]
    if len(names) != len(set(names)):
        raise ValueError(f"duplicate {kind} predicate names: {sorted(names)}")


@dataclass(frozen=True)
class Contract:
    """Pre/post/invariant predicates plus a bounded remediation policy."""

    name: str
    preconditions: tuple[Predicate, ...] = ()
    postconditions: tuple[Predicate, ...] = ()
    invariants: tuple[Predicate, ...] = ()
    max_retries: int = DEFAULT_MAX_RETRIES
    # Pipeline stages this contract spans; composition appends to it.
    stages: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        _check_unique("precondition", self.preconditions)
        _check_unique("postcondition", self.postconditions)
        _check_unique("invariant", self.invariants)
        if not self.stages:
            object.__setattr__(self, "stages", (self.name,))

    @property
    def lineage(self) -> tuple[tuple[str, str], ...]:
        """Edges of the composition chain, upstream to downstream."""
        return tuple(zip(self.stages, self.stages[1:]))


@dataclass(frozen=True)
class ContractOutcome:
    """What happened across one run_contract invocation."""

    status: str
    attempts: int
    violations_history: tuple[tuple[Violation, ...], ...]

    def __post_init__(self) -> None:
        if self.status not in (SATISFIED, REPAIRED, EXHAUSTED):
            raise ValueError(f"bad status: {self.status!r}")
        if self.attempts != len(self.violations_history):
            raise ValueError("attempts must equal len(violations_history)")
        last = self.violations_history[-1] if self.violations_history else ()
        if self.status in (SATISFIED, REPAIRED) and last:
            raise ValueError(f"status {self.status} requires an empty final violation set")
        if self.status == EXHAUSTED and not last:
            raise ValueError("status exhausted requires a non-empty final violation set")


def run_contract(
    payload: Any,
    produce: Callable[[Any], Any],
    verify: Callable[[Any], Iterable[Violation]],
    repair_prompt: Callable[[Any, Any, Sequence[Violation]], Any],
    contract: Contract,
) -> tuple[Any, ContractOutcome]:
    """Run one generative step under a contract.

    ``produce(payload)`` yields the first attempt; ``verify(output)``
    finds violations; ``repair_prompt(payload, output, violations)``
    yields the next attempt.  Verification is re-run from scratch after
    every remediation attempt (a repair may restructure its output and
    introduce new violation kinds).  Raises :class:`RetriesExhausted`
    with the last attempt attached once ``contract.max_retries`` total
    generator invocations have been made without success.
    """
    for pre in contract.preconditions:
        if not pre(payload):
            raise PreconditionFailed(pre.name)

    history: list[tuple[Violation, ...]] = []
    output = produce(payload)
    attempts = 1
    while True:
        found = list(verify(output))
        for post in contract.postconditions:
            if not post(payload, output):
                found.append(Violation("postcondition_failed", post.name,
                                       f"postcondition '{post.name}' does not hold"))
        # Invariants are checked per attempt against the latest state.
        for inv in contract.invariants:
            if not inv(payload, output):
                found.append(Violation("invariant_broken", inv.name,
                                       f"invariant '{inv.name}' does not hold"))
        history.append(tuple(found))
        if not found:
            status = SATISFIED if attempts == 1 else REPAIRED
            return output, ContractOutcome(status, attempts, tuple(history))
        if attempts >= contract.max_retries:
            outcome = ContractOutcome(EXHAUSTED, attempts, tuple(history))
            raise RetriesExhausted(contract.name, output, outcome)
        output = repair_prompt(payload, output, found)
        attempts += 1


def compose(
    upstream: Contract,
    downstream: Contract,
    entailment: Mapping[str, Iterable[str]] | None = None,
) -> Contract:
    """Chain two phase contracts.

    Every downstream precondition must be guaranteed by an upstream
    postcondition, either by exact name or through the declared
    ``entailment`` table (precondition name -> postcondition names that
    entail it).  Matching is name-level: lineage is traceability, not
    theorem proving.
    """
    guaranteed = {p.name for p in upstream.postconditions}
    table = {k: set(v) for k, v in (entailment or {}).items()}
    for pre in downstream.preconditions:
        if pre.name in guaranteed:
            continue
        if table.get(pre.name, set()) & guaranteed:
            continue
        raise CompositionGap(pre.name)

    invariants = list(upstream.invariants)
    seen = {p.name for p in invariants}
    invariants.extend(p for p in downstream.invariants if p.name not in seen)
    return Contract(
        name=f"{upstream.name}->{downstream.name}",
        preconditions=upstream.preconditions,
        postconditions=downstream.postconditions,
        invariants=tuple(invariants),
        max_retries=max(upstream.max_retries, downstream.max_retries),
        stages=upstream.stages + downstream.stages,
    )
