import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoweave.contracts import (
    CompositionGap,
    Contract,
    ContractOutcome,
    Predicate,
    PreconditionFailed,
    RetriesExhausted,
    Violation,
    compose,
    run_contract,
    violations_from_json,
    violations_to_json,
)


def v(code="missing_description", subject="X"):
    return Violation(code, subject, "test violation")


class ScriptedStep:
    """Produce/verify/repair driven by a list of violation sets."""

    def __init__(self, violation_script):
        self.script = [list(s) for s in violation_script]
        self.produce_calls = 0
        self.repair_calls = 0
        self.verify_calls = 0

    def produce(self, payload):
        self.produce_calls += 1
        return ("attempt", 0)

    def repair(self, payload, previous, violations):
        self.repair_calls += 1
        return ("attempt", previous[1] + 1)

    def verify(self, output):
        self.verify_calls += 1
        return self.script[output[1]]


def run_scripted(script, max_retries=5):
    step = ScriptedStep(script)
    contract = Contract(name="test", max_retries=max_retries)
    result = run_contract(None, step.produce, step.verify, step.repair, contract)
    return step, result


def test_clean_first_attempt_is_satisfied():
    step, (output, outcome) = run_scripted([[]])
    assert outcome.status == "satisfied"
    assert outcome.attempts == 1
    assert outcome.violations_history == ((),)
    assert step.repair_calls == 0


def test_repair_after_two_violations():
    # Hand-traced loop: attempt 1 finds 2 violations, the repair call
    # produces a clean output, verification re-runs and passes.
    step, (output, outcome) = run_scripted([[v(), v(subject="Y")], []])
    assert outcome.status == "repaired"
    assert outcome.attempts == 2
    assert [len(s) for s in outcome.violations_history] == [2, 0]
    assert step.repair_calls == 1


def test_exhaustion_carries_history_and_output():
    step = ScriptedStep([[v()], [v()], [v()]])
    contract = Contract(name="stubborn", max_retries=3)
    with pytest.raises(RetriesExhausted) as excinfo:
        run_contract(None, step.produce, step.verify, step.repair, contract)
    outcome = excinfo.value.outcome
    assert outcome.status == "exhausted"
    assert outcome.attempts == 3
    assert all(len(s) == 1 for s in outcome.violations_history)
    assert excinfo.value.output == ("attempt", 2)
    assert step.produce_calls + step.repair_calls == 3


def test_precondition_failure_never_calls_generator():
    step = ScriptedStep([[]])
    contract = Contract(
        name="guarded",
        preconditions=(Predicate("payload_nonempty", lambda payload: bool(payload)),),
    )
    with pytest.raises(PreconditionFailed) as excinfo:
        run_contract("", step.produce, step.verify, step.repair, contract)
    assert excinfo.value.name == "payload_nonempty"
    assert step.produce_calls == 0
    assert step.verify_calls == 0


def test_postconditions_and_invariants_checked_each_attempt():
    attempts_seen = []
    contract = Contract(
        name="checked",
        postconditions=(Predicate("output_positive", lambda p, out: out[1] >= 1),),
        invariants=(Predicate("history_grows", lambda p, out: True),),
        max_retries=4,
    )

    def produce(payload):
        return ("attempt", 0)

    def repair(payload, previous, violations):
        attempts_seen.append([w.code for w in violations])
        return ("attempt", previous[1] + 1)

    output, outcome = run_contract(None, produce, lambda out: [], repair, contract)
    assert outcome.status == "repaired"
    assert outcome.attempts == 2
    assert attempts_seen == [["postcondition_failed"]]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=6),
       st.integers(min_value=1, max_value=6))
def test_verification_runs_once_per_attempt(pattern, max_retries):
    # Property: verification count == attempts == 1 + repair calls, for
    # any scripted violation pattern and retry budget.
    script = [[v()] * n for n in pattern] + [[]]
    step = ScriptedStep(script)
    contract = Contract(name="prop", max_retries=max_retries)
    try:
        _, outcome = run_contract(None, step.produce, step.verify, step.repair,
                                  contract)
        assert outcome.status in ("satisfied", "repaired")
        assert not outcome.violations_history[-1]
    except RetriesExhausted as exc:
        outcome = exc.outcome
        assert outcome.attempts == max_retries
        assert outcome.violations_history[-1]
    assert step.verify_calls == outcome.attempts
    assert step.verify_calls == step.repair_calls + 1


def test_outcome_invariants_enforced():
    with pytest.raises(ValueError):
        ContractOutcome("satisfied", 1, ((v(),),))
    with pytest.raises(ValueError):
        ContractOutcome("exhausted", 1, ((),))
    with pytest.raises(ValueError):
        ContractOutcome("satisfied", 2, ((),))


def test_violation_code_catalogue_is_closed():
    with pytest.raises(ValueError):
        Violation("made_up_code", "x", "nope")


def test_violation_json_round_trip():
    violations = [v(), Violation("range_mismatch", "(a, b, c)", "m", True)]
    text = violations_to_json(violations)
    parsed = json.loads(text)
    assert parsed[0]["repairable"] is False and parsed[1]["repairable"] is True
    assert violations_from_json(text) == violations


def test_contract_requires_unique_predicate_names():
    dup = (Predicate("same", lambda p: True), Predicate("same", lambda p: True))
    with pytest.raises(ValueError):
        Contract(name="dup", preconditions=dup)
    with pytest.raises(ValueError):
        Contract(name="bad_retries", max_retries=0)


# ---------------------------------------------------------------------------
# Composition

def _contract(name, pre=(), post=()):
    return Contract(
        name=name,
        preconditions=tuple(Predicate(p, lambda x: True) for p in pre),
        postconditions=tuple(Predicate(p, lambda x, y: True) for p in post),
    )


def test_compose_exact_name_match():
    upstream = _contract("ontology", post=("hierarchy_is_tree",))
    downstream = _contract("kg", pre=("hierarchy_is_tree",))
    composed = compose(upstream, downstream)
    assert composed.lineage == (("ontology", "kg"),)
    assert [p.name for p in composed.preconditions] == []
    assert [p.name for p in composed.postconditions] == []


def test_compose_gap_names_the_missing_guarantor():
    scope = _contract("scope", post=("scope_written",))
    kg = _contract("kg", pre=("ontology_exists",))
    with pytest.raises(CompositionGap) as excinfo:
        compose(scope, kg)
    assert excinfo.value.name == "ontology_exists"


def test_compose_respects_entailment_table():
    upstream = _contract("ontology", post=("ontology_accepted",))
    downstream = _contract("kg", pre=("ontology_exists",))
    composed = compose(upstream, downstream,
                       entailment={"ontology_exists": ["ontology_accepted"]})
    assert composed.lineage == (("ontology", "kg"),)


def test_three_stage_chain_recovers_lineage_path():
    scope = _contract("scope", post=("cqs_ready",))
    ontology = _contract("ontology", pre=("cqs_ready",), post=("ontology_ready",))
    kg = _contract("kg", pre=("ontology_ready",))
    chain = compose(compose(scope, ontology), kg)
    assert chain.lineage == (("scope", "ontology"), ("ontology", "kg"))
    assert len(chain.lineage) == 2
