"""Pluggable backends for every generative step.

Three backends share one interface: a live HTTP chat-completion client,
a deterministic scripted backend replaying recorded fixtures, and a
callback backend used to author fixtures.  Structured payloads travel
in a line-oriented plain-text grammar (one record per line, pipe-split
fields) that this module parses and validates; domain modules receive
neutral rows and build their own types from them.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import string
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import requests

from .contracts import (
    Contract,
    ContractOutcome,
    PreconditionFailed,
    RetriesExhausted,
    Violation,
    run_contract,
    violations_to_json,
)

log = logging.getLogger(__name__)


class PromptKind(str, Enum):
    STAKEHOLDERS = "stakeholders"
    PERSONAS = "personas"
    SCOPE = "scope"
    SCOPE_MERGE = "scope_merge"
    CQ = "cq"
    CQ_MERGE = "cq_merge"
    ONTOLOGY = "ontology"
    FIX_ONTOLOGY = "fix_ontology"
    KG = "kg"
    FIX_KG = "fix_kg"
    QA_EVAL = "qa_eval"


# Segments that must be present on a request of each kind.  Extra
# segments (violations, previous output, ...) are always allowed.
REQUIRED_SEGMENTS: dict[PromptKind, tuple[str, ...]] = {
    PromptKind.STAKEHOLDERS: ("domain",),
    PromptKind.PERSONAS: ("groups",),
    PromptKind.SCOPE: ("domain", "personas"),
    PromptKind.SCOPE_MERGE: ("domain", "documents"),
    PromptKind.CQ: ("domain", "scope", "personas"),
    PromptKind.CQ_MERGE: ("questions",),
    PromptKind.ONTOLOGY: ("questions", "ontology"),
    PromptKind.FIX_ONTOLOGY: ("violations", "previous"),
    PromptKind.KG: ("chunk", "graph", "ontology"),
    PromptKind.FIX_KG: ("violations", "previous"),
    PromptKind.QA_EVAL: ("graph", "question", "options"),
}


class BackendUnavailable(Exception):
    """Transport failure or missing fixture; retrying may help."""


class MalformedResponse(Exception):
    """The response text does not parse against the kind's schema.

    Not a crash: callers feed this back into the repair loop as a
    ``malformed_response`` violation.
    """


class DuplicateKey(Exception):
    """A fixture with this request hash exists with a different payload."""


@dataclass(frozen=True)
class GeneratorRequest:
    kind: PromptKind
    segments: tuple[tuple[str, str], ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        names = {name for name, _ in self.segments}
        missing = [s for s in REQUIRED_SEGMENTS[self.kind] if s not in names]
        if missing:
            raise PreconditionFailed(
                "required_segments",
                f"kind {self.kind.value} missing segments: {missing}",
            )

    def segment(self, name: str) -> str:
        for seg_name, value in self.segments:
            if seg_name == name:
                return value
        raise KeyError(name)


@dataclass(frozen=True)
class GeneratorResponse:
    kind: PromptKind
    payload: Any
    raw_text: str  # retained verbatim for audit


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def request_hash(request: GeneratorRequest) -> str:
    """Stable hash over (kind, canonicalized segments); seed is ignored
    so replay tolerates sampling-knob changes."""
    canon = canonical_json({
        "kind": request.kind.value,
        "segments": sorted([name, value] for name, value in request.segments),
    })
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def fingerprint(value: Any) -> str:
    """Short content hash used to tag derived artifacts."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Line grammar

def escape_field(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\|").replace("\n", "\\n")


def split_row(line: str) -> list[str]:
    """Split a pipe-delimited row honouring backslash escapes."""
    fields: list[str] = []
    buf: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            if nxt == "|":
                buf.append("|")
            elif nxt == "\\":
                buf.append("\\")
            elif nxt == "n":
                buf.append("\n")
            else:
                buf.append(ch)
                buf.append(nxt)
            i += 2
            continue
        if ch == "|":
            fields.append("".join(buf))
            buf = []
            i += 1
            continue
        buf.append(ch)
        i += 1
    fields.append("".join(buf))
    return fields


_LIST_MARKER = re.compile(r"^\s*(?:[-*]|\d+[.)])\s*")
_BOOLS = {"true": True, "false": False}


def _content_lines(text: str) -> list[str]:
    lines = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("```"):
            continue
        lines.append(stripped)
    return lines


def _parse_bool(token: str, line: str) -> bool:
    try:
        return _BOOLS[token.strip().lower()]
    except KeyError:
        raise MalformedResponse(f"expected true/false, got {token!r} in line: {line}") from None


def _parse_concept_rows(text: str) -> list[dict[str, Any]]:
    rows: list[dict[str, Any]] = []
    for line in _content_lines(text):
        fields = [f.strip() for f in split_row(line)]
        tag = fields[0]
        if tag == "class":
            if len(fields) not in (4, 5):
                raise MalformedResponse(f"class row needs 4-5 fields: {line}")
            cq_ids = tuple(t.strip() for t in fields[4].split(",") if t.strip()) if len(fields) == 5 else ()
            rows.append({
                "row": "class",
                "name": fields[1],
                "superclass": fields[2] or None,
                "description": fields[3],
                "source_cq_ids": cq_ids,
            })
        elif tag == "data_property":
            if len(fields) != 5:
                raise MalformedResponse(f"data_property row needs 5 fields: {line}")
            rows.append({
                "row": "data_property",
                "name": fields[1],
                "domain": fields[2],
                "range": fields[3],
                "functional": _parse_bool(fields[4], line),
            })
        elif tag == "object_property":
            if len(fields) != 6:
                raise MalformedResponse(f"object_property row needs 6 fields: {line}")
            rows.append({
                "row": "object_property",
                "name": fields[1],
                "domain": fields[2],
                "range": fields[3],
                "functional": _parse_bool(fields[4], line),
                "inverse_of": fields[5] or None,
            })
        else:
            raise MalformedResponse(f"unknown concept row tag {tag!r}: {line}")
    return rows


def _parse_ranked_rows(text: str) -> list[dict[str, Any]]:
    rows = []
    for line in _content_lines(text):
        fields = [f.strip() for f in split_row(line)]
        if len(fields) != 3:
            raise MalformedResponse(f"stakeholder row needs 3 fields: {line}")
        try:
            priority = int(fields[0])
        except ValueError:
            raise MalformedResponse(f"priority must be an integer: {line}") from None
        rows.append({"priority": priority, "name": fields[1], "rationale": fields[2]})
    return rows


def _parse_persona_rows(text: str) -> list[dict[str, str]]:
    rows = []
    for line in _content_lines(text):
        fields = [f.strip() for f in split_row(line)]
        if len(fields) != 3:
            raise MalformedResponse(f"persona row needs 3 fields: {line}")
        rows.append({"group": fields[0], "name": fields[1], "profile": fields[2]})
    return rows


def _parse_triplet_rows(text: str) -> list[tuple[str, str, str]]:
    rows = []
    for line in _content_lines(text):
        fields = [f.strip() for f in split_row(line)]
        if len(fields) != 3 or not all(fields):
            raise MalformedResponse(f"triplet line must have exactly 3 non-empty fields: {line}")
        rows.append((fields[0], fields[1], fields[2]))
    return rows


def _parse_question_lines(text: str) -> list[str]:
    return [_LIST_MARKER.sub("", line) for line in _content_lines(text)]


def _parse_text_block(text: str) -> str:
    stripped = text.strip()
    if not stripped:
        raise MalformedResponse("expected a non-empty text payload")
    return stripped


PAYLOAD_PARSERS: dict[PromptKind, Callable[[str], Any]] = {
    PromptKind.STAKEHOLDERS: _parse_ranked_rows,
    PromptKind.PERSONAS: _parse_persona_rows,
    PromptKind.SCOPE: _parse_text_block,
    PromptKind.SCOPE_MERGE: _parse_text_block,
    PromptKind.CQ: _parse_question_lines,
    PromptKind.CQ_MERGE: _parse_question_lines,
    PromptKind.ONTOLOGY: _parse_concept_rows,
    PromptKind.FIX_ONTOLOGY: _parse_concept_rows,
    PromptKind.KG: _parse_triplet_rows,
    PromptKind.FIX_KG: _parse_triplet_rows,
    PromptKind.QA_EVAL: _parse_text_block,
}


def parse_payload(kind: PromptKind, text: str) -> Any:
    """Parse raw response text against the kind's schema.

    Raises :class:`MalformedResponse` on any structural defect; never
    returns a silent partial value.
    """
    return PAYLOAD_PARSERS[kind](text)


# ---------------------------------------------------------------------------
# Prompt templates

_PROMPT_DIR = Path(__file__).parent / "prompts"


def load_template(kind: PromptKind) -> str:
    return (_PROMPT_DIR / f"{kind.value}.txt").read_text(encoding="utf-8")


def render_prompt(request: GeneratorRequest) -> str:
    """Substitute required segments into the kind's template and append
    any extra segments as labelled blocks (repair context rides along
    this way for kinds without a dedicated fix prompt)."""
    template = load_template(request.kind)
    seg_map = dict(request.segments)
    rendered = string.Template(template).substitute(
        {name: seg_map[name] for name in REQUIRED_SEGMENTS[request.kind]}
    )
    extras = [
        (name, value)
        for name, value in request.segments
        if name not in REQUIRED_SEGMENTS[request.kind]
    ]
    for name, value in extras:
        rendered += f"\n\n[{name}]\n{value}"
    return rendered


# ---------------------------------------------------------------------------
# Fixture archive

class FixtureStore:
    """Directory-backed archive, one JSON-lines file per PromptKind.

    Records are ``{request_hash, request, payload}`` where payload is
    the raw response text; replay re-parses it so schema validation
    still runs against fixtures.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._records: dict[str, dict[str, Any]] = {}
        if self.directory.is_dir():
            for path in sorted(self.directory.glob("*.jsonl")):
                with path.open(encoding="utf-8") as handle:
                    for line in handle:
                        if line.strip():
                            record = json.loads(line)
                            self._records[record["request_hash"]] = record

    def __len__(self) -> int:
        return len(self._records)

    def get(self, key: str) -> dict[str, Any] | None:
        return self._records.get(key)

    def add(self, request: GeneratorRequest, raw_text: str) -> str:
        key = request_hash(request)
        existing = self._records.get(key)
        if existing is not None:
            if existing["payload"] != raw_text:
                raise DuplicateKey(f"fixture {key} exists with a different payload")
            return key
        record = {
            "request_hash": key,
            "request": {
                "kind": request.kind.value,
                "segments": [list(s) for s in request.segments],
                "seed": request.seed,
            },
            "payload": raw_text,
        }
        self._records[key] = record
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / f"{request.kind.value}.jsonl"
        with path.open("a", encoding="utf-8") as handle:
            handle.write(canonical_json(record) + "\n")
        return key


def record_fixture(request: GeneratorRequest, response: GeneratorResponse,
                   store: FixtureStore) -> None:
    """Archive a validated response so replaying the request returns it."""
    store.add(request, response.raw_text)


# ---------------------------------------------------------------------------
# Backends

class ScriptedBackend:
    """Replays recorded responses; read-only after load and shareable."""

    def __init__(self, store: FixtureStore):
        self.store = store
        self.call_log: list[tuple[PromptKind, str]] = []

    def complete(self, request: GeneratorRequest) -> GeneratorResponse:
        key = request_hash(request)
        self.call_log.append((request.kind, key))
        record = self.store.get(key)
        if record is None:
            raise BackendUnavailable(
                f"no fixture for kind={request.kind.value} hash={key}"
            )
        raw = record["payload"]
        return GeneratorResponse(request.kind, parse_payload(request.kind, raw), raw)

    def calls(self, kind: PromptKind) -> int:
        return sum(1 for k, _ in self.call_log if k == kind)


class CallbackBackend:
    """Answers from a responder callable; optionally records fixtures.

    Used to author fixture archives and to drive scripted tests without
    touching disk.
    """

    def __init__(self, responder: Callable[[GeneratorRequest], str],
                 store: FixtureStore | None = None):
        self.responder = responder
        self.store = store
        self.call_log: list[tuple[PromptKind, str]] = []

    def complete(self, request: GeneratorRequest) -> GeneratorResponse:
        self.call_log.append((request.kind, request_hash(request)))
        raw = self.responder(request)
        response = GeneratorResponse(request.kind, parse_payload(request.kind, raw), raw)
        if self.store is not None:
            record_fixture(request, response, self.store)
        return response

    def calls(self, kind: PromptKind) -> int:
        return sum(1 for k, _ in self.call_log if k == kind)


@dataclass(frozen=True)
class GeneratorSettings:
    """Connection and sampling knobs for the live backend."""

    base_url: str
    model: str
    api_key_env: str = "GENERATOR_API_KEY"
    temperature: float | None = None
    timeout_seconds: float = 120.0


class HttpBackend:
    """Live chat-completion client speaking the common /chat/completions
    wire shape.  The API key is read from the environment variable named
    in the settings, never stored."""

    def __init__(self, settings: GeneratorSettings,
                 post_fn: Callable[..., Any] | None = None):
        self.settings = settings
        self._post = post_fn or requests.post
        self.call_log: list[tuple[PromptKind, str]] = []

    def complete(self, request: GeneratorRequest) -> GeneratorResponse:
        self.call_log.append((request.kind, request_hash(request)))
        api_key = os.environ.get(self.settings.api_key_env)
        if not api_key:
            raise BackendUnavailable(
                f"environment variable {self.settings.api_key_env} is not set"
            )
        body: dict[str, Any] = {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": render_prompt(request)}],
        }
        if self.settings.temperature is not None:
            body["temperature"] = self.settings.temperature
        if request.seed is not None:
            body["seed"] = request.seed
        try:
            http_response = self._post(
                self.settings.base_url.rstrip("/") + "/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.settings.timeout_seconds,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"transport failure: {exc}") from exc
        if http_response.status_code != 200:
            raise BackendUnavailable(
                f"backend returned HTTP {http_response.status_code}"
            )
        try:
            raw = http_response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendUnavailable(f"unexpected response envelope: {exc}") from exc
        return GeneratorResponse(request.kind, parse_payload(request.kind, raw), raw)


# ---------------------------------------------------------------------------
# Contract-wrapped generation

@dataclass
class _StepOutput:
    value: Any
    raw_text: str
    malformed: str | None = None  # parse-failure message, if any


def run_generation_step(
    gen: Any,
    kind: PromptKind,
    segments: Sequence[tuple[str, str]],
    *,
    contract: Contract,
    convert: Callable[[Any], Any],
    verify: Callable[[Any], Iterable[Violation]],
    fix_kind: PromptKind | None = None,
    render_previous: Callable[[Any], str] | None = None,
    seed: int | None = None,
    incremental_violations: bool = False,
) -> tuple[Any, ContractOutcome]:
    """Run one generator call under a contract's repair loop.

    ``convert`` turns a parsed payload into the step's domain value and
    ``verify`` finds violations in it.  Malformed responses become
    ``malformed_response`` violations and re-enter the loop.  Repair
    requests carry the violations plus the previous output; ``fix_kind``
    selects a dedicated repair prompt where one exists, otherwise the
    original kind is reused with the extra segments appended.
    """
    base = tuple(segments)

    def _call(use_kind: PromptKind, segs: tuple[tuple[str, str], ...]) -> _StepOutput:
        try:
            response = gen.complete(GeneratorRequest(use_kind, segs, seed))
        except MalformedResponse as exc:
            return _StepOutput(None, "", malformed=str(exc))
        return _StepOutput(convert(response.payload), response.raw_text)

    def produce(_payload: Any) -> _StepOutput:
        return _call(kind, base)

    def verify_step(output: _StepOutput) -> list[Violation]:
        if output.malformed is not None:
            return [Violation("malformed_response", kind.value, output.malformed)]
        return list(verify(output.value))

    def repair(_payload: Any, previous: _StepOutput, violations: Sequence[Violation]) -> _StepOutput:
        shown = violations[:1] if incremental_violations else violations
        if previous.malformed is not None or render_previous is None:
            previous_text = previous.raw_text
        else:
            previous_text = render_previous(previous.value)
        extra = (
            ("violations", violations_to_json(list(shown))),
            ("previous", previous_text),
        )
        return _call(fix_kind or kind, base + extra)

    try:
        output, outcome = run_contract(dict(base), produce, verify_step, repair, contract)
    except RetriesExhausted as exc:
        last = exc.output.value if isinstance(exc.output, _StepOutput) else exc.output
        raise RetriesExhausted(exc.contract_name, last, exc.outcome) from None
    return output.value, outcome
