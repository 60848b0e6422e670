"""Brute-force oracle for triplet validation.

Re-derives every rule independently: the subclass relation comes from a
fixpoint ancestor closure, not a parent walk, and the checks run as
plain data passes over the batch.  Returns (code, subject) pairs.
"""

from __future__ import annotations

import string

ISA = "isA"
_LOWER = set(string.ascii_lowercase)
_TAIL = set(string.ascii_lowercase + string.digits + "_")


def entity_name_ok(name: str) -> bool:
    return bool(name) and name[0] in _LOWER and all(ch in _TAIL for ch in name[1:])


def ancestor_closure(o) -> dict[str, set[str]]:
    """class -> all classes reachable upward, including itself."""
    parent = {c.name: c.superclass for c in o.classes}
    closure = {name: {name} for name in parent}
    changed = True
    while changed:
        changed = False
        for name in closure:
            additions = set()
            for member in closure[name]:
                up = parent.get(member)
                if up is not None and up in closure and up not in closure[name]:
                    additions.add(up)
            if additions:
                closure[name] |= additions
                changed = True
    return closure


def oracle_triplet_violations(new, kg, o) -> set[tuple[str, str]]:
    out: set[tuple[str, str]] = set()
    classes = {c.name for c in o.classes}
    data_props = {p.name: p for p in o.data_properties}
    object_props = {p.name: p for p in o.object_properties}
    ancestors = ancestor_closure(o)

    def subclass(a: str | None, b: str) -> bool:
        return a is not None and b in ancestors.get(a, set())

    def render(t) -> str:
        return f"({t.subject}, {t.predicate}, {t.object})"

    triples = [(t.subject, t.predicate, t.object) for t in new]
    for triple in set(triples):
        if triples.count(triple) >= 2:
            out.add(("duplicate_triplet", f"({triple[0]}, {triple[1]}, {triple[2]})"))

    for t in new:
        if not entity_name_ok(t.subject):
            out.add(("entity_naming", t.subject))
        if t.predicate != ISA and t.predicate in object_props \
                and not entity_name_ok(t.object):
            out.add(("entity_naming", t.object))

    working = dict(kg.entity_classes)
    for t in new:
        if t.predicate != ISA:
            continue
        if t.object not in classes:
            out.add(("unknown_class_assignment", render(t)))
            continue
        current = working.get(t.subject)
        if current is None or current == t.object or subclass(t.object, current):
            working[t.subject] = t.object
        else:
            out.add(("illegal_class_reassignment", render(t)))

    for t in new:
        if t.predicate == ISA:
            continue
        if t.predicate not in data_props and t.predicate not in object_props:
            out.add(("unknown_predicate", t.predicate))
            continue
        subject_class = working.get(t.subject)
        if subject_class is None:
            out.add(("missing_class_assignment", t.subject))
        if t.predicate in data_props:
            prop = data_props[t.predicate]
            if subject_class is not None and not subclass(subject_class, prop.domain):
                out.add(("domain_mismatch", render(t)))
        else:
            prop = object_props[t.predicate]
            object_class = working.get(t.object)
            if object_class is None:
                out.add(("missing_class_assignment", t.object))
            if subject_class is not None and not subclass(subject_class, prop.domain):
                out.add(("domain_mismatch", render(t)))
            if object_class is not None and not subclass(object_class, prop.range):
                out.add(("range_mismatch", render(t)))

    functional = {n for n, p in data_props.items() if p.functional}
    functional |= {n for n, p in object_props.items() if p.functional}
    union = list(kg.triplets) + list(new)
    new_pairs = {(t.subject, t.predicate) for t in new if t.predicate in functional}
    for s, p in new_pairs:
        values = {t.object for t in union if t.subject == s and t.predicate == p}
        if len(values) >= 2:
            out.add(("functional_violation", f"({s}, {p})"))
    return out
