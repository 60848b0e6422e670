"""Brute-force oracle for the ontology constraint catalogue.

Independent of the production checker on purpose: names are tested with
explicit character sets instead of regexes, cycles are found by mutual
reachability over a fixpoint closure instead of an SCC algorithm, and
every rule is re-derived from scratch.  Returns a set of
(code, subject) pairs for comparison.
"""

from __future__ import annotations

import string

LITERALS = {"text", "integer", "decimal", "boolean", "date"}
_IDENT_TAIL = set(string.ascii_letters + string.digits + "_")


def _class_name_ok(name: str) -> bool:
    return (bool(name) and name[0] in string.ascii_uppercase
            and all(ch in _IDENT_TAIL for ch in name[1:]))


def _property_name_ok(name: str) -> bool:
    return (bool(name) and name[0] in string.ascii_lowercase
            and all(ch in _IDENT_TAIL for ch in name[1:]))


def _reachable(edges: set[tuple[str, str]]) -> dict[str, set[str]]:
    """Transitive closure by repeated expansion until fixpoint."""
    nodes = {a for a, _ in edges} | {b for _, b in edges}
    reach = {n: {b for a, b in edges if a == n} for n in nodes}
    changed = True
    while changed:
        changed = False
        for n in nodes:
            expanded = set(reach[n])
            for mid in list(reach[n]):
                expanded |= reach.get(mid, set())
            if expanded != reach[n]:
                reach[n] = expanded
                changed = True
    return reach


def oracle_ontology_violations(o) -> set[tuple[str, str]]:
    out: set[tuple[str, str]] = set()
    entries = list(o.classes)
    names = [c.name for c in entries]
    name_set = set(names)

    for name in name_set:
        if not _class_name_ok(name):
            out.add(("lowercase_class_name", name))
    for name in name_set:
        if sum(1 for n in names if n == name) >= 2:
            out.add(("duplicate_class", name))
    for c in entries:
        if not c.description.strip():
            out.add(("missing_description", c.name))
    for c in entries:
        if c.superclass is not None and c.superclass not in name_set:
            out.add(("unknown_superclass", c.name))
    for c in entries:
        if c.superclass == c.name:
            out.add(("self_inheritance", c.name))

    parents_declared: dict[str, set[str]] = {}
    for c in entries:
        if c.superclass is not None:
            parents_declared.setdefault(c.name, set()).add(c.superclass)
    for name, parents in parents_declared.items():
        if len(parents) >= 2:
            out.add(("multiple_superclasses", name))

    edges = {
        (c.name, c.superclass)
        for c in entries
        if c.superclass is not None and c.superclass != c.name
        and c.superclass in name_set
    }
    reach = _reachable(edges)
    in_cycle = sorted(n for n in reach if n in reach[n])
    grouped: list[set[str]] = []
    for node in in_cycle:
        for group in grouped:
            probe = next(iter(group))
            if probe in reach[node] and node in reach[probe]:
                group.add(node)
                break
        else:
            grouped.append({node})
    for group in grouped:
        out.add(("inheritance_cycle", ",".join(sorted(group))))

    roots = sorted({c.name for c in entries if c.superclass is None})
    if entries and len(roots) != 1:
        out.add(("multiple_roots", ",".join(roots)))

    all_props = [("data", p) for p in o.data_properties]
    all_props += [("object", p) for p in o.object_properties]
    prop_names = [p.name for _, p in all_props]
    for name in set(prop_names):
        if not _property_name_ok(name):
            out.add(("property_naming", name))
        if sum(1 for n in prop_names if n == name) >= 2:
            out.add(("duplicate_property", name))
    for kind, p in all_props:
        if p.domain not in name_set:
            out.add(("unknown_domain", p.name))
        if kind == "data" and p.range not in LITERALS:
            out.add(("unknown_range", p.name))
        if kind == "object" and p.range not in name_set:
            out.add(("unknown_range", p.name))
    object_entries = list(o.object_properties)
    for p in object_entries:
        if p.inverse_of is None:
            continue
        candidates = [q for q in object_entries if q.name == p.inverse_of]
        if not any(q.domain == p.range and q.range == p.domain for q in candidates):
            out.add(("bad_inverse", p.name))
    return out
