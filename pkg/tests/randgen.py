"""Seeded random ontologies, knowledge graphs, and triplet batches,
with optional violation injection for oracle-equivalence testing."""

from __future__ import annotations

import random
from dataclasses import replace

from ontoweave.kg import KnowledgeGraph, Triplet
from ontoweave.ontology import (
    LITERAL_RANGES,
    DataProperty,
    ObjectProperty,
    Ontology,
    OntologyClass,
)

ISA = "isA"


def random_valid_ontology(rng: random.Random, max_classes: int = 20,
                          max_props: int = 30) -> Ontology:
    n_classes = rng.randint(1, max_classes)
    names = [f"Class{i}" for i in range(n_classes)]
    classes = [OntologyClass(names[0], None, "root description")]
    for i in range(1, n_classes):
        parent = rng.choice(names[:i])
        classes.append(OntologyClass(names[i], parent, f"description {i}"))

    data_props: list[DataProperty] = []
    object_props: list[ObjectProperty] = []
    n_props = rng.randint(0, max_props)
    i = 0
    while len(data_props) + len(object_props) < n_props:
        if rng.random() < 0.5:
            data_props.append(DataProperty(
                f"attr{i}", rng.choice(names), rng.choice(LITERAL_RANGES),
                functional=rng.random() < 0.3))
        elif rng.random() < 0.2 and len(data_props) + len(object_props) + 2 <= n_props:
            a, b = rng.choice(names), rng.choice(names)
            object_props.append(ObjectProperty(f"rel{i}", a, b,
                                               inverse_of=f"rel{i}_inv"))
            object_props.append(ObjectProperty(f"rel{i}_inv", b, a,
                                               inverse_of=f"rel{i}"))
        else:
            object_props.append(ObjectProperty(
                f"rel{i}", rng.choice(names), rng.choice(names),
                functional=rng.random() < 0.3))
        i += 1
    return Ontology(tuple(classes), tuple(data_props), tuple(object_props))


def _inject_ontology_violation(rng: random.Random, classes: list[OntologyClass],
                               data_props: list[DataProperty],
                               object_props: list[ObjectProperty]) -> None:
    moves = ["lowercase", "blank_desc", "dup_class", "ghost_parent", "self_loop",
             "second_root", "two_cycle", "bad_prop_name", "dup_prop",
             "bad_data_range", "ghost_domain", "ghost_range", "bad_inverse"]
    move = rng.choice(moves)
    non_root = [i for i, c in enumerate(classes) if c.superclass is not None]
    if move == "lowercase" and classes:
        i = rng.randrange(len(classes))
        classes[i] = replace(classes[i], name=classes[i].name.lower())
    elif move == "blank_desc" and classes:
        i = rng.randrange(len(classes))
        classes[i] = replace(classes[i], description="  ")
    elif move == "dup_class" and classes:
        i = rng.randrange(len(classes))
        victim = classes[i]
        if rng.random() < 0.5 or victim.superclass is None:
            classes.append(replace(victim, description="another view"))
        else:
            other = rng.choice([c.name for c in classes])
            classes.append(replace(victim, superclass=other))
    elif move == "ghost_parent" and non_root:
        i = rng.choice(non_root)
        classes[i] = replace(classes[i], superclass="GhostParent")
    elif move == "self_loop" and non_root:
        i = rng.choice(non_root)
        classes[i] = replace(classes[i], superclass=classes[i].name)
    elif move == "second_root" and non_root:
        i = rng.choice(non_root)
        classes[i] = replace(classes[i], superclass=None)
    elif move == "two_cycle" and len(non_root) >= 2:
        i, j = rng.sample(non_root, 2)
        classes[i] = replace(classes[i], superclass=classes[j].name)
        classes[j] = replace(classes[j], superclass=classes[i].name)
    elif move == "bad_prop_name" and (data_props or object_props):
        if data_props and (not object_props or rng.random() < 0.5):
            i = rng.randrange(len(data_props))
            data_props[i] = replace(data_props[i], name="Bad" + data_props[i].name)
        else:
            i = rng.randrange(len(object_props))
            object_props[i] = replace(object_props[i], name="Bad" + object_props[i].name)
    elif move == "dup_prop" and (data_props or object_props):
        if data_props and (not object_props or rng.random() < 0.5):
            data_props.append(rng.choice(data_props))
        else:
            object_props.append(rng.choice(object_props))
    elif move == "bad_data_range" and data_props:
        i = rng.randrange(len(data_props))
        data_props[i] = replace(data_props[i], range="floaty")
    elif move == "ghost_domain" and (data_props or object_props):
        if data_props and (not object_props or rng.random() < 0.5):
            i = rng.randrange(len(data_props))
            data_props[i] = replace(data_props[i], domain="GhostDomain")
        else:
            i = rng.randrange(len(object_props))
            object_props[i] = replace(object_props[i], domain="GhostDomain")
    elif move == "ghost_range" and object_props:
        i = rng.randrange(len(object_props))
        object_props[i] = replace(object_props[i], range="GhostRange")
    elif move == "bad_inverse" and object_props:
        i = rng.randrange(len(object_props))
        target = rng.choice(["ghost_rel"] + [p.name for p in object_props])
        object_props[i] = replace(object_props[i], inverse_of=target)


def random_ontology(rng: random.Random, max_classes: int = 20,
                    max_props: int = 30,
                    violation_rate: float = 0.3) -> Ontology:
    """A random ontology; with probability ``violation_rate`` it carries
    one to three injected defects (of unknown resulting violation set —
    the oracle decides what they amount to)."""
    o = random_valid_ontology(rng, max_classes, max_props)
    classes = list(o.classes)
    data_props = list(o.data_properties)
    object_props = list(o.object_properties)
    if rng.random() < violation_rate:
        for _ in range(rng.randint(1, 3)):
            _inject_ontology_violation(rng, classes, data_props, object_props)
    return Ontology(tuple(classes), tuple(data_props), tuple(object_props))


# ---------------------------------------------------------------------------
# KG instances

def _descendants_or_self(o: Ontology, target: str) -> set[str]:
    parent = {c.name: c.superclass for c in o.classes}
    out = set()
    for name in parent:
        node: str | None = name
        seen = set()
        while node is not None and node not in seen:
            if node == target:
                out.add(name)
                break
            seen.add(node)
            node = parent.get(node)
    return out


def random_class_tree(rng: random.Random, max_classes: int = 15) -> Ontology:
    n = rng.randint(2, max_classes)
    names = [f"Class{i}" for i in range(n)]
    classes = [OntologyClass(names[0], None, "root")]
    classes += [OntologyClass(names[i], rng.choice(names[:i]), f"d{i}")
                for i in range(1, n)]
    return Ontology(tuple(classes))


def random_kg_instance(rng: random.Random, max_classes: int = 15,
                       max_triplets: int = 50):
    """A valid (ontology, kg) pair plus a new batch with injected
    violations; returns (ontology, kg, batch)."""
    o = random_valid_ontology(rng, max_classes, max_props=12)
    names = [c.name for c in o.classes]
    entities = {f"entity_{i}": rng.choice(names) for i in range(rng.randint(2, 12))}
    functional_used: set[tuple[str, str]] = set()

    def candidates(cls: str) -> list[str]:
        allowed = _descendants_or_self(o, cls)
        return [e for e, c in entities.items() if c in allowed]

    triplets: list[Triplet] = []
    seen: set[tuple[str, str, str]] = set()
    kinds: dict[str, str] = {}
    for _ in range(rng.randint(0, max_triplets)):
        if o.object_properties and (not o.data_properties or rng.random() < 0.7):
            p = rng.choice(o.object_properties)
            subjects, objects = candidates(p.domain), candidates(p.range)
            if not subjects or not objects:
                continue
            t = Triplet(rng.choice(subjects), p.name, rng.choice(objects))
            kinds[p.name] = "object"
        elif o.data_properties:
            p = rng.choice(o.data_properties)
            subjects = candidates(p.domain)
            if not subjects:
                continue
            t = Triplet(rng.choice(subjects), p.name, f"value_{rng.randint(0, 9)}")
            kinds[p.name] = "data"
        else:
            continue
        if p.functional:
            if (t.subject, t.predicate) in functional_used:
                continue
            functional_used.add((t.subject, t.predicate))
        if (t.subject, t.predicate, t.object) in seen:
            continue
        seen.add((t.subject, t.predicate, t.object))
        triplets.append(t)
    kg = KnowledgeGraph(ontology_ref="random", triplets=tuple(triplets),
                        entity_classes=dict(entities), predicate_kinds=kinds)

    batch: list[Triplet] = []
    fresh = 0

    def fresh_entity(cls: str) -> str:
        nonlocal fresh
        name = f"new_entity_{fresh}"
        fresh += 1
        batch.append(Triplet(name, ISA, cls))
        return name

    for _ in range(rng.randint(1, 8)):
        roll = rng.random()
        if roll < 0.35 and o.object_properties:
            p = rng.choice(o.object_properties)
            if p.domain in names and p.range in names:
                batch.append(Triplet(fresh_entity(p.domain), p.name,
                                     fresh_entity(p.range)))
        elif roll < 0.45:
            batch.append(Triplet(fresh_entity(rng.choice(names)), ISA,
                                 "GhostClass"))
        elif roll < 0.55 and entities:
            subject = rng.choice(sorted(entities))
            batch.append(Triplet(subject, "ghostRel", subject))
        elif roll < 0.65:
            batch.append(Triplet("BadName", ISA, rng.choice(names)))
        elif roll < 0.75 and entities:
            subject, cls = rng.choice(sorted(entities.items()))
            others = [n for n in names
                      if n != cls and cls not in _descendants_or_self(o, n)
                      and n not in _descendants_or_self(o, cls)]
            widening = {c.name: c.superclass for c in o.classes}.get(cls)
            choices = others + ([widening] if widening else [])
            if choices:
                batch.append(Triplet(subject, ISA, rng.choice(choices)))
        elif roll < 0.85 and o.object_properties:
            p = rng.choice(o.object_properties)
            outside = [e for e, c in entities.items()
                       if c not in _descendants_or_self(o, p.domain)]
            inside = candidates(p.range)
            if outside and inside:
                batch.append(Triplet(rng.choice(outside), p.name,
                                     rng.choice(inside)))
        elif roll < 0.92 and batch:
            batch.append(rng.choice(batch))
        else:
            batch.append(Triplet(f"dangling_{fresh}", "ghostRel2", "nowhere"))
    return o, kg, batch
