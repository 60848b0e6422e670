import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ontoweave.kg import KnowledgeGraph, Triplet
from ontoweave.ontology import (
    DataProperty,
    ObjectProperty,
    Ontology,
    OntologyClass,
)

FIXTURES = Path(__file__).parent.parent / "fixtures"


def make_anatomy_ontology() -> Ontology:
    """Seven classes and four object properties covering the multi-hop
    check fixtures (skeleton / monitoring device / implant material)."""
    return Ontology(
        classes=(
            OntologyClass("Thing", None, "Root of the class hierarchy."),
            OntologyClass("BodyStructure", "Thing", "A part of the body."),
            OntologyClass("BoneStructure", "BodyStructure", "A bony body part."),
            OntologyClass("BoneFunctionalProperty", "Thing",
                          "A function performed by bone tissue."),
            OntologyClass("MedicalDevice", "Thing", "A device used in care."),
            OntologyClass("PhysiologicalParameter", "Thing",
                          "A measurable quantity of the body."),
            OntologyClass("Material", "Thing", "A substance a device is made of."),
        ),
        data_properties=(
            DataProperty("serialNumber", "MedicalDevice", "text", functional=True),
        ),
        object_properties=(
            ObjectProperty("composedOf", "BodyStructure", "BoneStructure"),
            ObjectProperty("hasProperty", "BoneStructure", "BoneFunctionalProperty"),
            ObjectProperty("measures", "MedicalDevice", "PhysiologicalParameter"),
            ObjectProperty("usesMaterial", "MedicalDevice", "Material"),
            ObjectProperty("monitors", "MedicalDevice", "BodyStructure"),
        ),
    )


def make_anatomy_kg() -> KnowledgeGraph:
    return KnowledgeGraph(
        ontology_ref="anatomy",
        triplets=(
            Triplet("skeleton", "composedOf", "bone_structure"),
            Triplet("bone_structure", "hasProperty", "hematopoietic_function"),
            Triplet("patient_monitoring_device", "measures", "body_temperature"),
            Triplet("artificial_blood_vessel", "usesMaterial", "teflon"),
        ),
        entity_classes={
            "skeleton": "BodyStructure",
            "bone_structure": "BoneStructure",
            "hematopoietic_function": "BoneFunctionalProperty",
            "patient_monitoring_device": "MedicalDevice",
            "body_temperature": "PhysiologicalParameter",
            "artificial_blood_vessel": "MedicalDevice",
            "teflon": "Material",
        },
        predicate_kinds={
            "composedOf": "object",
            "hasProperty": "object",
            "measures": "object",
            "usesMaterial": "object",
        },
    )


@pytest.fixture
def anatomy_ontology() -> Ontology:
    return make_anatomy_ontology()


@pytest.fixture
def anatomy_kg() -> KnowledgeGraph:
    return make_anatomy_kg()
