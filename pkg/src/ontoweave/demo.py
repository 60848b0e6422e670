"""Bundled demo workspace: a small medical-devices domain with scripted
responses for every pipeline call.

``build_demo_workspace`` writes input documents, a QA dataset, a config
file, and a fixture archive authored by replaying the whole pipeline
against a rule-based responder.  The resulting workspace runs fully
offline and deterministically; it exercises one ontology repair cycle
(an inheritance cycle fixed on the second attempt) and one triplet
whose subject and object arrive swapped (repaired without re-prompting).
"""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from .generator import CallbackBackend, FixtureStore, GeneratorRequest, PromptKind
from .pipeline import PipelineConfig, run_pipeline

DEMO_DOMAIN = (
    "Biomedical devices in patient care and the skeletal anatomy they "
    "interact with: monitoring equipment, implants and their materials, "
    "body structures, and the physiological parameters devices measure."
)

_STAKEHOLDERS = """\
1|Clinical Engineers|They keep bedside devices calibrated and certified
2|Biomedical Researchers|They design implants and study device-tissue interaction
3|Regulatory Auditors|They check that devices and materials meet safety standards
"""

_PERSONAS = """\
Clinical Engineers|Ana Ruiz|Senior engineer who calibrates patient monitors
Clinical Engineers|Ben Adeyemi|Technician maintaining infusion and telemetry units
Clinical Engineers|Carla Novak|Specialist in operating-room equipment checks
Clinical Engineers|Dmitri Sokolov|Engineer auditing device firmware baselines
Clinical Engineers|Elena Brandt|Lead for bedside alarm configuration
Clinical Engineers|Farid Qureshi|Engineer tracking device maintenance histories
Biomedical Researchers|Grace Lin|Researcher studying implant material fatigue
Biomedical Researchers|Hugo Mendes|Scientist modelling bone-implant interfaces
Biomedical Researchers|Ines Fischer|Postdoc characterising vascular graft coatings
Biomedical Researchers|Jonas Weber|Engineer prototyping sensor-laden implants
Regulatory Auditors|Karin Olsen|Auditor reviewing material safety dossiers
Regulatory Auditors|Lars Brekke|Inspector validating monitoring-device claims
"""

_SCOPE_MERGED = (
    "The ontology covers biomedical devices used in patient care, the "
    "materials they are built from, the body structures they interact "
    "with, and the physiological parameters they measure. Bone anatomy "
    "is modelled down to functional properties of bone tissue such as "
    "blood cell production. Billing, staffing, and regulatory paperwork "
    "lie outside the domain. The core areas to model are devices, "
    "materials, skeletal structures, functional properties of bone, and "
    "measured parameters."
)

_CQS = [
    "Which body structures is the skeleton composed of?",
    "Which functional properties does a bone structure have?",
    "Which class does a given body structure belong to?",
    "What materials is an implanted device made of?",
    "Which devices are present at a patient's bedside?",
    "What physiological parameters does a monitoring device measure?",
    "Which body structures does a monitoring device observe?",
    "Is a given material classified as a material in the ontology?",
    "Which devices use teflon as a material?",
]

_ONTOLOGY_BATCH_1 = """\
class|BodyStructure|Thing|A part of the body with physical form
class|BoneStructure|BodyStructure|A bone or bony part of the body
class|BoneFunctionalProperty|Thing|A function performed by bone tissue
class|MedicalDevice|Thing|An engineered device used in patient care
object_property|composedOf|BodyStructure|BoneStructure|false|
object_property|hasProperty|BoneStructure|BoneFunctionalProperty|false|
"""

# First attempt for the second batch: Material and PhysiologicalParameter
# inherit from each other, which the validator rejects as a cycle.
_ONTOLOGY_BATCH_2_BAD = """\
class|Material|PhysiologicalParameter|A substance a device is made of
class|PhysiologicalParameter|Material|A measurable quantity of the body
object_property|measures|MedicalDevice|PhysiologicalParameter|false|
object_property|usesMaterial|MedicalDevice|Material|false|
object_property|monitors|MedicalDevice|BodyStructure|false|
"""

_ONTOLOGY_BATCH_2_FIXED = """\
class|Material|Thing|A substance a device is made of
class|PhysiologicalParameter|Thing|A measurable quantity of the body
object_property|measures|MedicalDevice|PhysiologicalParameter|false|
object_property|usesMaterial|MedicalDevice|Material|false|
object_property|monitors|MedicalDevice|BodyStructure|false|
"""

# The last line arrives with subject and object swapped; the engine
# repairs it deterministically without another generator call.
_KG_DOC1 = """\
skeleton|isA|BodyStructure
bone_structure|isA|BoneStructure
hematopoietic_function|isA|BoneFunctionalProperty
skeleton|composedOf|bone_structure
hematopoietic_function|hasProperty|bone_structure
"""

_KG_DOC2 = """\
patient_monitoring_device|isA|MedicalDevice
body_temperature|isA|PhysiologicalParameter
artificial_blood_vessel|isA|MedicalDevice
teflon|isA|Material
patient_monitoring_device|measures|body_temperature
artificial_blood_vessel|usesMaterial|teflon
"""

_KG_CROSS_LINK = "patient_monitoring_device|monitors|skeleton\n"

_DOC_SKELETAL = (
    "The human skeleton is the internal framework of the body. The "
    "skeleton is composed of bone structure: long bones, flat bones, "
    "and irregular bones joined by cartilage and ligaments. Bone "
    "structure carries several functional properties. Chief among them "
    "is hematopoietic function, the production of blood cells inside "
    "the marrow cavities, which classifies as a functional property of "
    "bone tissue. Load bearing and mineral storage are further "
    "functions, but blood cell production is the one clinicians monitor "
    "most closely after marrow-affecting treatments.\n"
)

_DOC_DEVICES = (
    "A patient monitoring device sits at the bedside and measures body "
    "temperature continuously; body temperature is one of the "
    "physiological parameters tracked during recovery. Beyond "
    "monitoring, implanted devices matter: an artificial blood vessel "
    "uses teflon as its material because the polymer resists clotting "
    "and tissue reaction. Monitoring equipment is also pointed at the "
    "skeleton after orthopaedic surgery to watch healing.\n"
)

_QA_ITEMS = [
    {
        "question": "Which structure is the skeleton composed of?",
        "options": ["bone structure", "teflon", "body temperature"],
        "answer": "bone structure",
    },
    {
        "question": "What does the patient monitoring device measure?",
        "options": ["hematopoietic function", "body temperature"],
        "answer": "body temperature",
    },
    {
        "question": "Which material does the artificial blood vessel use?",
        "options": ["steel", "teflon (ptfe)"],
        "answer": "teflon (ptfe)",
    },
]

_QA_RESPONSES = {
    "skeleton composed": "bone structure",
    "monitoring device measure": "body temperature",
    "material does the artificial": "Teflon (PTFE)",
}


def _lead_persona(personas_segment: str) -> str:
    first = personas_segment.splitlines()[0]
    return first.split(" (")[0]


def demo_responder(request: GeneratorRequest) -> str:
    """Deterministic canned responses for every demo pipeline request."""
    kind = request.kind
    if kind == PromptKind.STAKEHOLDERS:
        return _STAKEHOLDERS
    if kind == PromptKind.PERSONAS:
        return _PERSONAS
    if kind == PromptKind.SCOPE:
        lead = _lead_persona(request.segment("personas"))
        return (
            f"Draft scope from the panel led by {lead}: the domain covers "
            "monitoring devices, implant materials, skeletal structures, "
            "and the physiological parameters devices measure. "
            "Administrative workflows are out of scope."
        )
    if kind == PromptKind.SCOPE_MERGE:
        return _SCOPE_MERGED
    if kind == PromptKind.CQ:
        return "\n".join(_CQS)
    if kind == PromptKind.CQ_MERGE:
        return "\n".join(_CQS)
    if kind == PromptKind.ONTOLOGY:
        questions = request.segment("questions")
        if "cq_0006" in questions:
            return _ONTOLOGY_BATCH_2_BAD
        return _ONTOLOGY_BATCH_1
    if kind == PromptKind.FIX_ONTOLOGY:
        return _ONTOLOGY_BATCH_2_FIXED
    if kind == PromptKind.KG:
        chunk = request.segment("chunk")
        graph = request.segment("graph")
        if "skeleton is composed" in chunk:
            return _KG_DOC1 if "skeleton" not in graph else ""
        if "patient_monitoring_device" not in graph:
            return _KG_DOC2
        if "patient_monitoring_device|monitors|skeleton" not in graph:
            return _KG_CROSS_LINK
        return ""
    if kind == PromptKind.QA_EVAL:
        question = request.segment("question")
        for marker, answer in _QA_RESPONSES.items():
            if marker in question:
                return answer
        raise ValueError(f"no demo answer for question: {question!r}")
    raise ValueError(f"no demo response for kind {kind.value}")


def demo_config(workspace: Path) -> PipelineConfig:
    return PipelineConfig(
        domain_description=DEMO_DOMAIN,
        input_document_paths=(
            str(workspace / "docs" / "skeletal.txt"),
            str(workspace / "docs" / "devices.txt"),
        ),
        qa_dataset_path=str(workspace / "qa.jsonl"),
        cq_batch_size=5,
        seed=7,
        backend="scripted",
        fixture_dir=str(workspace / "archive"),
        output_dir=str(workspace / "runs"),
    )


def build_demo_workspace(dest: str | Path) -> Path:
    """Write documents, QA data, config, and the fixture archive.

    The archive is produced by running the full pipeline once against
    the rule-based responder and recording every request/response pair;
    afterwards the workspace replays without any responder.
    """
    dest = Path(dest)
    (dest / "docs").mkdir(parents=True, exist_ok=True)
    (dest / "docs" / "skeletal.txt").write_text(_DOC_SKELETAL, encoding="utf-8")
    (dest / "docs" / "devices.txt").write_text(_DOC_DEVICES, encoding="utf-8")
    with (dest / "qa.jsonl").open("w", encoding="utf-8") as handle:
        for item in _QA_ITEMS:
            handle.write(json.dumps(item, sort_keys=True) + "\n")

    config = demo_config(dest)
    # Paths in the committed config stay relative so the workspace is
    # relocatable; from_file resolves them against the config location.
    (dest / "config.json").write_text(json.dumps({
        **config.to_dict(),
        "input_document_paths": ["docs/skeletal.txt", "docs/devices.txt"],
        "qa_dataset_path": "qa.jsonl",
        "fixture_dir": "archive",
        "output_dir": "runs",
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    recorder = CallbackBackend(demo_responder, FixtureStore(dest / "archive"))
    with tempfile.TemporaryDirectory() as scratch:
        manifest = run_pipeline(config, run_dir=scratch, backend=recorder)
    incomplete = [r["name"] for r in manifest.phases if r["status"] != "complete"]
    if incomplete:
        raise RuntimeError(f"demo recording left phases incomplete: {incomplete}")
    return dest
