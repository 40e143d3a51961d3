"""Prompt catalog: seven strategy families, four variants each by default.

Every template carries exactly one {{transcript}} placeholder and ends with a
fixed answer-format directive so downstream label parsing stays reliable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .dataset import Transcript
from .errors import BadTemplate, EmptyCatalog, ParseError, UnknownFamily
from .hashutil import canonical_json, sha256_text

PLACEHOLDER = "{{transcript}}"
ANSWER_DIRECTIVE = "Answer with exactly: LABEL: DEPRESSED or LABEL: NOT_DEPRESSED"
DEFAULT_PER_FAMILY = 4
TEMPLATE_VERSION = "1.0.0"


class StrategyFamily(str, Enum):
    DI = "DI"
    RP = "RP"
    COT = "CoT"
    SC = "SC"
    CBP = "CBP"
    ACP = "ACP"
    SR = "SR"


FAMILY_DISPLAY = {
    StrategyFamily.DI: "Direct Instruction",
    StrategyFamily.RP: "Role-Based Prompting",
    StrategyFamily.COT: "Chain-of-Thought",
    StrategyFamily.SC: "Self-Consistency",
    StrategyFamily.CBP: "Constraint-Based Prompting",
    StrategyFamily.ACP: "Adaptive Chain-of-Thought",
    StrategyFamily.SR: "Structured Reasoning",
}

# Alternate spellings seen in the wild map onto the canonical codes.
FAMILY_ALIASES = {
    "SCP": StrategyFamily.SC,
    "SF": StrategyFamily.SR,
}


def resolve_family(code: str) -> StrategyFamily:
    """Map a family code or alias (case-insensitive) to its enum member."""
    upper = code.upper()
    for family in StrategyFamily:
        if family.value.upper() == upper:
            return family
    if upper in FAMILY_ALIASES:
        return FAMILY_ALIASES[upper]
    known = ", ".join(f.value for f in StrategyFamily)
    raise UnknownFamily(f"unknown strategy family {code!r} (known: {known})")


def family_of_prompt_id(prompt_id: str) -> StrategyFamily:
    code, sep, _ = prompt_id.rpartition("-")
    if not sep or not code:
        raise UnknownFamily(f"prompt id {prompt_id!r} is not of the form FAMILY-N")
    return resolve_family(code)


@dataclass(frozen=True)
class PromptVariant:
    id: str
    family: StrategyFamily
    template: str
    style_notes: str = ""
    version: str = TEMPLATE_VERSION

    def violations(self) -> list:
        problems = []
        code, sep, index = self.id.rpartition("-")
        if not sep or not index.isdigit() or not (1 <= int(index) <= 4):
            problems.append(f"{self.id}: id must be FAMILY-N with N in 1..4")
        elif code != self.family.value:
            problems.append(f"{self.id}: id prefix does not match family {self.family.value}")
        if not self.template:
            problems.append(f"{self.id}: empty template")
        elif self.template.count(PLACEHOLDER) != 1:
            problems.append(
                f"{self.id}: template must contain exactly one {PLACEHOLDER}, "
                f"found {self.template.count(PLACEHOLDER)}"
            )
        return problems

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "family": self.family.value,
            "template": self.template,
            "style_notes": self.style_notes,
            "version": self.version,
        }


@dataclass(frozen=True)
class PromptCatalog:
    variants: tuple

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))

    def __len__(self) -> int:
        return len(self.variants)

    @property
    def catalog_hash(self) -> str:
        return sha256_text(canonical_json([v.to_dict() for v in self.variants]))

    def get(self, prompt_id: str) -> PromptVariant | None:
        for v in self.variants:
            if v.id == prompt_id:
                return v
        return None

    def to_dict(self) -> dict:
        return {
            "variants": [v.to_dict() for v in self.variants],
            "catalog_hash": self.catalog_hash,
        }


# --- default templates ------------------------------------------------------
# One entry per family: four (style_notes, template body) pairs. The answer
# directive is appended uniformly at build time.

_DI_TEMPLATES = [
    ("plain classification order",
     "Read the interview transcript below and decide whether the speaker shows "
     "depression.\n\nTranscript:\n{{transcript}}\n\n"),
    ("label-only instruction",
     "Classify the following interview transcript as depressed or not depressed. "
     "Base your decision only on the transcript text and reply with the label "
     "alone.\n\n{{transcript}}\n\n"),
    ("binary screening framing",
     "Your task is a binary screening decision. Given the transcript, state "
     "whether depression is present.\n\nTranscript: {{transcript}}\n\n"),
    ("terse imperative",
     "Determine whether the person interviewed below is depressed.\n\n"
     "{{transcript}}\n\n"),
]

_RP_TEMPLATES = [
    ("clinical psychologist persona",
     "You are an experienced clinical psychologist reviewing an interview "
     "transcript for signs of depression. Give your professional judgment.\n\n"
     "Transcript:\n{{transcript}}\n\n"),
    ("screening nurse persona",
     "You are a mental-health screening nurse doing intake triage. Read the "
     "interview below and record your screening outcome.\n\n{{transcript}}\n\n"),
    ("psychiatrist persona",
     "Act as a psychiatrist performing a structured chart review. The following "
     "transcript is the only evidence available; state your screening "
     "conclusion.\n\nTranscript: {{transcript}}\n\n"),
    ("clinical social worker persona",
     "You are a licensed clinical social worker summarizing an intake interview "
     "for the care team. Based on the transcript, does the client present with "
     "depression?\n\n{{transcript}}\n\n"),
]

_COT_TEMPLATES = [
    ("think step by step",
     "Read the transcript and think step by step about the speaker's mood, "
     "energy, sleep, and outlook before deciding whether depression is "
     "present.\n\nTranscript:\n{{transcript}}\n\n"),
    ("explicit intermediate reasoning",
     "Work through the transcript below carefully. First list the relevant "
     "observations, then reason from them step by step to a screening "
     "decision.\n\n{{transcript}}\n\n"),
    ("evidence-then-decision chain",
     "Think step by step: summarize what the speaker says about their daily "
     "life, note any mood indicators, and only then conclude whether they are "
     "depressed.\n\nTranscript: {{transcript}}\n\n"),
    ("short reasoning chain",
     "Reason briefly, step by step, about the following interview before giving "
     "a final depression screening label.\n\n{{transcript}}\n\n"),
]

_SC_TEMPLATES = [
    ("reason then self-check",
     "Think step by step about whether the speaker below is depressed. When you "
     "have a tentative answer, re-check your reasoning for mistakes before "
     "committing to the final label.\n\nTranscript:\n{{transcript}}\n\n"),
    ("two-pass verification",
     "First pass: reason through the transcript and propose a label. Second "
     "pass: verify each step of your reasoning still holds, then give the final "
     "label.\n\n{{transcript}}\n\n"),
    ("consistency audit",
     "Reason step by step toward a depression screening decision, then audit "
     "your own chain of reasoning for contradictions. Report the label that "
     "survives the audit.\n\nTranscript: {{transcript}}\n\n"),
    ("re-derive before answering",
     "Derive a screening decision for the transcript below, then independently "
     "re-derive it a second time. If the two derivations disagree, resolve the "
     "conflict before answering.\n\n{{transcript}}\n\n"),
]

_CBP_TEMPLATES = [
    ("must cite evidence spans",
     "Decide whether the speaker is depressed. Constraint: you may only rely on "
     "statements that appear verbatim in the transcript, and you must identify "
     "the phrases that drive your decision before giving the label.\n\n"
     "Transcript:\n{{transcript}}\n\n"),
    ("counterfactual contrast",
     "Consider the transcript below. Ask yourself: what would this interview "
     "look like if the speaker were not depressed? Compare that counterfactual "
     "against the actual text, then decide.\n\n{{transcript}}\n\n"),
    ("rule-bound screening",
     "Apply these constraints while screening the transcript: ignore small "
     "talk, weigh statements about mood and functioning most heavily, and do "
     "not infer anything the speaker does not say. Then give your label.\n\n"
     "Transcript: {{transcript}}\n\n"),
    ("evidence-for-and-against",
     "List the strongest evidence that the speaker is depressed and the "
     "strongest evidence that they are not, using only the transcript. Weigh "
     "the two sides, then answer.\n\n{{transcript}}\n\n"),
]

_ACP_TEMPLATES = [
    ("depth adapted to difficulty",
     "Screen the transcript for depression. Use as few or as many reasoning "
     "steps as the difficulty warrants: obvious cases need one line, ambiguous "
     "ones a fuller chain.\n\nTranscript:\n{{transcript}}\n\n"),
    ("triage then reason",
     "First judge how ambiguous the following interview is. If it is clear-cut, "
     "answer directly; if not, reason step by step before answering.\n\n"
     "{{transcript}}\n\n"),
    ("escalating scrutiny",
     "Start with a quick read of the transcript. Escalate to detailed step-by-"
     "step analysis only where the quick read leaves doubt, then give the "
     "final screening label.\n\nTranscript: {{transcript}}\n\n"),
    ("budgeted reasoning",
     "You have a limited reasoning budget. Spend it on the passages of the "
     "transcript most informative about depression, skip the rest, and "
     "answer.\n\n{{transcript}}\n\n"),
]

_SR_TEMPLATES = [
    ("fixed section outline",
     "Analyze the transcript in four sections: 1) mood indicators, 2) sleep and "
     "energy, 3) interest and functioning, 4) screening decision. Fill in each "
     "section, then answer.\n\nTranscript:\n{{transcript}}\n\n"),
    ("symptom checklist",
     "Go through this checklist against the transcript: low mood, anhedonia, "
     "sleep disturbance, fatigue, worthlessness, concentration problems. Note "
     "which are present, then give the label.\n\n{{transcript}}\n\n"),
    ("structured pro/con table",
     "Build a structured summary of the interview: (a) observations, "
     "(b) indicators supporting depression, (c) indicators against, "
     "(d) conclusion. Complete all four parts, then answer.\n\n"
     "Transcript: {{transcript}}\n\n"),
    ("numbered findings report",
     "Write a numbered findings report for the transcript below: finding 1, "
     "finding 2, finding 3, then a one-line screening conclusion.\n\n"
     "{{transcript}}\n\n"),
]

_TEMPLATES = {
    StrategyFamily.DI: _DI_TEMPLATES,
    StrategyFamily.RP: _RP_TEMPLATES,
    StrategyFamily.COT: _COT_TEMPLATES,
    StrategyFamily.SC: _SC_TEMPLATES,
    StrategyFamily.CBP: _CBP_TEMPLATES,
    StrategyFamily.ACP: _ACP_TEMPLATES,
    StrategyFamily.SR: _SR_TEMPLATES,
}


def generate_catalog(
    families=None,
    per_family: int = DEFAULT_PER_FAMILY,
    indices=None,
) -> PromptCatalog:
    """Build the prompt catalog, optionally filtered.

    families: iterable of family codes/aliases (None = all seven).
    per_family: variants taken per family, 2..4.
    indices: iterable of 1-based variant indices to keep.
    """
    if not (2 <= per_family <= DEFAULT_PER_FAMILY):
        raise ValueError(f"per_family must be in 2..{DEFAULT_PER_FAMILY}")
    if families is None:
        selected_families = list(StrategyFamily)
    else:
        selected_families = []
        for code in families:
            family = resolve_family(code)
            if family not in selected_families:
                selected_families.append(family)
        selected_families.sort(key=list(StrategyFamily).index)
    wanted_indices = set(indices) if indices is not None else None

    variants = []
    for family in selected_families:
        for idx, (notes, body) in enumerate(_TEMPLATES[family][:per_family], start=1):
            if wanted_indices is not None and idx not in wanted_indices:
                continue
            variants.append(
                PromptVariant(
                    id=f"{family.value}-{idx}",
                    family=family,
                    template=body + ANSWER_DIRECTIVE,
                    style_notes=notes,
                )
            )
    if not variants:
        raise EmptyCatalog("catalog filters selected zero variants")
    return PromptCatalog(tuple(variants))


def render_prompt(variant: PromptVariant, transcript: Transcript) -> str:
    """Substitute the transcript text into the template, verbatim."""
    count = variant.template.count(PLACEHOLDER)
    if count != 1:
        raise BadTemplate(
            f"template for {variant.id} must contain exactly one {PLACEHOLDER}, found {count}"
        )
    return variant.template.replace(PLACEHOLDER, transcript.text)


def validate_catalog(catalog: PromptCatalog, profile: str | None = "default") -> list:
    """Return a list of invariant violations; empty means the catalog is valid.

    With the default profile the catalog must hold exactly 28 variants, four
    per family. Pass profile=None to validate filtered catalogs.
    """
    report = []
    seen = set()
    for variant in catalog.variants:
        if variant.id in seen:
            report.append(f"duplicate prompt id {variant.id}")
        seen.add(variant.id)
        report.extend(variant.violations())

    if profile == "default":
        expected_total = len(StrategyFamily) * DEFAULT_PER_FAMILY
        if len(catalog) != expected_total:
            report.append(f"catalog has {len(catalog)} variants, expected {expected_total}")
        per_family = {}
        for variant in catalog.variants:
            per_family[variant.family] = per_family.get(variant.family, 0) + 1
        for family in StrategyFamily:
            count = per_family.get(family, 0)
            if count != DEFAULT_PER_FAMILY:
                report.append(
                    f"family {family.value} has {count} variants, expected {DEFAULT_PER_FAMILY}"
                )
    return report


# --- persistence ------------------------------------------------------------

def write_catalog(catalog: PromptCatalog, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(catalog.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_catalog(path) -> PromptCatalog:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict) or "variants" not in data:
        raise ParseError(f"{path.name}: expected an object with a 'variants' array")
    variants = []
    for i, row in enumerate(data["variants"]):
        try:
            variants.append(
                PromptVariant(
                    id=row["id"],
                    family=resolve_family(row["family"]),
                    template=row["template"],
                    style_notes=row.get("style_notes", ""),
                    version=row.get("version", TEMPLATE_VERSION),
                )
            )
        except KeyError as exc:
            raise ParseError(f"{path.name}: variant {i} missing field {exc}") from exc
    catalog = PromptCatalog(tuple(variants))
    stored = data.get("catalog_hash")
    if stored is not None and stored != catalog.catalog_hash:
        raise ParseError(
            f"{path.name}: catalog_hash does not match content "
            f"(stored {stored[:12]}…, computed {catalog.catalog_hash[:12]}…)"
        )
    return catalog
