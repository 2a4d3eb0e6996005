"""Prompt templates: single-step rendering and multi-step composition."""

import difflib
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import toml

from snipforge import constants
from snipforge.errors import InvalidSequence, MissingSlot, TemplateUnknown
from snipforge.models import DataPoint, PromptRecord, Task, Testbed

logger = logging.getLogger(__name__)

PLACEHOLDER = re.compile(r"\{(\w+)\}")
PRIOR_ANSWER = "prior_answer"
PRIOR_ANSWER_MARKER = "{prior_answer}"
KNOWN_SLOTS = frozenset({"language", "code", "cut_code", "signature", "docstring", "commit_message", PRIOR_ANSWER})
TASK_KIND = "task"
PROCESSING_KIND = "processing"

DEFAULT_TASKS = {
    "P1": Task.CODE_COMPLETION,
    "P2": Task.CODE_COMPLETION,
    "P3": Task.CODE_COMPLETION,
    "P4": Task.COMMIT_GENERATION,
    "P5": Task.COMMIT_GENERATION,
    "P6": Task.CODE_SUMMARIZATION,
}


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    kind: str
    slots: tuple[str, ...]
    body: str
    composable: bool = False

    def __post_init__(self):
        if self.kind not in (TASK_KIND, PROCESSING_KIND):
            raise ValueError(f"Template {self.id}: kind must be '{TASK_KIND}' or '{PROCESSING_KIND}'")
        unknown = set(self.slots) - KNOWN_SLOTS
        if unknown:
            raise ValueError(f"Template {self.id}: unknown slots {sorted(unknown)}")
        undeclared = set(PLACEHOLDER.findall(self.body)) - set(self.slots)
        if undeclared:
            raise ValueError(f"Template {self.id}: placeholders {sorted(undeclared)} are not declared slots")
        if self.kind == TASK_KIND and PRIOR_ANSWER in self.slots:
            raise ValueError(f"Template {self.id}: only processing templates take '{PRIOR_ANSWER}'")

    @property
    def can_follow(self) -> bool:
        """Whether this template may appear after the first step of a sequence."""
        return self.kind == PROCESSING_KIND or self.composable


@dataclass(frozen=True)
class Catalog:
    version: str
    templates: dict[str, PromptTemplate] = field(default_factory=dict)

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise TemplateUnknown(f"Template '{template_id}' is not in catalog version {self.version}")


def load_catalog(path: str | Path | None = None) -> Catalog:
    """Load a template catalog (TOML or JSON by extension); None loads the bundled one."""
    try:
        if path is None:
            text = resources.files("snipforge").joinpath("data", "templates.toml").read_text(encoding="utf-8")
            data: dict[str, Any] = toml.loads(text)
        else:
            path = Path(path)
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f) if path.suffix == ".json" else toml.load(f)

        templates = {
            template_id: PromptTemplate(
                id=template_id,
                kind=entry["kind"],
                slots=tuple(entry.get("slots", ())),
                body=entry["body"],
                composable=bool(entry.get("composable", False)),
            )
            for template_id, entry in data.get("templates", {}).items()
        }
        return Catalog(version=str(data.get("version", "")), templates=templates)
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise ValueError(f"Error loading template catalog {path or 'bundled'}: {e}")


# -------------------------Slots------------------------- #


def _slot_value(slot: str, point: DataPoint, template_id: str, language: str) -> str:
    if slot == "language":
        return language
    if slot == "code":
        return point.code
    if slot == "signature":
        return point.signature
    if slot == "commit_message":
        return point.commit_message.strip()
    if slot == "cut_code":
        if point.mutation is None:
            raise MissingSlot("cut_code", template_id)
        return point.mutation.prefix
    if slot == "docstring":
        if not point.docstring or not point.doc_valid:
            raise MissingSlot("docstring", template_id)
        return point.docstring
    if slot == PRIOR_ANSWER:
        return PRIOR_ANSWER_MARKER
    raise MissingSlot(slot, template_id)


def _fill(template: PromptTemplate, values: dict[str, str]) -> str:
    def substitute(match: re.Match) -> str:
        return values.get(match.group(1), match.group(0))

    # One pass, so braces inside slot values are never substituted again
    return PLACEHOLDER.sub(substitute, template.body)


def _expected_output(template: PromptTemplate, point: DataPoint) -> str:
    if template.id in ("P1", "P2"):
        if point.mutation is None:
            raise MissingSlot("cut_code", template.id)
        return point.mutation.expected_suffix
    if template.id == "P3":
        return point.code
    if template.id == "P4":
        if point.mutation is None:
            raise MissingSlot("cut_code", template.id)
        diff = difflib.unified_diff(
            point.mutation.prefix.splitlines(keepends=True),
            point.code.splitlines(keepends=True),
            fromfile="before",
            tofile="after",
        )
        return "".join(diff)
    if template.id == "P5":
        return point.commit_message.strip()
    if template.id == "P6":
        return point.docstring or ""
    return point.code


# -------------------------Render------------------------- #


def render(
    template_id: str,
    point: DataPoint,
    task: Task | str | None = None,
    *,
    catalog: Catalog | None = None,
    language: str = constants.DEFAULT_LANGUAGE,
) -> PromptRecord:
    """Render one task template for a point.

    Raises:
        TemplateUnknown: The id is not in the catalog.
        MissingSlot: The point lacks a value the template needs.
        InvalidSequence: The template is a processing template, which needs a prior step.
    """
    catalog = catalog or load_catalog()
    template = catalog.get(template_id)
    if template.kind == PROCESSING_KIND:
        raise InvalidSequence(f"Processing template {template_id} needs a prior step; use compose")

    values = {slot: _slot_value(slot, point, template_id, language) for slot in template.slots}
    return PromptRecord(
        point_id=point.point_id,
        task=Task(task) if task else DEFAULT_TASKS.get(template_id, Task.CODE_COMPLETION),
        template_ids=(template_id,),
        steps=(_fill(template, values),),
        expected_output=_expected_output(template, point),
        catalog_version=catalog.version,
    )


def compose(
    sequence: Sequence[str],
    point: DataPoint,
    task: Task | str | None = None,
    *,
    catalog: Catalog | None = None,
    language: str = constants.DEFAULT_LANGUAGE,
) -> PromptRecord:
    """Render a multi-step sequence: a task template followed by processing steps.

    Steps after the first carry a literal {prior_answer} marker, filled in by
    the caller's model loop. A composable task template (P6) in a later step
    works on the prior answer in place of the code.

    Raises:
        InvalidSequence: Fewer than two steps, a processing template first, or a plain task template later.
        TemplateUnknown: An id is not in the catalog.
        MissingSlot: The point lacks a value a step needs.
    """
    if len(sequence) < 2:
        raise InvalidSequence(f"A multi-step sequence needs at least two templates, got {list(sequence)}")

    catalog = catalog or load_catalog()
    templates = [catalog.get(template_id) for template_id in sequence]
    if templates[0].kind != TASK_KIND:
        raise InvalidSequence(f"Sequence {'+'.join(sequence)} cannot start with processing template {sequence[0]}")
    for template in templates[1:]:
        if not template.can_follow:
            raise InvalidSequence(f"Task template {template.id} cannot follow another step")

    first = render(templates[0].id, point, task, catalog=catalog, language=language)
    steps = [first.steps[0]]
    for template in templates[1:]:
        values = {}
        for slot in template.slots:
            if template.kind == TASK_KIND and slot == "code":
                values[slot] = PRIOR_ANSWER_MARKER
            else:
                values[slot] = _slot_value(slot, point, template.id, language)
        steps.append(_fill(template, values))

    return PromptRecord(
        point_id=point.point_id,
        task=first.task,
        template_ids=tuple(sequence),
        steps=tuple(steps),
        expected_output=first.expected_output,
        catalog_version=catalog.version,
    )


def render_sequence(
    sequence: str,
    point: DataPoint,
    task: Task | str | None = None,
    *,
    catalog: Catalog | None = None,
    language: str = constants.DEFAULT_LANGUAGE,
) -> PromptRecord:
    """Render "P1" as a single step or "P1+P8" as a composed sequence."""
    template_ids = [part.strip() for part in sequence.split("+") if part.strip()]
    if len(template_ids) == 1:
        return render(template_ids[0], point, task, catalog=catalog, language=language)
    return compose(template_ids, point, task, catalog=catalog, language=language)


def render_testbed(
    testbed: Testbed,
    sequences: Sequence[str],
    *,
    catalog: Catalog | None = None,
    language: str = constants.DEFAULT_LANGUAGE,
) -> tuple[list[PromptRecord], int]:
    """Render every sequence for every point of a testbed.

    Returns:
        The records in point then sequence order, and how many renders were skipped for a missing slot.
    """
    catalog = catalog or load_catalog()
    records = []
    skipped = 0
    for point in testbed.points:
        for sequence in sequences:
            try:
                records.append(render_sequence(sequence, point, testbed.task, catalog=catalog, language=language))
            except MissingSlot as e:
                logger.warning("%s: skipping %s for point %s: %s", testbed.name, sequence, point.point_id, e)
                skipped += 1
    return records, skipped
