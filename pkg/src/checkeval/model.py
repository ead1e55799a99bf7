"""Domain types: criteria, checklists, verdicts, assessments and records.

Every type here is a frozen dataclass validated at construction, so values
can be shared freely between threads.
"""

from __future__ import annotations

import enum
import hashlib
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType

from .errors import InvalidArgumentError

BUILTIN_CRITERIA = ("consistency", "coherence", "relevance", "fluency")


@dataclass(frozen=True)
class Criterion:
    """A named quality dimension and the definition text used inside prompts.

    ``label`` is the capitalised display name ("Relevance") and ``adjective``
    fills the "a ___ text summary" slot of the generation prompt.
    """

    name: str
    definition: str
    label: str = ""
    adjective: str = ""

    def __post_init__(self) -> None:
        name = self.name.strip().lower() if isinstance(self.name, str) else ""
        if not name:
            raise InvalidArgumentError("criterion name must be non-empty")
        object.__setattr__(self, "name", name)
        if name in BUILTIN_CRITERIA and not self.definition.strip():
            raise InvalidArgumentError(f"built-in criterion {name!r} needs a definition")
        if not self.label:
            object.__setattr__(self, "label", name[:1].upper() + name[1:])
        if not self.adjective:
            object.__setattr__(self, "adjective", name)


class EvaluationMode(enum.Enum):
    REFERENCE_GUIDED = "reference-guided"
    CANDIDATE_GUIDED = "candidate-guided"
    CRITERION_GUIDED = "criterion-guided"

    @classmethod
    def parse(cls, value: str | EvaluationMode) -> EvaluationMode:
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for mode in cls:
            if key in (mode.value, mode.value.split("-")[0]):
                return mode
        raise InvalidArgumentError(
            f"unknown evaluation mode {value!r}; expected one of {[m.value for m in cls]}"
        )

    @property
    def generation_source(self) -> str:
        """Which text the checklist is generated from."""
        return {
            EvaluationMode.REFERENCE_GUIDED: "reference",
            EvaluationMode.CANDIDATE_GUIDED: "candidate",
            EvaluationMode.CRITERION_GUIDED: "criterion",
        }[self]


@dataclass(frozen=True)
class Provenance:
    """Where a checklist came from.

    ``source`` is ``"reference"`` or ``"candidate"`` for checklists generated
    from a text (with ``text_id`` naming it) and ``"criterion"`` for
    checklists generated from the criterion definition alone.
    """

    source: str
    text_id: str | None = None

    def __post_init__(self) -> None:
        if self.source not in ("reference", "candidate", "criterion", "text"):
            raise InvalidArgumentError(f"unknown provenance source {self.source!r}")
        if self.source == "criterion" and self.text_id is not None:
            raise InvalidArgumentError("criterion-only provenance carries no text id")

    @classmethod
    def from_text(cls, text_id: str | None, role: str = "text") -> Provenance:
        return cls(source=role, text_id=text_id)

    @classmethod
    def criterion_only(cls) -> Provenance:
        return cls(source="criterion")

    @property
    def from_criterion_only(self) -> bool:
        return self.source == "criterion"

    def matches(self, mode: EvaluationMode) -> bool:
        return self.source == mode.generation_source

    def to_dict(self) -> dict:
        return {"source": self.source, "text_id": self.text_id}


@dataclass(frozen=True)
class ChecklistItem:
    index: int
    question: str

    def __post_init__(self) -> None:
        if not isinstance(self.index, int) or self.index < 1:
            raise InvalidArgumentError(f"checklist index must be a positive integer, got {self.index!r}")
        if not self.question or not self.question.strip():
            raise InvalidArgumentError(f"checklist item {self.index} is empty")


@dataclass(frozen=True)
class Checklist:
    criterion: Criterion
    items: tuple[ChecklistItem, ...]
    provenance: Provenance = field(default_factory=Provenance.criterion_only)

    def __post_init__(self) -> None:
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise InvalidArgumentError("a checklist needs at least one item")
        seen: set[str] = set()
        for expected, item in enumerate(items, start=1):
            if item.index != expected:
                raise InvalidArgumentError(
                    f"checklist indices must run 1..n; item {expected} has index {item.index}"
                )
            if item.question in seen:
                raise InvalidArgumentError(f"duplicate checklist question: {item.question!r}")
            seen.add(item.question)

    @classmethod
    def from_questions(
        cls,
        criterion: Criterion,
        questions: Iterable[str],
        provenance: Provenance | None = None,
    ) -> Checklist:
        items = tuple(ChecklistItem(i, q) for i, q in enumerate(questions, start=1))
        return cls(criterion, items, provenance or Provenance.criterion_only())

    @property
    def questions(self) -> list[str]:
        return [item.question for item in self.items]

    def __len__(self) -> int:
        return len(self.items)

    @property
    def digest(self) -> str:
        """Content identity used as ``Assessment.checklist_ref``."""
        h = hashlib.sha256()
        h.update(self.criterion.name.encode("utf-8"))
        for q in self.questions:
            h.update(b"\x00")
            h.update(q.encode("utf-8"))
        return h.hexdigest()

    def render(self) -> str:
        """Numbered one-question-per-line form used inside prompts."""
        return "\n".join(f"{item.index}. {item.question}" for item in self.items)


@dataclass(frozen=True)
class Verdict:
    item_index: int
    present: bool
    rationale: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.present, bool):
            raise InvalidArgumentError("verdicts are strictly binary")


def normalized_score(raw: int, total: int) -> float:
    """Fraction of checklist items judged present."""
    if isinstance(raw, bool) or isinstance(total, bool):
        raise InvalidArgumentError("raw and total must be integers")
    if total < 1:
        raise InvalidArgumentError(f"total must be >= 1, got {total}")
    if raw < 0 or raw > total:
        raise InvalidArgumentError(f"raw must lie in [0, {total}], got {raw}")
    return raw / total


def f1(recall: float, precision: float) -> float:
    """Harmonic mean of recall and precision; 0 when both are 0."""
    for name, value in (("recall", recall), ("precision", precision)):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
            raise InvalidArgumentError(f"{name} must lie in [0, 1], got {value!r}")
    if recall + precision == 0:
        return 0.0
    # exact rational arithmetic, so f1(a, a) == a and the result never leaves [min, max]
    r, p = Fraction(recall), Fraction(precision)
    return float(2 * r * p / (r + p))


@dataclass(frozen=True)
class Assessment:
    checklist_ref: str
    verdicts: tuple[Verdict, ...]

    def __post_init__(self) -> None:
        verdicts = tuple(sorted(self.verdicts, key=lambda v: v.item_index))
        object.__setattr__(self, "verdicts", verdicts)
        if not verdicts:
            raise InvalidArgumentError("an assessment needs at least one verdict")
        indices = [v.item_index for v in verdicts]
        if indices != list(range(1, len(verdicts) + 1)):
            raise InvalidArgumentError(
                f"verdict indices must cover items 1..{len(verdicts)} exactly once, got {indices}"
            )

    @classmethod
    def for_checklist(cls, checklist: Checklist, verdicts: Iterable[Verdict]) -> Assessment:
        verdicts = tuple(verdicts)
        expected = {item.index for item in checklist.items}
        got = [v.item_index for v in verdicts]
        if len(got) != len(expected) or set(got) != expected:
            raise InvalidArgumentError(
                f"verdicts {sorted(got)} do not cover checklist items 1..{len(checklist)} exactly once"
            )
        return cls(checklist.digest, verdicts)

    @property
    def raw_score(self) -> int:
        return sum(1 for v in self.verdicts if v.present)

    @property
    def normalized_score(self) -> float:
        return normalized_score(self.raw_score, len(self.verdicts))


@dataclass(frozen=True)
class EvalRecord:
    """One unit of evaluation.

    ``doc_id`` groups records sharing a source document; it drives the
    per-document correlation mode and defaults to ``record_id``.
    """

    record_id: str
    candidate_text: str
    reference_text: str | None = None
    human_scores: Mapping[str, float] = field(default_factory=dict)
    doc_id: str | None = None
    system_id: str | None = None

    def __post_init__(self) -> None:
        if not str(self.record_id):
            raise InvalidArgumentError("record_id must be non-empty")
        if not isinstance(self.candidate_text, str) or not self.candidate_text.strip():
            raise InvalidArgumentError(f"record {self.record_id!r}: candidate_text is empty")
        if self.reference_text is not None and not self.reference_text.strip():
            raise InvalidArgumentError(f"record {self.record_id!r}: reference_text is empty")
        scores = {}
        for key, value in dict(self.human_scores).items():
            value = float(value)
            if not math.isfinite(value):
                raise InvalidArgumentError(f"record {self.record_id!r}: human score {key!r} is not finite")
            scores[str(key).lower()] = value
        object.__setattr__(self, "human_scores", MappingProxyType(scores))
        if self.doc_id is None:
            object.__setattr__(self, "doc_id", self.record_id)


def check_unique_ids(records: Iterable[EvalRecord]) -> None:
    seen: set[str] = set()
    for record in records:
        if record.record_id in seen:
            raise InvalidArgumentError(f"duplicate record_id {record.record_id!r}")
        seen.add(record.record_id)
