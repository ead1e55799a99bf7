"""Chat prompts for checklist generation and checklist evaluation.

Templates live in ``data/templates/<locale>/`` as UTF-8 text with ``{slot}``
placeholders. Only lowercase identifiers in braces are slots, so literal JSON
such as ``{"item": 1}`` inside a template is left alone.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import InvalidArgumentError
from .model import Checklist, Criterion, EvaluationMode

_SLOT = re.compile(r"\{([a-z_]+)\}")

TEMPLATE_FILES = (
    "generate_from_text",
    "generate_from_criterion",
    "criterion_user",
    "evaluate",
    "format_checklist",
    "format_verdicts",
    "format_verdicts_strict",
    "pair_note",
    "pair_user",
)


class TemplateId(enum.Enum):
    GENERATE_FROM_TEXT = "generate_from_text"
    GENERATE_FROM_CRITERION_ONLY = "generate_from_criterion"
    EVALUATE_AGAINST_CHECKLIST = "evaluate"


class ResponseFormat(enum.Enum):
    FREE_TEXT = "free-text"
    STRUCTURED_LIST = "structured-list"


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_output_tokens: int = 1024
    response_format_hint: ResponseFormat = ResponseFormat.STRUCTURED_LIST

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise InvalidArgumentError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise InvalidArgumentError("max_output_tokens must be >= 1")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "response_format_hint": self.response_format_hint.value,
        }


@dataclass(frozen=True)
class ChatRequest:
    """A system/user message pair plus decoding parameters.

    ``cache_salt`` is never sent to the provider; it only separates cache
    entries for otherwise identical requests.
    """

    system_message: str
    user_message: str
    decoding: Decoding = field(default_factory=Decoding)
    cache_salt: str | None = None

    def __post_init__(self) -> None:
        if not self.system_message.strip() or not self.user_message.strip():
            raise InvalidArgumentError("chat requests need non-empty system and user messages")

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.system_message},
            {"role": "user", "content": self.user_message},
        ]


def render(template: str, **slots: str) -> str:
    """Fill every ``{slot}`` in ``template``; missing slots are an error."""
    wanted = set(_SLOT.findall(template))
    missing = wanted - set(slots)
    if missing:
        raise InvalidArgumentError(f"template slots left unfilled: {sorted(missing)}")
    return _SLOT.sub(lambda m: str(slots[m.group(1)]), template)


def template_slots(template: str) -> set[str]:
    return set(_SLOT.findall(template))


@dataclass(frozen=True)
class TemplateSet:
    locale: str
    texts: dict[str, str]

    @classmethod
    def load(cls, locale: str = "en", directory: str | Path | None = None) -> TemplateSet:
        """Load templates for ``locale``; ``directory`` overrides individual files."""
        base = resources.files("checkeval") / "data" / "templates" / locale
        if not base.is_dir():
            raise InvalidArgumentError(f"no prompt templates for locale {locale!r}")
        texts = {}
        for name in TEMPLATE_FILES:
            source = base / f"{name}.txt"
            if directory is not None and (Path(directory) / f"{name}.txt").is_file():
                source = Path(directory) / f"{name}.txt"
            texts[name] = source.read_text(encoding="utf-8").rstrip("\n")
        return cls(locale, texts)

    def __getitem__(self, name: str) -> str:
        return self.texts[name]

    def __hash__(self) -> int:
        return hash((self.locale, tuple(sorted(self.texts.items()))))


_DEFAULT_TEMPLATES: dict[str, TemplateSet] = {}


def default_templates(locale: str = "en") -> TemplateSet:
    if locale not in _DEFAULT_TEMPLATES:
        _DEFAULT_TEMPLATES[locale] = TemplateSet.load(locale)
    return _DEFAULT_TEMPLATES[locale]


def _criterion_slots(criterion: Criterion) -> dict[str, str]:
    return {
        "criterion_name": criterion.name,
        "criterion_label": criterion.label,
        "criterion_adjective": criterion.adjective,
        "criterion_definition": criterion.definition,
    }


def build_generation_prompt(
    criterion: Criterion,
    source_text: str | None,
    mode: EvaluationMode,
    *,
    templates: TemplateSet | None = None,
    decoding: Decoding | None = None,
) -> ChatRequest:
    mode = EvaluationMode.parse(mode)
    templates = templates or default_templates()
    slots = _criterion_slots(criterion)
    if mode is EvaluationMode.CRITERION_GUIDED:
        if source_text is not None:
            raise InvalidArgumentError("criterion-guided generation takes no source text")
        body = render(templates["generate_from_criterion"], **slots)
        user = render(templates["criterion_user"], **slots)
    else:
        if source_text is None:
            raise InvalidArgumentError(f"{mode.value} generation needs a source text")
        if not source_text.strip():
            raise InvalidArgumentError("source text is empty")
        body = render(templates["generate_from_text"], **slots)
        user = source_text
    system = body + "\n\n" + render(templates["format_checklist"], **slots)
    return ChatRequest(system, user, decoding or Decoding())


def build_evaluation_prompt(
    criterion: Criterion,
    checklist: Checklist,
    candidate: str,
    reference: str | None,
    mode: EvaluationMode,
    *,
    strict: bool = False,
    templates: TemplateSet | None = None,
    decoding: Decoding | None = None,
) -> ChatRequest:
    """Build the checklist-evaluation request.

    ``candidate`` is the text being assessed. In candidate-guided runs that is
    the reference text of the record, since the checklist came from the
    candidate. ``reference`` is only used by criterion-guided runs, where both
    texts go into the user message (reference first). ``strict`` appends the
    stronger format instruction used for the single retry.
    """
    mode = EvaluationMode.parse(mode)
    templates = templates or default_templates()
    if checklist.criterion.name != criterion.name:
        raise InvalidArgumentError(
            f"checklist was built for {checklist.criterion.name!r}, not {criterion.name!r}"
        )
    if not candidate or not candidate.strip():
        raise InvalidArgumentError("candidate text is empty")
    slots = _criterion_slots(criterion)
    slots["checklist"] = checklist.render()
    slots["item_count"] = str(len(checklist))
    parts = [render(templates["evaluate"], **slots)]
    if mode is EvaluationMode.CRITERION_GUIDED:
        if reference is None or not reference.strip():
            raise InvalidArgumentError("criterion-guided evaluation needs the reference text")
        parts.append(render(templates["pair_note"], **slots))
        user = render(templates["pair_user"], reference_text=reference, candidate_text=candidate)
    else:
        user = candidate
    parts.append(render(templates["format_verdicts"], **slots))
    if strict:
        parts.append(render(templates["format_verdicts_strict"], **slots))
    return ChatRequest("\n\n".join(parts), user, decoding or Decoding())
