"""Turn raw judge output into checklists and verdicts.

Structured output (a JSON array) is the primary format. Numbered or bulleted
lines are accepted as a fallback and counted in ``salvage_count``.
"""

from __future__ import annotations

import json
import re
from collections.abc import Sequence
from dataclasses import dataclass, field

from .errors import EmptyChecklistError, InvalidArgumentError, UnparseableVerdictsError
from .model import Checklist, Criterion, Provenance, Verdict

# Checklist rules that need judgement rather than string checks.
NOT_MACHINE_CHECKED = {
    2: "items must be self-contained",
    3: "focus on main concepts, skip minor details",
    4: "each item covers a unique concept",
    6: "comprehensive but not exhaustive",
}

_IMPERATIVE = {
    "avoid", "check", "consider", "describe", "determine", "ensure", "explain", "focus",
    "generate", "identify", "include", "list", "make", "mention", "note", "provide",
    "remember", "return", "summarize", "summarise", "use", "verify", "write",
}

_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```\s*$", re.S)
_LIST_LINE = re.compile(r"^\s*(?:\(?\d+[.):]|[-*•])\s+(.+?)\s*$")
_VERDICT_LINE = re.compile(
    r"^\s*(?:item\s*)?\(?(\d+)[.):\]]?\s*[-:–]?\s*\**\s*(yes|no|partial(?:ly)?|partly)\b\**[.,;:)\s-]*(.*)$",
    re.I,
)
_ECHO_VERDICT_LINE = re.compile(
    r"^\s*(?:item\s*)?\(?(\d+)[.):]\s+.*\?\s*[-:–]?\s*\**\s*(yes|no|partial(?:ly)?|partly)\b\**[.,;:)\s-]*(.*)$",
    re.I,
)


@dataclass(frozen=True)
class ParseWarning:
    rule_id: str
    item_index: int | None
    message: str


@dataclass
class ParseDiagnostics:
    warnings: list[ParseWarning] = field(default_factory=list)
    salvage_count: int = 0

    def warn(self, rule_id: str, item_index: int | None, message: str) -> None:
        self.warnings.append(ParseWarning(rule_id, item_index, message))

    def __bool__(self) -> bool:
        return bool(self.warnings) or self.salvage_count > 0

    @property
    def missing(self) -> list[int]:
        return [w.item_index for w in self.warnings if w.rule_id == "missing" and w.item_index is not None]

    def to_dict(self) -> dict:
        return {
            "warnings": [w.__dict__ for w in self.warnings],
            "salvage_count": self.salvage_count,
        }


@dataclass(frozen=True)
class RuleViolation:
    rule_id: str
    item_index: int
    message: str


def _strip_fence(raw: str) -> str:
    text = raw.strip()
    m = _FENCE.match(text)
    return m.group(1).strip() if m else text


def _load_json(raw: str):
    """Parse ``raw`` as JSON, or the first bracketed JSON value embedded in it."""
    text = _strip_fence(raw)
    try:
        return json.loads(text)
    except ValueError:
        pass
    for opener, closer in (("[", "]"), ("{", "}")):
        start, end = text.find(opener), text.rfind(closer)
        if 0 <= start < end:
            try:
                return json.loads(text[start : end + 1])
            except ValueError:
                continue
    return None


def _unwrap(doc, keys: Sequence[str]):
    if isinstance(doc, dict):
        for key in keys:
            if isinstance(doc.get(key), list):
                return doc[key]
    return doc


def _structured_questions(doc) -> list[str] | None:
    doc = _unwrap(doc, ("checklist", "items", "questions"))
    if not isinstance(doc, list) or not doc:
        return None
    out = []
    for entry in doc:
        if isinstance(entry, str):
            out.append(entry)
        elif isinstance(entry, dict) and isinstance(entry.get("question"), str):
            out.append(entry["question"])
        else:
            return None
    return out


def _clean_question(text: str) -> str:
    text = text.strip().strip("*").strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1].strip()
    return text


def parse_checklist(
    raw: str,
    criterion: Criterion,
    provenance: Provenance | None = None,
) -> tuple[Checklist, ParseDiagnostics]:
    if not raw or not raw.strip():
        raise InvalidArgumentError("judge output is empty")
    diag = ParseDiagnostics()
    candidates = _structured_questions(_load_json(raw))
    if candidates is None:
        candidates = []
        for line in raw.splitlines():
            m = _LIST_LINE.match(line)
            if m:
                candidates.append(m.group(1))
        diag.salvage_count = len(candidates)

    kept: list[str] = []
    for position, question in enumerate(candidates, start=1):
        question = _clean_question(question)
        if not question:
            diag.warn("empty", position, "empty item dropped")
            continue
        if not question.endswith("?"):
            first = re.split(r"\W+", question.lower(), maxsplit=1)[0]
            if first in _IMPERATIVE:
                diag.warn("rule-1", position, f"non-interrogative item dropped: {question!r}")
                continue
            diag.warn("rule-1", position, f"item is not phrased as a question: {question!r}")
        if question in kept:
            diag.warn("rule-5", position, f"duplicate item dropped: {question!r}")
            continue
        kept.append(question)

    if not kept:
        raise EmptyChecklistError(f"no checklist items found in judge output: {raw[:120]!r}")
    checklist = Checklist.from_questions(criterion, kept, provenance or Provenance.criterion_only())
    return checklist, diag


_YES = {"yes", "y", "true", "present", "1"}
_NO = {"no", "n", "false", "absent", "0"}
_PARTIAL = {"partial", "partially", "partly"}


def _answer(value) -> tuple[bool | None, bool]:
    """Map a judge answer to (present, coerced_from_partial)."""
    if isinstance(value, bool):
        return value, False
    if not isinstance(value, str):
        return None, False
    key = value.strip().strip(".!*").lower()
    if key in _YES:
        return True, False
    if key in _NO:
        return False, False
    if key in _PARTIAL:
        return False, True
    return None, False


def _structured_verdicts(doc) -> list[tuple[int, object, str | None]] | None:
    doc = _unwrap(doc, ("verdicts", "answers", "items", "checklist", "results"))
    if isinstance(doc, dict) and doc and all(str(k).strip().isdigit() for k in doc):
        return [(int(k), v, None) for k, v in doc.items()]
    if not isinstance(doc, list) or not doc:
        return None
    out = []
    for position, entry in enumerate(doc, start=1):
        if isinstance(entry, dict):
            index = entry.get("item", entry.get("index", entry.get("id", position)))
            answer = entry.get("answer", entry.get("present", entry.get("verdict")))
            rationale = entry.get("rationale", entry.get("reason"))
            try:
                index = int(index)
            except (TypeError, ValueError):
                return None
            out.append((index, answer, rationale if isinstance(rationale, str) else None))
        elif isinstance(entry, (str, bool)):
            out.append((position, entry, None))
        else:
            return None
    return out


def parse_verdicts(raw: str, checklist: Checklist) -> tuple[list[Verdict], ParseDiagnostics]:
    """Return exactly one verdict per checklist item, or raise.

    Items the judge skipped count as absent, each with a ``missing`` warning.
    """
    diag = ParseDiagnostics()
    entries = _structured_verdicts(_load_json(raw)) if raw and raw.strip() else None
    if entries is None:
        entries = []
        for line in (raw or "").splitlines():
            m = _VERDICT_LINE.match(line) or _ECHO_VERDICT_LINE.match(line)
            if m:
                entries.append((int(m.group(1)), m.group(2), m.group(3).strip() or None))
        diag.salvage_count = len(entries)

    valid = {item.index for item in checklist.items}
    found: dict[int, Verdict] = {}
    for index, answer, rationale in entries:
        present, coerced = _answer(answer)
        if present is None:
            diag.warn("answer", index, f"unreadable answer {answer!r} ignored")
            continue
        if index not in valid:
            diag.warn("extra", index, f"verdict for unknown item {index} dropped")
            continue
        if index in found:
            diag.warn("duplicate", index, f"second verdict for item {index} ignored")
            continue
        if coerced:
            diag.warn("partial", index, "partial answer counted as absent")
            rationale = "[partial answer coerced to no] " + (rationale or "")
            rationale = rationale.strip()
        found[index] = Verdict(index, present, rationale)

    if not found:
        raise UnparseableVerdictsError(f"no verdicts found in judge output: {(raw or '')[:120]!r}")
    verdicts = []
    for index in sorted(valid):
        if index not in found:
            diag.warn("missing", index, f"no verdict for item {index}; counted as absent")
            found[index] = Verdict(index, False, "[missing verdict]")
        verdicts.append(found[index])
    return verdicts, diag


def validate_checklist(checklist: Checklist | Sequence[str]) -> list[RuleViolation]:
    """Report the checklist rules that can be checked mechanically.

    Accepts raw question lists too, since a constructed :class:`Checklist`
    already rules out empty and duplicate items.
    """
    questions = checklist.questions if isinstance(checklist, Checklist) else list(checklist)
    violations = []
    seen: set[str] = set()
    for index, question in enumerate(questions, start=1):
        if not question or not question.strip():
            violations.append(RuleViolation("empty", index, "empty item"))
            continue
        if not question.rstrip().endswith("?"):
            violations.append(RuleViolation("rule-1", index, "item is not a yes/no question"))
        if question in seen:
            violations.append(RuleViolation("rule-5", index, "item repeats an earlier item"))
        seen.add(question)
    return violations
