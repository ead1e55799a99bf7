"""Scripted judges and synthetic benchmarks for offline testing.

A scripted judge is a callable taking an OpenAI-style request body and
returning the assistant text. Wrap it in :class:`~checkeval.backend.FunctionTransport`
to run the real pipeline (and to record replay caches) without a provider.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from collections.abc import Callable, Mapping, Sequence

from .model import EvalRecord

_ITEM_LINE = re.compile(r"^(\d+)\. (.+)$")
_KEYWORD = re.compile(r"'([^']+)'")


def _messages(body: dict) -> tuple[str, str]:
    system = user = ""
    for message in body.get("messages", []):
        if message.get("role") == "system":
            system = message.get("content", "")
        elif message.get("role") == "user":
            user = message.get("content", "")
    return system, user


def is_evaluation(body: dict) -> bool:
    system, _ = _messages(body)
    return '"answer"' in system


def checklist_questions(body: dict) -> list[str]:
    """The numbered checklist embedded in an evaluation request."""
    system, _ = _messages(body)
    _, _, tail = system.partition("Checklist:\n\n")
    questions = []
    for line in tail.splitlines():
        m = _ITEM_LINE.match(line)
        if m:
            questions.append(m.group(2))
        elif questions:
            break
    return questions


def assessed_text(body: dict) -> str:
    """The text under assessment (the candidate part for paired inputs)."""
    _, user = _messages(body)
    if "CANDIDATE TEXT:\n" in user:
        return user.split("CANDIDATE TEXT:\n", 1)[1]
    return user


def verdict_json(answers: Sequence[bool]) -> str:
    return json.dumps(
        [
            {"item": i, "answer": "yes" if a else "no", "rationale": "scripted"}
            for i, a in enumerate(answers, start=1)
        ]
    )


def constant_judge(answer: bool, n_items: int = 4) -> Callable[[dict], str]:
    """Judge that emits ``n_items`` generic questions and answers all of them alike."""

    def judge(body: dict) -> str:
        if is_evaluation(body):
            return verdict_json([answer] * len(checklist_questions(body)))
        return json.dumps([f"Does the text cover key point {i}?" for i in range(1, n_items + 1)])

    return judge


def count_judge(n_items: int, n_yes: int) -> Callable[[dict], str]:
    """Judge answering yes to the first ``n_yes`` of ``n_items`` questions."""

    def judge(body: dict) -> str:
        if is_evaluation(body):
            n = len(checklist_questions(body))
            return verdict_json([i < n_yes for i in range(n)])
        return json.dumps([f"Does the text cover key point {i}?" for i in range(1, n_items + 1)])

    return judge


def _content_words(text: str) -> list[str]:
    return re.findall(r"[a-z][a-z-]{5,}", text.lower())


def keyword_judge(criterion_keywords: Mapping[str, Sequence[str]] | None = None) -> Callable[[dict], str]:
    """Deterministic judge built on keyword presence.

    Checklist questions have the form ``Does the text mention 'kw'?`` and an
    item is judged present when ``kw`` occurs in the assessed text. For
    generation from a text, keywords are the longest word of each sentence;
    for criterion-only generation they come from ``criterion_keywords``,
    keyed by the criterion name found in the prompt.
    """
    criterion_keywords = {k.lower(): list(v) for k, v in (criterion_keywords or {}).items()}

    def judge(body: dict) -> str:
        if is_evaluation(body):
            text = assessed_text(body).lower()
            answers = []
            for q in checklist_questions(body):
                m = _KEYWORD.search(q)
                answers.append(bool(m) and m.group(1).lower() in text)
            return verdict_json(answers)
        system, user = _messages(body)
        if user.startswith("Write the checklist for the "):
            name = user[len("Write the checklist for the "):].split(" criterion", 1)[0].strip().lower()
            words = criterion_keywords.get(name, ["summary"])
        else:
            words = []
            for sentence in re.split(r"(?<=[.!?])\s+", user):
                cands = _content_words(sentence)
                if cands:
                    word = max(cands, key=len)
                    if word not in words:
                        words.append(word)
        return json.dumps([f"Does the text mention '{w}'?" for w in words])

    return judge


def _unit(seed: int, *parts: object) -> float:
    h = hashlib.sha256(repr((seed, *parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2**64


def planted_quality_judge(quality: Mapping[str, float], *, seed: int, n_items: int = 10) -> Callable[[dict], str]:
    """Judge answering each item yes with probability ``quality[record]``.

    The record is recognised by a ``[record <id>]`` tag in the assessed text.
    Draws are a hash of (seed, record, item), so answers do not depend on
    call order or thread scheduling.
    """

    def judge(body: dict) -> str:
        if not is_evaluation(body):
            return json.dumps([f"Does the summary satisfy quality aspect {i}?" for i in range(1, n_items + 1)])
        text = assessed_text(body)
        m = re.search(r"\[record ([^\]]+)\]", text)
        q = quality[m.group(1)] if m else 0.0
        n = len(checklist_questions(body))
        return verdict_json([_unit(seed, m.group(1) if m else "", i) < q for i in range(1, n + 1)])

    return judge


def planted_quality_records(n_records: int, *, seed: int) -> tuple[list[EvalRecord], dict[str, float]]:
    """Records whose true quality is drawn uniformly from [0, 1].

    The planted quality is also the human score for every built-in criterion.
    """
    rng = random.Random(seed)
    records, quality = [], {}
    for i in range(n_records):
        rid = f"p{i:03d}"
        q = rng.random()
        quality[rid] = q
        records.append(
            EvalRecord(
                record_id=rid,
                reference_text=f"Source document {i} for the planted benchmark.",
                candidate_text=f"[record {rid}] Candidate summary number {i}.",
                human_scores={c: q for c in ("consistency", "coherence", "relevance", "fluency")},
            )
        )
    return records, quality
