"""Loaders for the two benchmark shapes: pairwise similarity and SummEval-style.

Pairwise files are CSV (or TSV, chosen by the ``.tsv`` extension) with a
header row::

    id,text_1,text_2,similarity[,annotation_source]

SummEval-style files are JSON lines. Field names of the public SummEval
release are accepted as aliases::

    {"id": "...", "source_document" | "text": "...",
     "candidate_summary" | "decoded": "...", "system_id" | "model_id": "...",
     "expert_annotations": [{"coherence": 4, "consistency": 5, ...}, ...]}

Extra fields are ignored. ``record_id`` may be given explicitly; otherwise it
is ``"{id}:{system_id}"`` (or just ``id`` without a system id).
"""

from __future__ import annotations

import csv
import json
import math
import random
from collections.abc import Sequence
from pathlib import Path

from .errors import InvalidArgumentError, ParseError
from .model import EvalRecord
from .stats import average_human_scores

SIMILARITY_KEY = "similarity"
PAIRWISE_FIELDS = ("id", "text_1", "text_2", "similarity")
ANNOTATION_SOURCES = ("expert", "heuristic")

_ALIASES = {
    "source_document": ("source_document", "text", "source"),
    "candidate_summary": ("candidate_summary", "decoded", "summary"),
    "system_id": ("system_id", "model_id"),
}


def _sample(records: list[EvalRecord], n: int | None, seed: int) -> list[EvalRecord]:
    if n is None:
        return records
    if n < 1 or n > len(records):
        raise InvalidArgumentError(f"cannot sample {n} records from a corpus of {len(records)}")
    keep = sorted(random.Random(seed).sample(range(len(records)), n))
    return [records[i] for i in keep]


def _delimiter(path: Path) -> str:
    return "\t" if path.suffix.lower() in (".tsv", ".tab") else ","


def load_pairwise(
    path: str | Path,
    *,
    annotation_source: str | None = None,
    sample: int | None = None,
    seed: int = 0,
) -> list[EvalRecord]:
    """Load text pairs; ``text_1`` is the reference, ``text_2`` the candidate.

    The similarity annotation is stored as human score ``"similarity"``.
    Sub-sampling keeps file order and depends only on ``seed``.
    """
    path = Path(path)
    if annotation_source is not None and annotation_source not in ANNOTATION_SOURCES:
        raise InvalidArgumentError(f"annotation_source must be one of {ANNOTATION_SOURCES}")
    records: list[EvalRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=_delimiter(path))
        header = reader.fieldnames or []
        absent = [f for f in PAIRWISE_FIELDS if f not in header]
        if absent:
            raise ParseError(f"missing required columns {absent}", line=1, path=str(path))
        for row_number, row in enumerate(reader, start=1):
            where = f"row {row_number}"
            rid = (row.get("id") or "").strip()
            text_1 = row.get("text_1") or ""
            text_2 = row.get("text_2") or ""
            if not rid:
                raise ParseError(f"{where}: empty id", line=reader.line_num, path=str(path))
            if rid in seen:
                raise ParseError(f"{where}: duplicate id {rid!r}", line=reader.line_num, path=str(path))
            for name, text in (("text_1", text_1), ("text_2", text_2)):
                if not text.strip():
                    raise ParseError(f"{where} (id {rid}): empty {name}", line=reader.line_num, path=str(path))
            try:
                similarity = float(row.get("similarity") or "")
            except ValueError:
                raise ParseError(
                    f"{where} (id {rid}): similarity {row.get('similarity')!r} is not a number",
                    line=reader.line_num,
                    path=str(path),
                ) from None
            if not math.isfinite(similarity):
                raise ParseError(f"{where} (id {rid}): similarity is not finite", line=reader.line_num, path=str(path))
            source = (row.get("annotation_source") or "expert").strip().lower()
            if source not in ANNOTATION_SOURCES:
                raise ParseError(f"{where}: unknown annotation_source {source!r}", line=reader.line_num, path=str(path))
            seen.add(rid)
            if annotation_source is not None and source != annotation_source:
                continue
            records.append(
                EvalRecord(
                    record_id=rid,
                    candidate_text=text_2,
                    reference_text=text_1,
                    human_scores={SIMILARITY_KEY: similarity},
                )
            )
    return _sample(records, sample, seed)


def _field(obj: dict, name: str):
    for key in _ALIASES.get(name, (name,)):
        if key in obj:
            return obj[key]
    return None


def load_summeval(
    path: str | Path,
    *,
    scale: tuple[float, float] | None = (1, 5),
    sample: int | None = None,
    seed: int = 0,
) -> list[EvalRecord]:
    """Load summaries; human scores are the mean of the expert annotations."""
    path = Path(path)
    records: list[EvalRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue

            def fail(msg: str) -> ParseError:
                return ParseError(msg, line=line_no, path=str(path))

            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise fail(f"invalid JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise fail("each line must be a JSON object")
            doc_id = obj.get("id")
            source = _field(obj, "source_document")
            summary = _field(obj, "candidate_summary")
            system = _field(obj, "system_id")
            annotations = obj.get("expert_annotations")
            if doc_id is None or str(doc_id) == "":
                raise fail("missing 'id'")
            doc_id = str(doc_id)
            if not isinstance(source, str) or not source.strip():
                raise fail(f"record {doc_id}: missing or empty source document")
            if not isinstance(summary, str) or not summary.strip():
                raise fail(f"record {doc_id}: missing or empty candidate summary")
            if not isinstance(annotations, list) or not annotations:
                raise fail(f"record {doc_id}: needs at least one expert annotation")
            for ann in annotations:
                if not isinstance(ann, dict) or not ann:
                    raise fail(f"record {doc_id}: annotations must be non-empty objects")
                for key, value in ann.items():
                    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                        raise fail(f"record {doc_id}: rating {key}={value!r} is not a number")
                    if scale is not None and not (scale[0] <= value <= scale[1]):
                        raise fail(f"record {doc_id}: rating {key}={value} outside scale {scale[0]}-{scale[1]}")
            try:
                human = average_human_scores([{k.lower(): v for k, v in a.items()} for a in annotations])
            except InvalidArgumentError as exc:
                raise fail(f"record {doc_id}: {exc}") from None
            system = None if system is None else str(system)
            rid = obj.get("record_id")
            rid = str(rid) if rid else (f"{doc_id}:{system}" if system else doc_id)
            if rid in seen:
                raise fail(f"duplicate record id {rid!r}")
            seen.add(rid)
            records.append(
                EvalRecord(
                    record_id=rid,
                    candidate_text=summary,
                    reference_text=source,
                    human_scores=human,
                    doc_id=doc_id,
                    system_id=system,
                )
            )
    return _sample(records, sample, seed)


def load_human_scores(path: str | Path) -> dict[str, dict[str, float]]:
    """Read ``record_id -> {criterion: score}``.

    JSON lines (``{"record_id": ..., "scores": {...}}``) or, for ``.csv`` and
    ``.tsv`` files, a table with a ``record_id`` column and one column per
    criterion.
    """
    path = Path(path)
    out: dict[str, dict[str, float]] = {}
    if path.suffix.lower() in (".csv", ".tsv", ".tab"):
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter=_delimiter(path))
            if "record_id" not in (reader.fieldnames or []):
                raise ParseError("missing 'record_id' column", line=1, path=str(path))
            for row in reader:
                rid = row.pop("record_id")
                try:
                    out[rid] = {k.lower(): float(v) for k, v in row.items() if v not in (None, "")}
                except ValueError as exc:
                    raise ParseError(str(exc), line=reader.line_num, path=str(path)) from None
        return out
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rid = str(obj["record_id"])
                out[rid] = {k.lower(): float(v) for k, v in obj["scores"].items()}
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                raise ParseError(f"bad human-score line: {exc}", line=line_no, path=str(path)) from None
    return out


def humans_from_records(records: Sequence[EvalRecord]) -> dict[str, dict[str, float]]:
    return {r.record_id: dict(r.human_scores) for r in records}


DATASET_FORMATS = ("pairwise", "summeval")


def load_dataset(path: str | Path, fmt: str, **options) -> list[EvalRecord]:
    if fmt == "pairwise":
        return load_pairwise(path, **options)
    if fmt == "summeval":
        return load_summeval(path, **options)
    raise InvalidArgumentError(f"unknown dataset format {fmt!r}; expected one of {DATASET_FORMATS}")
