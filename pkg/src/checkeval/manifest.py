"""Run manifests: one JSON object per line.

Line types, in order:

* ``header``  - format tag, version and the run configuration.
* ``run``     - one per (record, criterion) with scores, checklists, verdicts,
  the cache digests the run touched and parse diagnostics; or an ``error``
  object when the run failed.
* ``summary`` - counts and the sorted set of every cache digest touched.

Wall-clock timestamps are deliberately left out so that replayed runs write
byte-identical manifests. Keys are sorted.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .engine import PipelineRun, RunFailure, Scores
from .errors import ParseError

FORMAT = "checkeval-manifest"
VERSION = 1


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(", ", ": "))


def _checklist_block(run: PipelineRun) -> dict:
    assert run.checklist is not None and run.assessment is not None
    return {
        "mode": run.mode.value if run.mode else None,
        "provenance": run.checklist.provenance.to_dict(),
        "digest": run.checklist.digest,
        "items": run.checklist.questions,
        "verdicts": [
            {"item": v.item_index, "present": v.present, "rationale": v.rationale}
            for v in run.assessment.verdicts
        ],
        "raw": run.assessment.raw_score,
        "normalized": run.assessment.normalized_score,
        "cache_digests": list(run.metadata.get("cache_digests", [])),
        "diagnostics": run.metadata.get("diagnostics", {}),
    }


def run_entry(result: PipelineRun | RunFailure, index: int) -> dict:
    entry = {
        "type": "run",
        "index": index,
        "record_id": result.record_id,
        "doc_id": result.doc_id,
        "system_id": result.record.system_id,
        "criterion": result.criterion_name,
        "kind": result.kind,
    }
    if isinstance(result, RunFailure):
        entry["status"] = "error"
        entry["error"] = {
            "type": type(result.error).__name__,
            "message": str(result.error),
            "digest": result.digest,
        }
        return entry
    parts = result.parts or (result,)
    entry["status"] = "ok"
    entry["scores"] = result.scores.to_dict()
    entry["checklists"] = [_checklist_block(p) for p in parts]
    entry["cache_digests"] = list(result.metadata.get("cache_digests", []))
    return entry


def write_manifest(path: str | Path, config: dict, entries: Sequence[dict]) -> None:
    digests = sorted({d for e in entries for d in e.get("cache_digests", [])})
    failures = sum(1 for e in entries if e.get("status") != "ok")
    lines = [_dumps({"type": "header", "format": FORMAT, "version": VERSION, "config": config})]
    lines.extend(_dumps(e) for e in entries)
    lines.append(_dumps({"type": "summary", "runs": len(entries), "failures": failures, "cache_digests": digests}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    """A ``run`` line read back; quacks like a pipeline run for reporting."""

    record_id: str
    doc_id: str | None
    criterion_name: str
    kind: str
    scores: Scores | None
    data: dict

    @property
    def ok(self) -> bool:
        return self.scores is not None


def read_manifest(path: str | Path) -> tuple[dict, list[ManifestEntry]]:
    path = Path(path)
    header: dict | None = None
    entries: list[ManifestEntry] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise ParseError(f"invalid JSON: {exc}", line=line_no, path=str(path)) from None
        kind = obj.get("type")
        if kind == "header":
            if obj.get("format") != FORMAT:
                raise ParseError("not a checkeval manifest", line=line_no, path=str(path))
            header = obj
        elif kind == "run":
            try:
                scores = Scores(**obj["scores"]) if obj.get("status") == "ok" else None
                entries.append(
                    ManifestEntry(
                        record_id=str(obj["record_id"]),
                        doc_id=obj.get("doc_id"),
                        criterion_name=str(obj["criterion"]),
                        kind=str(obj["kind"]),
                        scores=scores,
                        data=obj,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed run line: {exc}", line=line_no, path=str(path)) from None
    if header is None:
        raise ParseError("manifest has no header line", path=str(path))
    return header, entries


def completed(entries: Iterable[ManifestEntry]) -> dict[tuple[str, str], dict]:
    """Successful entries keyed by (record_id, criterion), for resuming."""
    return {(e.record_id, e.criterion_name): e.data for e in entries if e.ok}
