"""Render correlation reports as a plain-text table and as CSV.

The table has one row per scoring method and one column group per criterion
followed by AVG. The CSV is generated from the report objects directly and
never parsed back out of the table.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence

from .stats import CorrelationReport, build_report

SYMBOLS = {"pearson": "rho", "spearman": "rho_s", "kendall": "tau"}


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.3f}"


def render_table(reports: Sequence[CorrelationReport], labels: dict[str, str] | None = None) -> str:
    if not reports:
        return ""
    coefficients = reports[0].coefficients
    criteria = list(reports[0].per_criterion)
    labels = labels or {}
    cell = max(7, *(len(SYMBOLS[c]) for c in coefficients))
    group_width = len(coefficients) * (cell + 1) - 1
    groups = [labels.get(c, c.capitalize()) for c in criteria] + ["AVG"]
    method_width = max(len("Method"), *(len(r.label) for r in reports))

    def row(first: str, chunks: list[str]) -> str:
        return " | ".join([first.ljust(method_width), *chunks]).rstrip()

    lines = [
        row("Method", [g.center(group_width) for g in groups]),
        row("", [" ".join(SYMBOLS[c].rjust(cell) for c in coefficients) for _ in groups]),
    ]
    rule = "-" * len(lines[0])
    lines.insert(1, rule)
    for report in reports:
        chunks = []
        for crit in criteria:
            chunks.append(" ".join(_fmt(report.per_criterion[crit][c]).rjust(cell) for c in coefficients))
        chunks.append(" ".join(_fmt(report.averages[c]).rjust(cell) for c in coefficients))
        lines.append(row(report.label, chunks))
    lines.append(rule)
    first = reports[0]
    counts = ", ".join(f"{c}={first.n[c]}" for c in criteria)
    lines.append(f"aggregation: {first.aggregation}; n per criterion: {counts}")
    return "\n".join(lines) + "\n"


def to_csv(reports: Sequence[CorrelationReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "criterion", "coefficient", "value", "n", "aggregation"])
    for report in reports:
        for crit, cells in report.per_criterion.items():
            for coef in report.coefficients:
                value = cells[coef]
                writer.writerow([report.label, crit, coef, "" if value is None else repr(value), report.n[crit], report.aggregation])
        for coef in report.coefficients:
            value = report.averages[coef]
            writer.writerow([report.label, "AVG", coef, "" if value is None else repr(value), "", report.aggregation])
    return buf.getvalue()


KIND_LABELS = {
    "reference-guided": "Reference-guided",
    "candidate-guided": "Candidate-guided",
    "criterion-guided": "Check-Eval",
}


def _part_raw(position: int):
    def score(entry) -> float | None:
        blocks = entry.data.get("checklists") or []
        return blocks[position]["raw"] if len(blocks) > position else None

    return score


def reports_for_runs(
    entries: Sequence,
    humans,
    criteria: Sequence[str],
    kind: str,
    *,
    coefficients: Sequence[str],
    scoring: str = "normalized",
    aggregation: str = "pooled",
    human_key: str | None = None,
) -> list[CorrelationReport]:
    """Table rows for a batch: one row for single-mode runs, three for f1.

    ``entries`` are manifest entries. In f1 mode with raw scoring the recall
    and precision rows use the raw counts of the two guided checklists; the
    F1 row always uses normalized scores.
    """
    common = dict(coefficients=coefficients, aggregation=aggregation, human_key=human_key)
    if kind == "f1":
        rows = [
            ("Reference-guided", _part_raw(0) if scoring == "raw" else "recall"),
            ("Candidate-guided", _part_raw(1) if scoring == "raw" else "precision"),
            ("F1", "f1"),
        ]
    else:
        rows = [(KIND_LABELS.get(kind, kind), scoring)]
    return [build_report(entries, humans, criteria, score_field=field, label=label, **common) for label, field in rows]
