"""Correlation statistics for meta-evaluation against human judgments.

Sums run in index order so results are reproducible bit for bit. Undefined
correlations (a constant series) raise :class:`UndefinedCorrelationError`
instead of returning 0.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .errors import InvalidArgumentError, UndefinedCorrelationError

COEFFICIENTS = ("pearson", "spearman", "kendall")
_ALIASES = {
    "pearson": "pearson",
    "rho": "pearson",
    "spearman": "spearman",
    "rho_s": "spearman",
    "kendall": "kendall",
    "kendall_tau_b": "kendall",
    "kendalltau": "kendall",
    "tau": "kendall",
    "tau_b": "kendall",
}
AGGREGATIONS = ("pooled", "per-document")


@dataclass(frozen=True)
class PairedSeries:
    system_scores: tuple[float, ...]
    human_scores: tuple[float, ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        xs = tuple(float(v) for v in self.system_scores)
        ys = tuple(float(v) for v in self.human_scores)
        object.__setattr__(self, "system_scores", xs)
        object.__setattr__(self, "human_scores", ys)
        if len(xs) != len(ys):
            raise InvalidArgumentError(f"series lengths differ: {len(xs)} vs {len(ys)}")
        if len(xs) < 2:
            raise InvalidArgumentError("correlation needs at least 2 paired values")
        if not all(math.isfinite(v) for v in xs + ys):
            raise InvalidArgumentError("series contain non-finite values")
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(xs):
                raise InvalidArgumentError("labels must match the series length")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.system_scores)


def _series(s, y) -> PairedSeries:
    if isinstance(s, PairedSeries):
        return s
    return PairedSeries(tuple(s), tuple(y))


def _pearson_raw(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sxx = syy = 0.0
    for x, y in zip(xs, ys):
        dx, dy = x - mx, y - my
        sxy += dx * dy
        sxx += dx * dx
        syy += dy * dy
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson(s: PairedSeries | Sequence[float], y: Sequence[float] | None = None) -> float:
    s = _series(s, y)
    return _pearson_raw(s.system_scores, s.human_scores)


def rankdata(values: Sequence[float]) -> list[float]:
    """1-based fractional ranks; tied values share the mean of their ranks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j + 2) / 2
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(s: PairedSeries | Sequence[float], y: Sequence[float] | None = None) -> float:
    s = _series(s, y)
    return _pearson_raw(rankdata(s.system_scores), rankdata(s.human_scores))


def _tied_pairs(sorted_values: Sequence) -> int:
    total = run = 0
    for i in range(1, len(sorted_values)):
        if sorted_values[i] == sorted_values[i - 1]:
            run += 1
        else:
            total += run * (run + 1) // 2
            run = 0
    return total + run * (run + 1) // 2


def _merge_sort_swaps(values: list[float]) -> tuple[int, list[float]]:
    """Bottom-up merge sort; returns (inversion count, sorted copy)."""
    values = list(values)
    n = len(values)
    buf = values[:]
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if values[j] < values[i]:
                    buf[k] = values[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = values[i]
                    i += 1
                k += 1
            buf[k : k + mid - i] = values[i:mid]
            k += mid - i
            buf[k : k + hi - j] = values[j:hi]
        values, buf = buf, values
        width *= 2
    return swaps, values


def kendall_tau_b(s: PairedSeries | Sequence[float], y: Sequence[float] | None = None) -> float:
    """Kendall tau-b via Knight's O(n log n) algorithm."""
    s = _series(s, y)
    pairs = sorted(zip(s.system_scores, s.human_scores))
    n = len(pairs)
    n0 = n * (n - 1) // 2
    tied_x = _tied_pairs([p[0] for p in pairs])
    tied_xy = _tied_pairs(pairs)
    ys = [p[1] for p in pairs]
    swaps, ys_sorted = _merge_sort_swaps(ys)
    tied_y = _tied_pairs(ys_sorted)
    if tied_x == n0 or tied_y == n0:
        raise UndefinedCorrelationError("tau-b is undefined when every pair is tied in one series")
    numerator = n0 - tied_x - tied_y + tied_xy - 2 * swaps
    tau = numerator / math.sqrt((n0 - tied_x) * (n0 - tied_y))
    return max(-1.0, min(1.0, tau))


_FUNCS = {"pearson": pearson, "spearman": spearman, "kendall": kendall_tau_b}


def canonical_coefficients(names: Iterable[str]) -> tuple[str, ...]:
    out = []
    for name in names:
        key = _ALIASES.get(name.strip().lower())
        if key is None:
            raise InvalidArgumentError(
                f"unknown coefficient {name!r}; expected some of {list(COEFFICIENTS)}"
            )
        if key not in out:
            out.append(key)
    if not out:
        raise InvalidArgumentError("no coefficients requested")
    return tuple(out)


def correlation(name: str, s: PairedSeries) -> float:
    return _FUNCS[canonical_coefficients([name])[0]](s)


def average_human_scores(annotations: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Per-criterion arithmetic mean over annotators."""
    if not annotations:
        raise InvalidArgumentError("need at least one annotator")
    keys = set(annotations[0])
    for i, ann in enumerate(annotations):
        if set(ann) != keys:
            gap = sorted(keys.symmetric_difference(ann))
            raise InvalidArgumentError(f"annotator {i} covers different criteria; mismatch on {gap}")
    return {k: sum(float(a[k]) for a in annotations) / len(annotations) for k in annotations[0]}


@dataclass(frozen=True)
class CorrelationReport:
    """Correlations per criterion for one scoring method (one table row).

    ``None`` marks an undefined cell. Averages use only defined cells.
    """

    label: str
    coefficients: tuple[str, ...]
    per_criterion: dict[str, dict[str, float | None]]
    averages: dict[str, float | None]
    n: dict[str, int]
    aggregation: str = "pooled"
    notes: list[str] = field(default_factory=list)


def _mean_defined(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _safe(name: str, s: PairedSeries) -> float | None:
    try:
        return _FUNCS[name](s)
    except UndefinedCorrelationError:
        return None


def _cell(name: str, xs: list[float], ys: list[float], groups: list[str], aggregation: str) -> float | None:
    if aggregation == "pooled":
        if len(xs) < 2:
            return None
        return _safe(name, PairedSeries(tuple(xs), tuple(ys)))
    by_group: dict[str, tuple[list[float], list[float]]] = {}
    for x, y, g in zip(xs, ys, groups):
        gx, gy = by_group.setdefault(g, ([], []))
        gx.append(x)
        gy.append(y)
    values = []
    for gx, gy in by_group.values():
        if len(gx) >= 2:
            values.append(_safe(name, PairedSeries(tuple(gx), tuple(gy))))
    return _mean_defined(values)


def _score_of(run, score: str | Callable) -> float | None:
    value = score(run) if callable(score) else getattr(run.scores, score)
    return None if value is None else float(value)


def build_report(
    runs: Sequence,
    humans: Mapping[str, Mapping[str, float]],
    criteria: Sequence[str],
    coefficients: Iterable[str] = COEFFICIENTS,
    *,
    score_field: str | Callable = "normalized",
    aggregation: str = "pooled",
    human_key: str | None = None,
    label: str = "Check-Eval",
) -> CorrelationReport:
    """Correlate system scores with human scores, one column group per criterion.

    ``runs`` are pipeline runs or manifest entries (anything with
    ``record_id``, ``criterion_name``, ``doc_id`` and ``scores``); failed
    runs (``ok`` false) are skipped.
    ``score_field`` names a :class:`Scores` field or is a callable
    returning the system score of a run. ``human_key`` correlates every
    criterion against one human field, e.g. ``"similarity"`` for pairwise
    corpora with a single annotation.
    """
    coefficients = canonical_coefficients(coefficients)
    if aggregation not in AGGREGATIONS:
        raise InvalidArgumentError(f"aggregation must be one of {AGGREGATIONS}")
    criteria = [c.strip().lower() for c in criteria]
    per_criterion: dict[str, dict[str, float | None]] = {}
    counts: dict[str, int] = {}
    missing: list[str] = []
    for crit in criteria:
        xs, ys, groups = [], [], []
        for run in runs:
            if run.criterion_name != crit or not getattr(run, "ok", True):
                continue
            value = _score_of(run, score_field)
            if value is None:
                continue
            key = human_key or crit
            human = humans.get(run.record_id)
            if human is None or key not in human:
                missing.append(f"{run.record_id} ({key})")
                continue
            xs.append(value)
            ys.append(float(human[key]))
            groups.append(run.doc_id or run.record_id)
        counts[crit] = len(xs)
        per_criterion[crit] = {c: _cell(c, xs, ys, groups, aggregation) for c in coefficients}
    if missing:
        raise InvalidArgumentError(f"no human scores for: {', '.join(missing)}")
    averages = {c: _mean_defined(per_criterion[k][c] for k in criteria) for c in coefficients}
    return CorrelationReport(label, coefficients, per_criterion, averages, counts, aggregation)
