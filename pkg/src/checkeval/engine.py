"""The two-stage pipeline: generate a checklist, then score a text against it.

Run kinds:

* ``reference-guided`` - checklist from the reference, candidate assessed (recall).
* ``candidate-guided`` - checklist from the candidate, reference assessed (precision).
* ``criterion-guided`` - checklist from the criterion definition only, then the
  candidate is assessed against the reference. One checklist per criterion is
  generated and shared by every record of the engine unless
  ``regenerate_per_record`` is set.
* ``f1`` - both guided runs plus their harmonic mean.
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Mapping, Sequence
from concurrent.futures import FIRST_EXCEPTION, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from types import MappingProxyType

from .backend import Backend, Completion
from .criteria import CriteriaRegistry, builtin_registry
from .errors import CheckEvalError, InvalidArgumentError, PipelineError, ReplayMissError, UnparseableVerdictsError
from .model import Assessment, Checklist, Criterion, EvalRecord, EvaluationMode, Provenance, f1
from .parsing import ParseDiagnostics, ParseWarning, parse_checklist, parse_verdicts
from .prompts import Decoding, TemplateSet, build_evaluation_prompt, build_generation_prompt, default_templates

log = logging.getLogger(__name__)

RUN_KINDS = ("reference-guided", "candidate-guided", "criterion-guided", "f1")


def parse_kind(value: str) -> str:
    key = str(value).strip().lower().replace("_", "-")
    for kind in RUN_KINDS:
        if key in (kind, kind.split("-")[0]):
            return kind
    raise InvalidArgumentError(f"unknown run mode {value!r}; expected one of {list(RUN_KINDS)}")


@dataclass(frozen=True)
class Scores:
    raw: int | None = None
    normalized: float | None = None
    recall: float | None = None
    precision: float | None = None
    f1: float | None = None

    def __post_init__(self) -> None:
        both = self.recall is not None and self.precision is not None
        if (self.f1 is not None) != both:
            raise InvalidArgumentError("f1 is present exactly when recall and precision are")
        if both and self.f1 != f1(self.recall, self.precision):
            raise InvalidArgumentError("f1 does not match recall and precision")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("raw", "normalized", "recall", "precision", "f1")}


@dataclass(frozen=True)
class PipelineRun:
    kind: str
    criterion: Criterion
    record: EvalRecord
    scores: Scores
    mode: EvaluationMode | None = None
    checklist: Checklist | None = None
    assessment: Assessment | None = None
    parts: tuple[PipelineRun, ...] = ()
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))
        if self.mode is not None:
            if self.checklist is None or self.assessment is None:
                raise InvalidArgumentError("single-mode runs carry a checklist and an assessment")
            if not self.checklist.provenance.matches(self.mode):
                raise InvalidArgumentError(
                    f"checklist provenance {self.checklist.provenance.source!r} does not fit {self.mode.value}"
                )
            if self.assessment.checklist_ref != self.checklist.digest:
                raise InvalidArgumentError("assessment does not belong to this checklist")

    @property
    def record_id(self) -> str:
        return self.record.record_id

    @property
    def criterion_name(self) -> str:
        return self.criterion.name

    @property
    def doc_id(self) -> str | None:
        return self.record.doc_id

    @property
    def ok(self) -> bool:
        return True


@dataclass(frozen=True)
class RunFailure:
    """A batch slot whose run raised; kept in place so output order is stable."""

    kind: str
    criterion: Criterion
    record: EvalRecord
    error: CheckEvalError | Exception

    @property
    def record_id(self) -> str:
        return self.record.record_id

    @property
    def criterion_name(self) -> str:
        return self.criterion.name

    @property
    def doc_id(self) -> str | None:
        return self.record.doc_id

    @property
    def ok(self) -> bool:
        return False

    @property
    def digest(self) -> str | None:
        cause = self.error.cause if isinstance(self.error, PipelineError) else self.error
        return cause.digest if isinstance(cause, ReplayMissError) else None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class CheckEval:
    """Pipeline driver bound to one backend and one criteria registry."""

    def __init__(
        self,
        backend: Backend,
        registry: CriteriaRegistry | None = None,
        *,
        templates: TemplateSet | None = None,
        decoding: Decoding | None = None,
        regenerate_per_record: bool = False,
    ):
        self.backend = backend
        self.registry = registry or builtin_registry()
        self.templates = templates or default_templates(self.registry.locale)
        self.decoding = decoding or Decoding()
        self.regenerate_per_record = regenerate_per_record
        self._shared: dict[str, Future] = {}
        self._shared_lock = threading.Lock()

    def criterion(self, criterion: Criterion | str) -> Criterion:
        return criterion if isinstance(criterion, Criterion) else self.registry.get(criterion)

    # -- stage 1 -----------------------------------------------------------

    def generate_checklist(
        self,
        criterion: Criterion | str,
        source_text: str | None,
        mode: EvaluationMode | str,
        *,
        text_id: str | None = None,
        salt: str | None = None,
    ) -> tuple[Checklist, ParseDiagnostics, Completion]:
        criterion = self.criterion(criterion)
        mode = EvaluationMode.parse(mode)
        request = build_generation_prompt(criterion, source_text, mode, templates=self.templates, decoding=self.decoding)
        if salt is not None:
            request = replace(request, cache_salt=salt)
        completion = self.backend.complete_ex(request)
        if mode is EvaluationMode.CRITERION_GUIDED:
            provenance = Provenance.criterion_only()
        else:
            provenance = Provenance.from_text(text_id, mode.generation_source)
        checklist, diag = parse_checklist(completion.text, criterion, provenance)
        return checklist, diag, completion

    def _criterion_checklist(self, criterion: Criterion, record_id: str):
        if self.regenerate_per_record:
            return self.generate_checklist(criterion, None, EvaluationMode.CRITERION_GUIDED, salt=record_id)
        with self._shared_lock:
            pending = self._shared.get(criterion.name)
            owner = pending is None
            if owner:
                pending = Future()
                self._shared[criterion.name] = pending
        if owner:
            try:
                pending.set_result(self.generate_checklist(criterion, None, EvaluationMode.CRITERION_GUIDED))
            except BaseException as exc:
                pending.set_exception(exc)
        return pending.result()

    # -- stage 2 -----------------------------------------------------------

    def assess(
        self,
        checklist: Checklist,
        text: str,
        mode: EvaluationMode | str,
        *,
        reference: str | None = None,
    ) -> tuple[Assessment, ParseDiagnostics, list[Completion]]:
        """Score ``text`` against ``checklist``.

        Unparseable or incomplete judge output triggers one retry with a
        stricter format instruction; remaining gaps count as absent.
        """
        mode = EvaluationMode.parse(mode)
        criterion = checklist.criterion
        kwargs = dict(templates=self.templates, decoding=self.decoding)
        first = self.backend.complete_ex(
            build_evaluation_prompt(criterion, checklist, text, reference, mode, **kwargs)
        )
        completions = [first]
        try:
            verdicts, diag = parse_verdicts(first.text, checklist)
        except UnparseableVerdictsError:
            verdicts, diag = None, None
        if verdicts is None or diag.missing:
            retry = self.backend.complete_ex(
                build_evaluation_prompt(criterion, checklist, text, reference, mode, strict=True, **kwargs)
            )
            completions.append(retry)
            try:
                v2, d2 = parse_verdicts(retry.text, checklist)
            except UnparseableVerdictsError:
                if verdicts is None:
                    raise
            else:
                if verdicts is None or len(d2.missing) <= len(diag.missing):
                    verdicts, diag = v2, d2
            diag.warnings.insert(0, ParseWarning("retry", None, "judge output incomplete; retried once"))
        return Assessment.for_checklist(checklist, verdicts), diag, completions

    # -- runs --------------------------------------------------------------

    def _single(
        self,
        kind: str,
        mode: EvaluationMode,
        record: EvalRecord,
        criterion: Criterion,
        checklist_out: tuple[Checklist, ParseDiagnostics, Completion],
        text: str,
        reference: str | None,
        started: str,
    ) -> PipelineRun:
        checklist, gen_diag, gen = checklist_out
        assessment, eval_diag, evals = self.assess(checklist, text, mode, reference=reference)
        normalized = assessment.normalized_score
        scores = Scores(
            raw=assessment.raw_score,
            normalized=normalized,
            recall=normalized if mode is EvaluationMode.REFERENCE_GUIDED else None,
            precision=normalized if mode is EvaluationMode.CANDIDATE_GUIDED else None,
        )
        completions = [gen, *evals]
        metadata = {
            "model_name": self.backend.config.model_name,
            "started": started,
            "finished": _now(),
            "cache_hits": sum(1 for c in completions if c.cache_hit),
            "cache_digests": [c.digest for c in completions],
            "diagnostics": {
                "generation": gen_diag.to_dict(),
                "evaluation": eval_diag.to_dict(),
            },
        }
        return PipelineRun(kind, criterion, record, scores, mode, checklist, assessment, (), metadata)

    def _guarded(self, record: EvalRecord, criterion: Criterion | str, fn) -> PipelineRun:
        name = criterion.name if isinstance(criterion, Criterion) else str(criterion)
        try:
            return fn(self.criterion(criterion))
        except PipelineError:
            raise
        except CheckEvalError as exc:
            raise PipelineError(record.record_id, name, exc) from exc

    def run_reference_guided(self, record: EvalRecord, criterion: Criterion | str) -> PipelineRun:
        def go(crit: Criterion) -> PipelineRun:
            if record.reference_text is None:
                raise InvalidArgumentError("reference-guided runs need reference_text")
            started = _now()
            gen = self.generate_checklist(
                crit, record.reference_text, EvaluationMode.REFERENCE_GUIDED, text_id=record.record_id
            )
            return self._single(
                "reference-guided", EvaluationMode.REFERENCE_GUIDED, record, crit, gen,
                record.candidate_text, None, started,
            )

        return self._guarded(record, criterion, go)

    def run_candidate_guided(self, record: EvalRecord, criterion: Criterion | str) -> PipelineRun:
        def go(crit: Criterion) -> PipelineRun:
            if record.reference_text is None:
                raise InvalidArgumentError("candidate-guided runs need reference_text to assess")
            started = _now()
            gen = self.generate_checklist(
                crit, record.candidate_text, EvaluationMode.CANDIDATE_GUIDED, text_id=record.record_id
            )
            return self._single(
                "candidate-guided", EvaluationMode.CANDIDATE_GUIDED, record, crit, gen,
                record.reference_text, None, started,
            )

        return self._guarded(record, criterion, go)

    def run_criterion_guided(self, record: EvalRecord, criterion: Criterion | str) -> PipelineRun:
        def go(crit: Criterion) -> PipelineRun:
            if record.reference_text is None:
                raise InvalidArgumentError("criterion-guided runs need the source document as reference_text")
            started = _now()
            gen = self._criterion_checklist(crit, record.record_id)
            return self._single(
                "criterion-guided", EvaluationMode.CRITERION_GUIDED, record, crit, gen,
                record.candidate_text, record.reference_text, started,
            )

        return self._guarded(record, criterion, go)

    def run_f1(self, record: EvalRecord, criterion: Criterion | str) -> PipelineRun:
        recall_run = self.run_reference_guided(record, criterion)
        precision_run = self.run_candidate_guided(record, criterion)
        recall = recall_run.scores.normalized
        precision = precision_run.scores.normalized
        scores = Scores(recall=recall, precision=precision, f1=f1(recall, precision))
        metadata = {
            "model_name": self.backend.config.model_name,
            "started": recall_run.metadata["started"],
            "finished": precision_run.metadata["finished"],
            "cache_hits": recall_run.metadata["cache_hits"] + precision_run.metadata["cache_hits"],
            "cache_digests": [*recall_run.metadata["cache_digests"], *precision_run.metadata["cache_digests"]],
        }
        return PipelineRun(
            "f1", recall_run.criterion, record, scores, parts=(recall_run, precision_run), metadata=metadata
        )

    def run(self, record: EvalRecord, criterion: Criterion | str, kind: str) -> PipelineRun:
        kind = parse_kind(kind)
        method = {
            "reference-guided": self.run_reference_guided,
            "candidate-guided": self.run_candidate_guided,
            "criterion-guided": self.run_criterion_guided,
            "f1": self.run_f1,
        }[kind]
        return method(record, criterion)

    def run_batch(
        self,
        dataset: Sequence[EvalRecord],
        criteria: Sequence[Criterion | str],
        kind: str,
        *,
        parallelism: int = 1,
        fail_fast: bool = False,
    ) -> list[PipelineRun | RunFailure]:
        """One result per (record, criterion), record-major, in input order.

        Failures are returned as :class:`RunFailure` in their slot unless
        ``fail_fast`` is set, in which case the first error is raised.
        """
        if parallelism < 1:
            raise InvalidArgumentError("parallelism must be >= 1")
        kind = parse_kind(kind)
        resolved = [self.criterion(c) for c in criteria]
        jobs = [(record, crit) for record in dataset for crit in resolved]
        results: list[PipelineRun | RunFailure | None] = [None] * len(jobs)
        with ThreadPoolExecutor(max_workers=parallelism, thread_name_prefix="checkeval") as pool:
            futures = [pool.submit(self.run, record, crit, kind) for record, crit in jobs]
            if fail_fast:
                done, _ = wait(futures, return_when=FIRST_EXCEPTION)
                for fut in futures:
                    if fut.done() and fut.exception() is not None:
                        for other in futures:
                            other.cancel()
                        raise fut.exception()
            for i, fut in enumerate(futures):
                record, crit = jobs[i]
                try:
                    results[i] = fut.result()
                except CheckEvalError as exc:
                    log.warning("run failed: %s", exc)
                    results[i] = RunFailure(kind, crit, record, exc)
        return results  # type: ignore[return-value]


def _engine(backend: Backend, registry: CriteriaRegistry | None) -> CheckEval:
    return CheckEval(backend, registry)


def run_reference_guided(record, criterion, backend, registry=None) -> PipelineRun:
    return _engine(backend, registry).run_reference_guided(record, criterion)


def run_candidate_guided(record, criterion, backend, registry=None) -> PipelineRun:
    return _engine(backend, registry).run_candidate_guided(record, criterion)


def run_criterion_guided(record, criterion, backend, registry=None) -> PipelineRun:
    return _engine(backend, registry).run_criterion_guided(record, criterion)


def run_f1(record, criterion, backend, registry=None) -> PipelineRun:
    return _engine(backend, registry).run_f1(record, criterion)


def run_batch(dataset, criteria, mode, backend, registry=None, parallelism: int = 1, *, fail_fast: bool = False, regenerate_per_record: bool = False):
    engine = CheckEval(backend, registry, regenerate_per_record=regenerate_per_record)
    return engine.run_batch(dataset, criteria, mode, parallelism=parallelism, fail_fast=fail_fast)
