from __future__ import annotations

import json
from fractions import Fraction

import pytest

from checkeval.backend import Backend, BackendConfig, BackendMode, FunctionTransport
from checkeval.engine import CheckEval, PipelineRun, RunFailure, Scores, run_batch, run_f1
from checkeval.errors import InvalidArgumentError, PipelineError, ReplayMissError
from checkeval.model import EvalRecord, EvaluationMode
from checkeval.synthetic import checklist_questions, constant_judge, count_judge, is_evaluation, keyword_judge, verdict_json

PAIR = EvalRecord("p1", candidate_text="The cat sat on the mat.", reference_text="The cat sat on the mat.")


def _backend(judge, tmp_path=None, mode="live"):
    cache = None if tmp_path is None else tmp_path / "cache"
    return Backend(BackendConfig(model_name="scripted", cache_dir=cache, mode=BackendMode(mode)), FunctionTransport(judge))


def _engine(judge, **kw):
    return CheckEval(_backend(judge), **kw)


@pytest.mark.parametrize("kind", ["reference-guided", "candidate-guided", "criterion-guided"])
def test_all_yes_identical_texts_score_one(kind):
    run = _engine(constant_judge(True)).run(PAIR, "relevance", kind)
    assert run.scores.normalized == 1.0
    assert run.scores.raw == 4
    assert run.checklist.provenance.matches(run.mode)


def test_all_no_scores_zero_candidate_guided():
    record = EvalRecord("d", candidate_text="Stock markets fell.", reference_text="A recipe for soup.")
    run = _engine(constant_judge(False)).run_candidate_guided(record, "consistency")
    assert run.scores.normalized == 0.0
    assert run.scores.precision == 0.0
    assert run.scores.recall is None and run.scores.f1 is None


def test_provenance_follows_mode():
    engine = _engine(constant_judge(True))
    ref = engine.run_reference_guided(PAIR, "relevance")
    cand = engine.run_candidate_guided(PAIR, "relevance")
    crit = engine.run_criterion_guided(PAIR, "relevance")
    assert ref.checklist.provenance.source == "reference" and ref.checklist.provenance.text_id == "p1"
    assert cand.checklist.provenance.source == "candidate"
    assert crit.checklist.provenance.source == "criterion"
    assert ref.scores.recall == ref.scores.normalized


def test_ten_items_six_yes():
    run = _engine(count_judge(10, 6)).run_criterion_guided(PAIR, "coherence")
    assert (run.scores.raw, run.scores.normalized) == (6, 0.6)


@pytest.mark.parametrize("method", ["run_reference_guided", "run_candidate_guided", "run_criterion_guided"])
def test_missing_reference_is_invalid_argument(method):
    record = EvalRecord("solo", candidate_text="only a candidate")
    with pytest.raises(PipelineError) as info:
        getattr(_engine(constant_judge(True)), method)(record, "fluency")
    assert isinstance(info.value.cause, InvalidArgumentError)
    assert "solo" in str(info.value)


def _split_judge(body):
    """Reference checklists get 4 items, candidate ones 5; the first 3 are always yes."""
    if is_evaluation(body):
        return verdict_json([i < 3 for i in range(len(checklist_questions(body)))])
    user = body["messages"][1]["content"]
    n = 4 if user.startswith("REF") else 5
    return json.dumps([f"Is point {i} covered?" for i in range(n)])


def test_f1_from_recall_and_precision():
    record = EvalRecord("x", candidate_text="CAND text", reference_text="REF text")
    run = run_f1(record, "relevance", _backend(_split_judge))
    assert run.scores.recall == 0.75
    assert run.scores.precision == 0.6
    assert run.scores.f1 == pytest.approx(float(Fraction(2, 3)), abs=1e-15)
    recall_run, precision_run = run.parts
    assert recall_run.mode is EvaluationMode.REFERENCE_GUIDED
    assert precision_run.mode is EvaluationMode.CANDIDATE_GUIDED


def test_f1_extremes():
    assert _engine(constant_judge(True)).run_f1(PAIR, "relevance").scores.f1 == 1.0
    assert _engine(constant_judge(False)).run_f1(PAIR, "relevance").scores.f1 == 0.0


def test_swapping_texts_swaps_recall_and_precision():
    judge = keyword_judge()
    record = EvalRecord(
        "s", reference_text="Volcanoes erupted yesterday. Villagers evacuated quickly. Airlines cancelled flights.",
        candidate_text="Volcanoes erupted. Scientists measured seismic tremors.",
    )
    swapped = EvalRecord("s", reference_text=record.candidate_text, candidate_text=record.reference_text)
    a = _engine(judge).run_f1(record, "relevance").scores
    b = _engine(judge).run_f1(swapped, "relevance").scores
    assert (a.recall, a.precision) == (b.precision, b.recall)
    assert a.f1 == b.f1
    assert a.recall != a.precision


def test_scores_invariants():
    assert Scores(raw=1, normalized=0.5, recall=0.5).f1 is None
    with pytest.raises(InvalidArgumentError):
        Scores(recall=0.5, precision=0.5)
    with pytest.raises(InvalidArgumentError):
        Scores(recall=0.5, precision=0.5, f1=0.4)


def test_criterion_checklist_generated_once_per_criterion():
    calls = []

    def judge(body):
        if not is_evaluation(body):
            calls.append(body)
        return constant_judge(True)(body)

    records = [EvalRecord(f"r{i}", f"cand {i}", f"ref {i}") for i in range(6)]
    engine = _engine(judge)
    runs = engine.run_batch(records, ["consistency", "relevance"], "criterion-guided", parallelism=4)
    assert len(calls) == 2
    assert len({r.checklist.digest for r in runs if r.criterion_name == "consistency"}) == 1

    calls.clear()
    _engine(judge, regenerate_per_record=True).run_batch(records, ["consistency"], "criterion-guided")
    assert len(calls) == 6


def test_incomplete_verdicts_retry_once_then_fill():
    seen = []

    def judge(body):
        if not is_evaluation(body):
            return json.dumps(["A?", "B?", "C?", "D?"])
        seen.append(body)
        return verdict_json([True, True, True])

    run = _engine(judge).run_criterion_guided(PAIR, "fluency")
    assert len(seen) == 2
    assert "exactly 4 objects" in seen[1]["messages"][0]["content"]
    assert run.scores.raw == 3
    warnings = run.metadata["diagnostics"]["evaluation"]["warnings"]
    assert [w["rule_id"] for w in warnings] == ["retry", "missing"]


def test_garbage_then_good_verdicts_recovers():
    answers = iter(["the summary is fine", verdict_json([True, False, True, False])])

    def judge(body):
        if not is_evaluation(body):
            return json.dumps(["A?", "B?", "C?", "D?"])
        return next(answers)

    assert _engine(judge).run_criterion_guided(PAIR, "fluency").scores.raw == 2


def test_run_batch_order_and_embedded_failures(tmp_path):
    records = [EvalRecord(f"r{i}", f"candidate {i}", f"reference {i}") for i in range(3)]
    (tmp_path / "cache").mkdir()
    recorder = CheckEval(_backend(constant_judge(True), tmp_path, "record"))
    recorder.run_batch(records, ["consistency", "relevance"], "reference-guided")

    replay = CheckEval(_backend(constant_judge(True), tmp_path, "replay"))
    runs = replay.run_batch(records, ["consistency", "relevance"], "reference-guided", parallelism=4)
    assert [(r.record_id, r.criterion_name) for r in runs] == [
        (f"r{i}", c) for i in range(3) for c in ("consistency", "relevance")
    ]
    assert all(isinstance(r, PipelineRun) for r in runs)

    extra = [*records[:2], EvalRecord("new", "unseen candidate", "unseen reference")]
    mixed = replay.run_batch(extra, ["consistency", "relevance"], "reference-guided", parallelism=3)
    failures = [r for r in mixed if isinstance(r, RunFailure)]
    assert len(mixed) == 6 and len(failures) == 2
    assert all(f.record_id == "new" and f.digest for f in failures)

    with pytest.raises(PipelineError) as info:
        replay.run_batch(extra, ["consistency"], "reference-guided", fail_fast=True)
    assert isinstance(info.value.cause, ReplayMissError)


def test_replay_identical_across_parallelism(tmp_path):
    records = [EvalRecord(f"r{i}", f"the candidate number {i} mentions volcanoes", f"reference {i} about volcanoes") for i in range(5)]
    (tmp_path / "cache").mkdir()
    CheckEval(_backend(keyword_judge({"coherence": ["volcanoes", "number"]}), tmp_path, "record")).run_batch(
        records, ["coherence"], "f1"
    )

    def scores(parallelism):
        engine = CheckEval(_backend(lambda b: "unused", tmp_path, "replay"))
        return [r.scores for r in engine.run_batch(records, ["coherence"], "f1", parallelism=parallelism)]

    assert scores(1) == scores(4) == scores(1)


def test_module_level_run_batch():
    records = [EvalRecord("a", "x y", "x y"), EvalRecord("b", "z", "z")]
    runs = run_batch(records, ["fluency"], "criterion-guided", _backend(constant_judge(True)), parallelism=2)
    assert [r.record_id for r in runs] == ["a", "b"]
    with pytest.raises(InvalidArgumentError):
        run_batch(records, ["fluency"], "criterion-guided", _backend(constant_judge(True)), parallelism=0)


def test_single_replay_miss_leaves_other_runs_intact(tmp_path):
    records = [EvalRecord(f"r{i}", f"candidate {i}", f"reference {i}") for i in range(6)]
    (tmp_path / "cache").mkdir()
    CheckEval(_backend(constant_judge(True), tmp_path, "record")).run_batch(records[:5], ["relevance"], "reference-guided")
    runs = CheckEval(_backend(constant_judge(True), tmp_path, "replay")).run_batch(records, ["relevance"], "reference-guided", parallelism=4)
    assert [r.ok for r in runs] == [True] * 5 + [False]
    assert isinstance(runs[-1].error.cause, ReplayMissError)
