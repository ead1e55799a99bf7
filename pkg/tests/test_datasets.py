from __future__ import annotations

import csv
import json

import pytest

from checkeval.datasets import load_dataset, load_human_scores, load_pairwise, load_summeval
from checkeval.errors import InvalidArgumentError, ParseError

from .conftest import REPO


def _pairs(path, n, source="expert"):
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "text_1", "text_2", "similarity", "annotation_source"])
        for i in range(n):
            w.writerow([f"p{i}", f"first text {i}", f"second text {i}", i / n, source])
    return path


def test_pairwise_maps_fields(tmp_path):
    records = load_pairwise(_pairs(tmp_path / "expert.csv", 32))
    assert len(records) == 32
    r = records[1]
    assert (r.reference_text, r.candidate_text) == ("first text 1", "second text 1")
    assert r.human_scores == {"similarity": 1 / 32}


def test_pairwise_seeded_sample_is_reproducible(tmp_path):
    path = _pairs(tmp_path / "heuristic.csv", 300, "heuristic")
    a = [r.record_id for r in load_pairwise(path, sample=100, seed=7)]
    b = [r.record_id for r in load_pairwise(path, sample=100, seed=7)]
    assert a == b and len(a) == 100
    assert a != [r.record_id for r in load_pairwise(path, sample=100, seed=8)]
    with pytest.raises(InvalidArgumentError):
        load_pairwise(path, sample=301)


def test_pairwise_filters_annotation_source(tmp_path):
    path = tmp_path / "mixed.tsv"
    path.write_text("id\ttext_1\ttext_2\tsimilarity\tannotation_source\na\tx\ty\t1\texpert\nb\tx\ty\t2\theuristic\n", encoding="utf-8")
    assert [r.record_id for r in load_pairwise(path, annotation_source="heuristic")] == ["b"]


def test_pairwise_empty_text_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,text_1,text_2,similarity\na,x,y,1\nb,x,,2\n", encoding="utf-8")
    with pytest.raises(ParseError, match="row 2"):
        load_pairwise(path)


def test_pairwise_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,text_1,similarity\na,x,1\n", encoding="utf-8")
    with pytest.raises(ParseError, match="text_2"):
        load_pairwise(path)


def _summeval_line(**kw):
    base = {"id": "d1", "system_id": "M1", "source_document": "src", "candidate_summary": "sum",
            "expert_annotations": [{"coherence": 4, "consistency": 5, "fluency": 5, "relevance": 3},
                                   {"coherence": 5, "consistency": 5, "fluency": 4, "relevance": 3}]}
    base.update(kw)
    return json.dumps(base)


def test_summeval_averages_annotations(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text(_summeval_line() + "\n", encoding="utf-8")
    (r,) = load_summeval(path)
    assert r.human_scores["coherence"] == 4.5
    assert r.record_id == "d1:M1" and r.doc_id == "d1" and r.system_id == "M1"
    assert (r.reference_text, r.candidate_text) == ("src", "sum")


def test_summeval_public_field_aliases(tmp_path):
    path = tmp_path / "s.jsonl"
    obj = {"id": "d2", "model_id": "M9", "text": "src", "decoded": "sum", "expert_annotations": [{"fluency": 2}], "extra": 1}
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    assert load_summeval(path)[0].record_id == "d2:M9"


@pytest.mark.parametrize(
    ("override", "needle"),
    [({"expert_annotations": []}, "annotation"), ({"candidate_summary": " "}, "summary"),
     ({"expert_annotations": [{"fluency": 9}]}, "scale")],
)
def test_summeval_rejects_bad_lines(tmp_path, override, needle):
    path = tmp_path / "s.jsonl"
    path.write_text(_summeval_line() + "\n" + _summeval_line(system_id="M2", **override) + "\n", encoding="utf-8")
    with pytest.raises(ParseError, match=needle) as info:
        load_summeval(path)
    assert info.value.line == 2


def test_bundled_fixture_loads_six_records():
    path = REPO / "benchmarks" / "synthetic" / "records.jsonl"
    records = load_dataset(path, "summeval")
    assert len(records) == 6
    assert [r.record_id for r in records] == [f"d{d}:sys-{s}" for d in (1, 2) for s in "abc"]
    assert load_dataset(path, "summeval") == records


def test_human_scores_jsonl_and_csv(tmp_path):
    j = tmp_path / "h.jsonl"
    j.write_text('{"record_id": "a", "scores": {"Consistency": 4}}\n', encoding="utf-8")
    assert load_human_scores(j) == {"a": {"consistency": 4.0}}
    c = tmp_path / "h.csv"
    c.write_text("record_id,consistency,relevance\na,4,\nb,3,2\n", encoding="utf-8")
    assert load_human_scores(c) == {"a": {"consistency": 4.0}, "b": {"consistency": 3.0, "relevance": 2.0}}
    j.write_text('{"id": "a"}\n', encoding="utf-8")
    with pytest.raises(ParseError):
        load_human_scores(j)
