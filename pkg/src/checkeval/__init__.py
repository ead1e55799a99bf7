"""Checklist-based evaluation of generated text with an LLM judge."""

from __future__ import annotations

from .backend import Backend, BackendConfig, BackendMode, FunctionTransport, HttpTransport, ResponseCache, cache_key, complete
from .criteria import CriteriaRegistry, builtin_registry, get_criterion, load_custom_criteria
from .datasets import load_human_scores, load_pairwise, load_summeval
from .engine import (
    CheckEval,
    PipelineRun,
    RunFailure,
    Scores,
    run_batch,
    run_candidate_guided,
    run_criterion_guided,
    run_f1,
    run_reference_guided,
)
from .errors import CheckEvalError
from .model import (
    Assessment,
    Checklist,
    ChecklistItem,
    Criterion,
    EvalRecord,
    EvaluationMode,
    Provenance,
    Verdict,
    f1,
    normalized_score,
)
from .parsing import ParseDiagnostics, parse_checklist, parse_verdicts, validate_checklist
from .prompts import ChatRequest, Decoding, build_evaluation_prompt, build_generation_prompt
from .stats import CorrelationReport, PairedSeries, build_report, kendall_tau_b, pearson, spearman

__version__ = "0.1.0"

__all__ = [
    "Assessment",
    "Backend",
    "BackendConfig",
    "BackendMode",
    "ChatRequest",
    "CheckEval",
    "CheckEvalError",
    "Checklist",
    "ChecklistItem",
    "CorrelationReport",
    "CriteriaRegistry",
    "Criterion",
    "Decoding",
    "EvalRecord",
    "EvaluationMode",
    "FunctionTransport",
    "HttpTransport",
    "PairedSeries",
    "ParseDiagnostics",
    "PipelineRun",
    "Provenance",
    "ResponseCache",
    "RunFailure",
    "Scores",
    "Verdict",
    "build_evaluation_prompt",
    "build_generation_prompt",
    "build_report",
    "builtin_registry",
    "cache_key",
    "complete",
    "f1",
    "get_criterion",
    "kendall_tau_b",
    "load_custom_criteria",
    "load_human_scores",
    "load_pairwise",
    "load_summeval",
    "normalized_score",
    "parse_checklist",
    "parse_verdicts",
    "pearson",
    "run_batch",
    "run_candidate_guided",
    "run_criterion_guided",
    "run_f1",
    "run_reference_guided",
    "spearman",
    "validate_checklist",
]
