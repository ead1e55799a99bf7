"""Command-line interface.

Exit codes: 0 success, 1 runtime failure (backend, replay miss, parsing of
judge output), 2 usage or validation error. The API key is read from the
environment variable named by ``--api-key-env`` and never from a flag.
"""

from __future__ import annotations

import functools
import json
import logging
import random
import sys
from pathlib import Path

import click

from . import __version__
from .backend import DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL, Backend, BackendConfig, ResponseCache, parse_mode
from .config import RunConfig, load_run_config
from .criteria import builtin_registry, load_custom_criteria
from .datasets import SIMILARITY_KEY, humans_from_records, load_dataset, load_human_scores
from .engine import RUN_KINDS, CheckEval
from .errors import (
    CheckEvalError,
    ConfigurationError,
    ConflictError,
    InvalidArgumentError,
    NotFoundError,
    ParseError,
    PipelineError,
    ReplayMissError,
)
from .manifest import completed, read_manifest, run_entry, write_manifest
from .model import EvalRecord, EvaluationMode
from .parsing import NOT_MACHINE_CHECKED, validate_checklist
from .prompts import TemplateSet
from .report import render_table, reports_for_runs, to_csv
from .stats import AGGREGATIONS, canonical_coefficients

EXIT_RUNTIME = 1
EXIT_USAGE = 2

_VALIDATION = (InvalidArgumentError, NotFoundError, ConflictError, ConfigurationError, ParseError)


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, PipelineError) else exc
    if isinstance(cause, ReplayMissError):
        return EXIT_RUNTIME
    if isinstance(exc, PipelineError):
        return EXIT_USAGE if isinstance(cause, InvalidArgumentError) else EXIT_RUNTIME
    return EXIT_USAGE if isinstance(exc, _VALIDATION) else EXIT_RUNTIME


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CheckEvalError as exc:
            click.echo(f"error: {exc}", err=True)
            cause = exc.cause if isinstance(exc, PipelineError) else exc
            if isinstance(cause, ReplayMissError):
                click.echo(f"replay miss digest: {cause.digest}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


def backend_options(fn):
    options = [
        click.option("--model", envvar="CHECKEVAL_MODEL", required=True, help="Judge model id (env CHECKEVAL_MODEL)."),
        click.option("--base-url", envvar="CHECKEVAL_BASE_URL", default=DEFAULT_BASE_URL, show_default=True),
        click.option("--api-key-env", default=DEFAULT_API_KEY_ENV, show_default=True,
                     help="Name of the environment variable holding the API key."),
        click.option("--backend-mode", type=click.Choice(["live", "record", "replay"]), default="live", show_default=True),
        click.option("--cache-dir", envvar="CHECKEVAL_CACHE_DIR", type=click.Path(file_okay=False, path_type=Path)),
        click.option("--timeout", type=float, default=60.0, show_default=True),
        click.option("--max-retries", type=int, default=4, show_default=True),
        click.option("--locale", type=click.Choice(["en", "pt"]), default="en", show_default=True),
        click.option("--criteria-file", type=click.Path(exists=True, dir_okay=False, path_type=Path)),
        click.option("--templates-dir", type=click.Path(exists=True, file_okay=False, path_type=Path)),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _engine(opts: dict) -> CheckEval:
    config = BackendConfig(
        model_name=opts["model"],
        base_url=opts["base_url"],
        api_key_env=opts["api_key_env"],
        timeout=opts["timeout"],
        max_retries=opts["max_retries"],
        cache_dir=opts["cache_dir"],
        mode=parse_mode(opts["backend_mode"]),
    )
    registry = builtin_registry(opts["locale"])
    if opts["criteria_file"] is not None:
        registry = load_custom_criteria(opts["criteria_file"], registry)
    templates = TemplateSet.load(opts["locale"], opts["templates_dir"])
    return CheckEval(Backend(config), registry, templates=templates)


def _read(path: Path | None) -> str:
    if path is None or str(path) == "-":
        return click.get_text_stream("stdin").read()
    return Path(path).read_text(encoding="utf-8")


def _print_diagnostics(diag, checklist) -> None:
    for w in diag.warnings:
        where = f" item {w.item_index}" if w.item_index is not None else ""
        click.echo(f"warning [{w.rule_id}]{where}: {w.message}", err=True)
    for v in validate_checklist(checklist):
        click.echo(f"violation [{v.rule_id}] item {v.item_index}: {v.message}", err=True)
    unchecked = ", ".join(str(r) for r in sorted(NOT_MACHINE_CHECKED))
    click.echo(f"note: rules {unchecked} are not machine-checked", err=True)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", count=True, help="Log more (repeatable).")
def main(verbose: int) -> None:
    """Checklist-based evaluation of generated text with an LLM judge."""
    level = logging.WARNING - 10 * verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")


@main.command("checklist")
@click.argument("source", required=False, type=click.Path(allow_dash=True, dir_okay=False, path_type=Path))
@click.option("--criterion", required=True)
@click.option("--mode", type=click.Choice([m.value for m in EvaluationMode]), default="reference-guided", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False, path_type=Path), help="Write the checklist here instead of stdout.")
@backend_options
@handle_errors
def cmd_checklist(source, criterion, mode, output, **opts) -> None:
    """Generate a checklist from SOURCE (file or stdin), or from the criterion alone."""
    mode = EvaluationMode.parse(mode)
    if mode is EvaluationMode.CRITERION_GUIDED:
        if source is not None:
            raise click.UsageError("criterion-guided checklists take no source text")
        text = None
    else:
        text = _read(source)
    engine = _engine(opts)
    checklist, diag, _ = engine.generate_checklist(criterion, text, mode, text_id=str(source) if source else "stdin")
    _print_diagnostics(diag, checklist)
    doc = {
        "criterion": checklist.criterion.name,
        "provenance": checklist.provenance.to_dict(),
        "digest": checklist.digest,
        "items": checklist.questions,
    }
    payload = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    if output is None:
        click.echo(payload, nl=False)
    else:
        output.write_text(payload, encoding="utf-8")


@main.command("evaluate")
@click.option("--reference", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--candidate", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--criterion", required=True)
@click.option("--mode", type=click.Choice(RUN_KINDS), default="reference-guided", show_default=True)
@backend_options
@handle_errors
def cmd_evaluate(reference, candidate, criterion, mode, **opts) -> None:
    """Score one candidate and print a JSON score record."""
    if reference is None:
        raise click.UsageError(f"--reference is required for {mode}")
    record = EvalRecord(
        record_id="cli",
        candidate_text=_read(candidate),
        reference_text=_read(reference),
    )
    engine = _engine(opts)
    run = engine.run(record, criterion, mode)
    entry = run_entry(run, 0)
    for key in ("type", "index", "doc_id", "system_id"):
        entry.pop(key, None)
    click.echo(json.dumps(entry, indent=2, ensure_ascii=False))


def run_benchmark(config: RunConfig, *, resume: bool = False, transport=None) -> tuple[str, int]:
    """Run ``config`` and write manifest.jsonl, report.txt and report.csv.

    Returns the rendered table and the number of failed runs. ``transport``
    replaces the HTTP client, e.g. with a scripted judge when recording.
    """
    registry = config.registry()
    templates = TemplateSet.load(config.locale, config.templates_dir)
    records = load_dataset(config.dataset_path, config.dataset_format, **config.dataset_options())
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.jsonl"

    previous: dict = {}
    if resume and manifest_path.is_file():
        _, old = read_manifest(manifest_path)
        previous = completed(old)
    todo = [r for r in records if any((r.record_id, c) not in previous for c in config.criteria)]

    backend = Backend(config.backend, transport, rng=random.Random(config.seed))
    try:
        engine = CheckEval(backend, registry, templates=templates, regenerate_per_record=config.regenerate_per_record)
        results = engine.run_batch(
            todo, list(config.criteria), config.mode, parallelism=config.parallelism, fail_fast=config.fail_fast
        )
    finally:
        backend.close()
    fresh = {(r.record_id, r.criterion_name): r for r in results}

    entries = []
    for record in records:
        for crit in config.criteria:
            key = (record.record_id, crit)
            if key in previous:
                entry = dict(previous[key])
                entry["index"] = len(entries)
            else:
                entry = run_entry(fresh[key], len(entries))
            entries.append(entry)
    header = config.describe()
    header["records"] = len(records)
    write_manifest(manifest_path, header, entries)

    _, manifest_entries = read_manifest(manifest_path)
    reports = reports_for_runs(
        manifest_entries,
        humans_from_records(records),
        config.criteria,
        config.mode,
        coefficients=config.coefficients,
        scoring=config.scoring,
        aggregation=config.aggregation,
        human_key=SIMILARITY_KEY if config.dataset_format == "pairwise" else None,
    )
    table = render_table(reports)
    (out / "report.txt").write_text(table, encoding="utf-8")
    (out / "report.csv").write_text(to_csv(reports), encoding="utf-8")
    return table, sum(1 for e in manifest_entries if not e.ok)


@main.command("benchmark")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, help="Override the config seed.")
@click.option("--resume", is_flag=True, help="Reuse successful runs from an existing manifest.")
@handle_errors
def cmd_benchmark(config_path, seed, resume) -> None:
    """Run a configured benchmark; writes manifest.jsonl, report.txt and report.csv."""
    config = load_run_config(config_path, seed=seed)
    table, failures = run_benchmark(config, resume=resume)
    click.echo(table, nl=False)
    if failures:
        click.echo(f"{failures} runs failed; see {config.output_dir / 'manifest.jsonl'}", err=True)
        sys.exit(EXIT_RUNTIME)


@main.command("report")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--human-scores", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--coefficients", default="pearson,spearman,kendall", show_default=True)
@click.option("--aggregation", type=click.Choice(AGGREGATIONS), default="pooled", show_default=True)
@click.option("--scoring", type=click.Choice(["normalized", "raw"]), default="normalized", show_default=True)
@click.option("--human-key", help="Correlate every criterion against this human score field.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), help="Also write CSV here.")
@handle_errors
def cmd_report(manifest_path, human_scores, coefficients, aggregation, scoring, human_key, csv_path) -> None:
    """Correlate manifest scores with human scores and print the table."""
    try:
        coefs = canonical_coefficients(c for c in coefficients.split(",") if c.strip())
    except InvalidArgumentError as exc:
        raise click.BadParameter(str(exc), param_hint="--coefficients") from None
    header, entries = read_manifest(manifest_path)
    kind = header["config"].get("mode") or (entries[0].kind if entries else "criterion-guided")
    criteria = list(dict.fromkeys(e.criterion_name for e in entries))
    reports = reports_for_runs(
        entries,
        load_human_scores(human_scores),
        criteria,
        kind,
        coefficients=coefs,
        scoring=scoring,
        aggregation=aggregation,
        human_key=human_key,
    )
    click.echo(render_table(reports), nl=False)
    if csv_path is not None:
        csv_path.write_text(to_csv(reports), encoding="utf-8")


@main.group("cache")
def cache_group() -> None:
    """Inspect a response cache."""


@cache_group.command("stats")
@click.option("--cache-dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
def cache_stats(cache_dir) -> None:
    cache = ResponseCache(cache_dir)
    digests = cache.digests()
    size = sum(cache.path_for(d).stat().st_size for d in digests)
    click.echo(f"entries: {len(digests)}\nbytes: {size}")


@cache_group.command("show")
@click.argument("digest")
@click.option("--cache-dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
def cache_show(digest, cache_dir) -> None:
    text = ResponseCache(cache_dir).get(digest)
    if text is None:
        click.echo(f"error: no entry {digest}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(text)


if __name__ == "__main__":
    main()
