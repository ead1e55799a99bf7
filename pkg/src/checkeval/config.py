"""Benchmark run configuration (TOML).

Example::

    mode = "criterion-guided"        # reference-guided | candidate-guided | criterion-guided | f1
    criteria = ["consistency", "relevance"]
    scoring = "normalized"           # or "raw"
    aggregation = "pooled"           # or "per-document"
    coefficients = ["pearson", "spearman", "kendall"]
    parallelism = 4
    output_dir = "out"
    seed = 0
    fail_fast = false
    regenerate_checklist_per_record = false
    locale = "en"
    # criteria_file = "my_criteria.toml"
    # templates_dir = "my_templates/"

    [dataset]
    path = "records.jsonl"
    format = "summeval"              # or "pairwise"
    # sample = 100
    # annotation_source = "expert"   # pairwise only
    # scale = [1, 5]                 # summeval only

    [backend]
    model = "gpt-4-turbo"
    mode = "replay"                  # live | record | replay
    cache_dir = "cache"
    # base_url = "https://api.openai.com/v1"
    # api_key_env = "OPENAI_API_KEY"
    # timeout = 60
    # max_retries = 4
    # max_concurrency = 4

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backend import DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL, BackendConfig, parse_mode
from .criteria import CriteriaRegistry, builtin_registry, load_custom_criteria
from .datasets import DATASET_FORMATS
from .engine import parse_kind
from .errors import CheckEvalError, ConfigurationError, ParseError
from .stats import AGGREGATIONS, canonical_coefficients

_TOP_KEYS = {
    "mode", "criteria", "scoring", "aggregation", "coefficients", "parallelism", "output_dir",
    "seed", "fail_fast", "regenerate_checklist_per_record", "locale", "criteria_file",
    "templates_dir", "dataset", "backend",
}
_DATASET_KEYS = {"path", "format", "sample", "annotation_source", "scale"}
_BACKEND_KEYS = {
    "model", "mode", "cache_dir", "base_url", "api_key_env", "timeout", "max_retries", "max_concurrency",
}


@dataclass(frozen=True)
class RunConfig:
    mode: str
    criteria: tuple[str, ...]
    backend: BackendConfig
    dataset_path: Path
    dataset_format: str
    output_dir: Path
    scoring: str = "normalized"
    aggregation: str = "pooled"
    coefficients: tuple[str, ...] = ("pearson", "spearman", "kendall")
    parallelism: int = 1
    seed: int = 0
    fail_fast: bool = False
    regenerate_per_record: bool = False
    locale: str = "en"
    sample: int | None = None
    annotation_source: str | None = None
    scale: tuple[float, float] | None = (1, 5)
    criteria_file: Path | None = None
    templates_dir: Path | None = None
    raw: dict = field(default_factory=dict, compare=False)

    def registry(self) -> CriteriaRegistry:
        registry = builtin_registry(self.locale)
        if self.criteria_file is not None:
            registry = load_custom_criteria(self.criteria_file, registry)
        return registry

    def dataset_options(self) -> dict:
        opts: dict = {"sample": self.sample, "seed": self.seed}
        if self.dataset_format == "pairwise":
            opts["annotation_source"] = self.annotation_source
        else:
            opts["scale"] = self.scale
        return opts

    def describe(self) -> dict:
        """Configuration as recorded in the manifest (paths as written)."""
        return {
            "mode": self.mode,
            "criteria": list(self.criteria),
            "scoring": self.scoring,
            "aggregation": self.aggregation,
            "coefficients": list(self.coefficients),
            "parallelism": self.parallelism,
            "seed": self.seed,
            "locale": self.locale,
            "regenerate_checklist_per_record": self.regenerate_per_record,
            "dataset": dict(self.raw.get("dataset", {})),
            "model": self.backend.model_name,
            "backend_mode": self.backend.mode.value,
        }


def _check_keys(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")


def _path(base: Path, value, name: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigurationError(f"{name} must be a non-empty path string")
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_run_config(path: str | Path, *, seed: int | None = None) -> RunConfig:
    """Parse and validate a run config; nothing here touches the network."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc), line=getattr(exc, "lineno", None), path=str(path)) from None
    base = path.parent
    _check_keys(doc, _TOP_KEYS, str(path))
    dataset = doc.get("dataset")
    backend = doc.get("backend")
    if not isinstance(dataset, dict):
        raise ConfigurationError("missing [dataset] table")
    if not isinstance(backend, dict):
        raise ConfigurationError("missing [backend] table")
    _check_keys(dataset, _DATASET_KEYS, "[dataset]")
    _check_keys(backend, _BACKEND_KEYS, "[backend]")

    try:
        mode = parse_kind(doc.get("mode", "criterion-guided"))
        coefficients = canonical_coefficients(doc.get("coefficients", ["pearson", "spearman", "kendall"]))
        backend_mode = parse_mode(backend.get("mode", "live"))
    except CheckEvalError as exc:
        raise ConfigurationError(str(exc)) from None
    scoring = doc.get("scoring", "normalized")
    if scoring not in ("normalized", "raw"):
        raise ConfigurationError("scoring must be 'normalized' or 'raw'")
    aggregation = doc.get("aggregation", "pooled")
    if aggregation not in AGGREGATIONS:
        raise ConfigurationError(f"aggregation must be one of {list(AGGREGATIONS)}")
    fmt = dataset.get("format")
    if fmt not in DATASET_FORMATS:
        raise ConfigurationError(f"dataset.format must be one of {list(DATASET_FORMATS)}")
    dataset_path = _path(base, dataset.get("path"), "dataset.path")
    if not dataset_path.is_file():
        raise ConfigurationError(f"dataset file {dataset_path} does not exist")
    parallelism = doc.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        raise ConfigurationError("parallelism must be an integer >= 1")
    model = backend.get("model")
    if not isinstance(model, str) or not model.strip():
        raise ConfigurationError("backend.model must name the judge model")
    cache_dir = _path(base, backend["cache_dir"], "backend.cache_dir") if "cache_dir" in backend else None
    scale = dataset.get("scale", [1, 5])

    criteria_file = _path(base, doc["criteria_file"], "criteria_file") if "criteria_file" in doc else None
    templates_dir = _path(base, doc["templates_dir"], "templates_dir") if "templates_dir" in doc else None
    if criteria_file is not None and not criteria_file.is_file():
        raise ConfigurationError(f"criteria file {criteria_file} does not exist")
    if templates_dir is not None and not templates_dir.is_dir():
        raise ConfigurationError(f"templates directory {templates_dir} does not exist")

    backend_config = BackendConfig(
        model_name=model,
        base_url=backend.get("base_url", DEFAULT_BASE_URL),
        api_key_env=backend.get("api_key_env", DEFAULT_API_KEY_ENV),
        timeout=float(backend.get("timeout", 60.0)),
        max_retries=int(backend.get("max_retries", 4)),
        max_concurrency=int(backend.get("max_concurrency", max(4, parallelism))),
        cache_dir=cache_dir,
        mode=backend_mode,
    )
    criteria = doc.get("criteria")
    if not isinstance(criteria, list) or not criteria or not all(isinstance(c, str) for c in criteria):
        raise ConfigurationError("criteria must be a non-empty list of names")
    config = RunConfig(
        mode=mode,
        criteria=tuple(c.strip().lower() for c in criteria),
        backend=backend_config,
        dataset_path=dataset_path,
        dataset_format=fmt,
        output_dir=_path(base, doc.get("output_dir", "out"), "output_dir"),
        scoring=scoring,
        aggregation=aggregation,
        coefficients=coefficients,
        parallelism=parallelism,
        seed=int(doc.get("seed", 0)) if seed is None else seed,
        fail_fast=bool(doc.get("fail_fast", False)),
        regenerate_per_record=bool(doc.get("regenerate_checklist_per_record", False)),
        locale=doc.get("locale", "en"),
        sample=dataset.get("sample"),
        annotation_source=dataset.get("annotation_source"),
        scale=tuple(scale) if scale else None,
        criteria_file=criteria_file,
        templates_dir=templates_dir,
        raw=doc,
    )
    try:
        registry = config.registry()
        for name in config.criteria:
            registry.get(name)
    except CheckEvalError as exc:
        raise ConfigurationError(str(exc)) from None
    return config
