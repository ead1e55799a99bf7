"""Re-record the frozen cache and golden report for the synthetic benchmark.

The judge is the scripted keyword judge, so no provider or API key is needed.
Usage: python3 record.py
"""

from __future__ import annotations

import shutil
from dataclasses import replace
from pathlib import Path

from checkeval.backend import BackendMode, FunctionTransport
from checkeval.cli import run_benchmark
from checkeval.config import load_run_config
from checkeval.synthetic import keyword_judge

HERE = Path(__file__).resolve().parent

KEYWORDS = {
    "consistency": ["emissions", "fossil", "temperature", "rainfall", "farmers", "reservoirs"],
    "relevance": ["warming", "heat", "drought", "irrigation", "policy", "coastline"],
}


def main() -> None:
    shutil.rmtree(HERE / "cache", ignore_errors=True)
    (HERE / "cache").mkdir()
    config = load_run_config(HERE / "config.toml")
    recording = replace(config, backend=replace(config.backend, mode=BackendMode.RECORD))
    run_benchmark(recording, transport=FunctionTransport(keyword_judge(KEYWORDS)))
    # golden files come from a replay pass, exactly as users will run it
    run_benchmark(config)
    golden = HERE / "golden"
    golden.mkdir(exist_ok=True)
    for name in ("report.txt", "report.csv", "manifest.jsonl"):
        shutil.copyfile(config.output_dir / name, golden / name)
    shutil.rmtree(config.output_dir)


if __name__ == "__main__":
    main()
