"""Criterion registry: built-in definitions plus user-supplied criteria files.

Custom criteria are TOML documents::

    [[criterion]]
    name = "legal-accuracy"
    definition = "the summary states the legal holding correctly."
    adjective = "legally accurate"   # optional
    label = "Legal accuracy"         # optional
    override = false                 # required to replace a built-in

An empty file is valid and leaves the registry unchanged.
"""

from __future__ import annotations

import re
import sys
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConflictError, InvalidArgumentError, NotFoundError, ParseError
from .model import BUILTIN_CRITERIA, Criterion

LOCALES = ("en", "pt")
_ALLOWED_KEYS = {"name", "definition", "adjective", "label", "override"}


@dataclass(frozen=True)
class CriteriaRegistry:
    entries: Mapping[str, Criterion]
    locale: str = "en"

    def __post_init__(self) -> None:
        entries = {}
        for key, crit in dict(self.entries).items():
            key = key.strip().lower()
            if key != crit.name:
                raise InvalidArgumentError(f"registry key {key!r} does not match criterion {crit.name!r}")
            entries[key] = crit
        object.__setattr__(self, "entries", MappingProxyType(entries))

    def get(self, name: str) -> Criterion:
        return get_criterion(name, self)

    def names(self) -> list[str]:
        return list(self.entries)

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and name.strip().lower() in self.entries

    def __iter__(self) -> Iterator[Criterion]:
        return iter(self.entries.values())

    def __len__(self) -> int:
        return len(self.entries)


def _read_toml(text: str, path: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ParseError(str(exc), line=line, path=path) from exc


def _table_lines(text: str) -> list[int]:
    """1-based line numbers of each ``[[criterion]]`` header, in order."""
    return [i for i, line in enumerate(text.splitlines(), start=1) if line.strip() == "[[criterion]]"]


def _parse_entries(text: str, path: str) -> list[tuple[Criterion, bool]]:
    doc = _read_toml(text, path)
    tables = doc.get("criterion", [])
    if not isinstance(tables, list):
        raise ParseError("'criterion' must be an array of tables ([[criterion]])", path=path)
    header_lines = _table_lines(text)
    out = []
    for i, table in enumerate(tables):
        line = header_lines[i] if i < len(header_lines) else None
        if not isinstance(table, dict):
            raise ParseError("criterion entry must be a table", line=line, path=path)
        unknown = set(table) - _ALLOWED_KEYS
        if unknown:
            raise ParseError(f"unknown keys {sorted(unknown)}", line=line, path=path)
        name = table.get("name")
        definition = table.get("definition")
        if not isinstance(name, str) or not name.strip():
            raise ParseError("criterion needs a non-empty string 'name'", line=line, path=path)
        if not isinstance(definition, str) or not definition.strip():
            raise ParseError(f"criterion {name!r} needs a non-empty string 'definition'", line=line, path=path)
        override = table.get("override", False)
        if not isinstance(override, bool):
            raise ParseError("'override' must be a boolean", line=line, path=path)
        crit = Criterion(
            name=name,
            definition=definition.strip(),
            label=table.get("label", ""),
            adjective=table.get("adjective", ""),
        )
        out.append((crit, override))
    return out


def builtin_registry(locale: str = "en") -> CriteriaRegistry:
    """Registry holding the four built-in criteria for ``locale``."""
    if locale not in LOCALES:
        raise InvalidArgumentError(f"unsupported locale {locale!r}; available: {list(LOCALES)}")
    source = resources.files("checkeval") / "data" / "criteria" / f"{locale}.toml"
    text = source.read_text(encoding="utf-8")
    entries = {crit.name: crit for crit, _ in _parse_entries(text, f"<builtin {locale}>")}
    missing = set(BUILTIN_CRITERIA) - set(entries)
    if missing:
        raise ConflictError(f"built-in criteria file for {locale!r} lacks {sorted(missing)}")
    return CriteriaRegistry(entries, locale)


def get_criterion(name: str, registry: CriteriaRegistry) -> Criterion:
    key = name.strip().lower() if isinstance(name, str) else ""
    try:
        return registry.entries[key]
    except KeyError:
        raise NotFoundError(
            f"unknown criterion {name!r}; available: {', '.join(sorted(registry.entries))}"
        ) from None


def load_custom_criteria(path: str | Path, registry: CriteriaRegistry) -> CriteriaRegistry:
    """Return a new registry with the criteria from ``path`` merged in."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    parsed = _parse_entries(text, str(path))
    entries = dict(registry.entries)
    seen_in_file: set[str] = set()
    for crit, override in parsed:
        if crit.name in seen_in_file:
            raise ConflictError(f"{path}: criterion {crit.name!r} defined twice")
        seen_in_file.add(crit.name)
        if crit.name in entries and not override:
            raise ConflictError(
                f"{path}: criterion {crit.name!r} already exists; set override = true to replace it"
            )
        entries[crit.name] = crit
    return CriteriaRegistry(entries, registry.locale)
