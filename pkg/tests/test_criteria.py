from __future__ import annotations

import pytest

from checkeval.criteria import builtin_registry, get_criterion, load_custom_criteria
from checkeval.errors import ConflictError, NotFoundError, ParseError

from .conftest import FIXTURES


@pytest.mark.parametrize("name", ["consistency", "relevance"])
def test_builtin_definitions_byte_match_fixtures(name):
    expected = (FIXTURES / "definitions" / f"{name}.txt").read_text(encoding="utf-8")
    assert get_criterion(name, builtin_registry()).definition == expected


def test_definition_prefixes():
    reg = builtin_registry()
    assert reg.get("consistency").definition.startswith("the factual alignment between the summary and the summarized source")
    assert reg.get("relevance").definition.startswith("selection of important content from the source")


def test_registry_has_builtins_case_insensitive():
    for locale in ("en", "pt"):
        reg = builtin_registry(locale)
        assert set(reg.names()) >= {"consistency", "coherence", "relevance", "fluency"}
        assert all(reg.get(n).definition for n in reg.names())
    assert builtin_registry().get("  COHERENCE ").name == "coherence"


def test_unknown_criterion_lists_available():
    with pytest.raises(NotFoundError) as info:
        get_criterion("speed", builtin_registry())
    assert "consistency" in str(info.value)


def test_custom_file_adds_entry(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[[criterion]]\nname = "legal-accuracy"\ndefinition = "correct legal citations"\n', encoding="utf-8")
    base = builtin_registry()
    reg = load_custom_criteria(path, base)
    assert len(reg) == 5
    assert reg.get("legal-accuracy").definition == "correct legal citations"
    for name in base.names():
        assert reg.get(name) == base.get(name)


def test_redefining_builtin_needs_override(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[[criterion]]\nname = "fluency"\ndefinition = "reads well"\n', encoding="utf-8")
    with pytest.raises(ConflictError):
        load_custom_criteria(path, builtin_registry())
    path.write_text('[[criterion]]\nname = "fluency"\ndefinition = "reads well"\noverride = true\n', encoding="utf-8")
    assert load_custom_criteria(path, builtin_registry()).get("fluency").definition == "reads well"


def test_empty_file_leaves_registry_unchanged(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("", encoding="utf-8")
    base = builtin_registry()
    reg = load_custom_criteria(path, base)
    assert reg.names() == base.names()


def test_malformed_file_reports_line(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[[criterion]]\nname = "x"\ndefinition = \n', encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_custom_criteria(path, builtin_registry())
    assert info.value.line == 3


def test_schema_error_reports_table_line(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('[[criterion]]\nname = "a"\ndefinition = "ok"\n\n[[criterion]]\nname = "b"\n', encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_custom_criteria(path, builtin_registry())
    assert info.value.line == 5
