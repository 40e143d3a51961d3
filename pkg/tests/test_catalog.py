import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptscreen.catalog import (
    DEFAULT_PER_FAMILY,
    PLACEHOLDER,
    PromptCatalog,
    PromptVariant,
    StrategyFamily,
    generate_catalog,
    load_catalog,
    render_prompt,
    resolve_family,
    validate_catalog,
    write_catalog,
)
from promptscreen.dataset import Transcript
from promptscreen.errors import BadTemplate, EmptyCatalog, ParseError, UnknownFamily


def test_default_catalog_shape():
    catalog = generate_catalog()
    assert len(catalog) == 28
    families = [v.family for v in catalog.variants]
    assert len(set(families)) == 7
    for family in StrategyFamily:
        assert families.count(family) == DEFAULT_PER_FAMILY
    for variant in catalog.variants:
        assert variant.template.count(PLACEHOLDER) == 1


def test_default_catalog_ordering():
    catalog = generate_catalog()
    expected = [f"{fam.value}-{i}" for fam in StrategyFamily for i in range(1, 5)]
    assert [v.id for v in catalog.variants] == expected


def test_family_filter():
    catalog = generate_catalog(families=["DI"])
    assert [v.id for v in catalog.variants] == ["DI-1", "DI-2", "DI-3", "DI-4"]


def test_family_aliases():
    assert resolve_family("SCP") is StrategyFamily.SC
    assert resolve_family("SF") is StrategyFamily.SR
    assert resolve_family("cot") is StrategyFamily.COT
    catalog = generate_catalog(families=["SCP"])
    assert all(v.family is StrategyFamily.SC for v in catalog.variants)


def test_unknown_family():
    with pytest.raises(UnknownFamily):
        generate_catalog(families=["XX"])


def test_empty_filter():
    with pytest.raises(EmptyCatalog):
        generate_catalog(indices=[9])


def test_per_family_count():
    assert len(generate_catalog(per_family=2)) == 14
    with pytest.raises(ValueError):
        generate_catalog(per_family=5)


def test_render_substitution():
    variant = PromptVariant(id="DI-1", family=StrategyFamily.DI,
                            template="Classify: {{transcript}}")
    out = render_prompt(variant, Transcript(id="t", text="I feel fine"))
    assert out == "Classify: I feel fine"


def test_render_deterministic():
    variant = generate_catalog().variants[0]
    transcript = Transcript(id="t", text="same words every time")
    assert render_prompt(variant, transcript) == render_prompt(variant, transcript)


@pytest.mark.parametrize("template", ["no placeholder here",
                                      "{{transcript}} and {{transcript}}"])
def test_render_bad_template(template):
    variant = PromptVariant(id="DI-1", family=StrategyFamily.DI, template=template)
    with pytest.raises(BadTemplate):
        render_prompt(variant, Transcript(id="t", text="x"))


@settings(max_examples=60, deadline=None)
@given(st.text(min_size=1, max_size=40).filter(str.strip),
       st.text(min_size=1, max_size=40).filter(str.strip))
def test_render_injective_in_transcript(text_a, text_b):
    variant = generate_catalog().variants[0]
    out_a = render_prompt(variant, Transcript(id="a", text=text_a))
    out_b = render_prompt(variant, Transcript(id="b", text=text_b))
    assert (out_a == out_b) == (text_a == text_b)


def test_validate_default_catalog_clean():
    assert validate_catalog(generate_catalog()) == []


def test_validate_duplicate_id():
    base = generate_catalog().variants
    duped = PromptCatalog(base[:27] + (base[5],))  # repeats RP-2
    report = validate_catalog(duped)
    assert any("duplicate" in line and base[5].id in line for line in report)


def test_validate_count_violation():
    short = PromptCatalog(generate_catalog().variants[:27])
    report = validate_catalog(short)
    assert any("27" in line for line in report)


def test_validate_filtered_profile_none():
    catalog = generate_catalog(families=["DI"])
    assert validate_catalog(catalog, profile=None) == []
    assert validate_catalog(catalog) != []


def test_catalog_hash_stable_and_content_addressed():
    a, b = generate_catalog(), generate_catalog()
    assert a.catalog_hash == b.catalog_hash
    variants = list(a.variants)
    bumped = variants[3]
    variants[3] = PromptVariant(
        id=bumped.id, family=bumped.family,
        template=bumped.template + " ", style_notes=bumped.style_notes,
    )
    assert PromptCatalog(tuple(variants)).catalog_hash != a.catalog_hash


def test_catalog_roundtrip(tmp_path):
    catalog = generate_catalog()
    path = tmp_path / "catalog.json"
    write_catalog(catalog, path)
    loaded = load_catalog(path)
    assert loaded == catalog
    assert loaded.catalog_hash == catalog.catalog_hash


def test_catalog_load_detects_hash_mismatch(tmp_path):
    path = tmp_path / "catalog.json"
    write_catalog(generate_catalog(), path)
    tampered = path.read_text().replace("Read the interview transcript",
                                        "READ the interview transcript")
    path.write_text(tampered)
    with pytest.raises(ParseError, match="catalog_hash"):
        load_catalog(path)
