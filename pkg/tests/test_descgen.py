"""Template verbalization and grounded description sampling."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoembed import descgen
from ontoembed.descgen import (
    CUSTOM,
    DEFAULT_LEXICON,
    PREPEND_HAS,
    PREPEND_IS,
    USE_AS_IS,
    GroundingError,
    NoRelationsError,
    VerbLexicon,
    check_description,
    generate_corpus,
    generate_description,
    load_lexicon,
    read_descriptions,
    render_description,
    verbalize_relation,
    write_descriptions,
)

from conftest import synthetic_graph


def test_verbalization_rules():
    assert verbalize_relation("may_treat", DEFAULT_LEXICON) == "may treat"
    assert verbalize_relation("isa", DEFAULT_LEXICON) == "is a"
    assert verbalize_relation("active_ingredient", DEFAULT_LEXICON) == "has active ingredient"
    assert verbalize_relation("ingredient_of", DEFAULT_LEXICON) == "is ingredient of"
    custom = VerbLexicon(rules={"see_also": (CUSTOM, "is related to")})
    assert verbalize_relation("see_also", custom) == "is related to"


def test_default_rule_applies_to_unknown_labels():
    has_default = VerbLexicon(rules={}, default_rule=PREPEND_HAS)
    assert verbalize_relation("finding_site_of", has_default) == "has finding site of"
    is_default = VerbLexicon(rules={}, default_rule=PREPEND_IS)
    assert verbalize_relation("form_of", is_default) == "is form of"


def test_lexicon_validation():
    with pytest.raises(ValueError):
        VerbLexicon(rules={"x": ("bogus_rule", None)})
    with pytest.raises(ValueError):
        VerbLexicon(rules={"x": (CUSTOM, None)})  # custom needs a phrase
    with pytest.raises(ValueError):
        VerbLexicon(rules={}, default_rule=CUSTOM)  # default cannot be custom


def test_render_template():
    assert render_description("Drug", "may treat", "Headache") == "drug which may treat headache"
    assert render_description(None, "is a", "pain") == "something which is a pain"
    assert not render_description("a", "is a", "b").endswith(".")


def test_reference_rendering(toy_graph):
    phrase = verbalize_relation("may_treat", DEFAULT_LEXICON)
    assert render_description("drug", phrase, "headache") == "drug which may treat headache"


def test_generate_description_grounded(toy_graph):
    rng = np.random.default_rng(0)
    for _ in range(100):
        desc = generate_description(toy_graph, "C2", rng=rng)
        check_description(toy_graph, desc)
        assert desc.generic in (None, "drug", "headache", "cephalalgia")
        assert desc.related_name in ("drug", "headache", "cephalalgia")


def test_no_relations_error(toy_graph):
    with pytest.raises(NoRelationsError):
        generate_description(toy_graph, "C3", rng=np.random.default_rng(0))


def test_corpus_deterministic(toy_graph):
    a = [d.text for d in generate_corpus(toy_graph, 50, seed=5)]
    b = [d.text for d in generate_corpus(toy_graph, 50, seed=5)]
    c = [d.text for d in generate_corpus(toy_graph, 50, seed=6)]
    assert a == b
    assert a != c


def test_corpus_substream_matches_slice(toy_graph):
    full = list(generate_corpus(toy_graph, 80, seed=9))
    part = list(generate_corpus(toy_graph, 30, seed=9, start_index=50))
    assert [d.text for d in part] == [d.text for d in full[50:]]
    assert [d.rng for d in part] == [d.rng for d in full[50:]]


def test_corpus_samples_proportional_to_out_degree(toy_graph):
    # C1 has 1 outgoing edge, C2 has 2; C3/C4 have none
    counts = {"C1": 0, "C2": 0}
    for desc in generate_corpus(toy_graph, 3000, seed=42):
        counts[desc.concept_id] += 1
    assert counts["C1"] + counts["C2"] == 3000
    ratio = counts["C2"] / counts["C1"]
    assert 1.7 < ratio < 2.3


def test_corpus_empty_and_errors(toy_graph):
    assert list(generate_corpus(toy_graph, 0, seed=1)) == []
    with pytest.raises(ValueError):
        list(generate_corpus(toy_graph, -1, seed=1))
    bare = synthetic_graph(3, 1, seed=0, extra_relations=False)
    # strip the graph down to isolated concepts: no outgoing edges anywhere
    isolated = type(bare)(concepts={k: v for k, v in bare.concepts.items()}, edges=[])
    with pytest.raises(NoRelationsError):
        list(generate_corpus(isolated, 5, seed=1))


def test_check_description_catches_tampering(toy_graph):
    desc = generate_description(toy_graph, "C2", rng=np.random.default_rng(3))
    check_description(toy_graph, desc)
    with pytest.raises(GroundingError):
        check_description(toy_graph, dataclasses.replace(desc, text=desc.text + " extra"))
    with pytest.raises(GroundingError):
        check_description(toy_graph, dataclasses.replace(
            desc, generic="unrelated thing",
            text=render_description("unrelated thing", desc.relation_phrase, desc.related_name)))
    with pytest.raises(GroundingError):
        check_description(toy_graph, dataclasses.replace(
            desc, related_name="pain",
            text=render_description(desc.generic, desc.relation_phrase, "pain")))


def test_write_read_round_trip(toy_graph, tmp_path):
    descs = list(generate_corpus(toy_graph, 40, seed=2))
    path = tmp_path / "d.jsonl"
    assert write_descriptions(descs, path) == 40
    assert read_descriptions(path) == descs


def test_load_lexicon(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text(
        "# comment line\n"
        "isa\tcustom\tis a\n"
        "finding_site\tprepend_has\n"
        "*\tprepend_is\n",
        encoding="utf-8",
    )
    lex = load_lexicon(path)
    assert verbalize_relation("isa", lex) == "is a"
    assert verbalize_relation("finding_site", lex) == "has finding site"
    assert verbalize_relation("unlisted_label", lex) == "is unlisted label"


def test_load_lexicon_rejects_bad_rows(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("just_one_field\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_lexicon(path)
    path.write_text("isa\tnot_a_rule\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_lexicon(path)


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=st.characters(categories=("Ll", "Lu", "Nd"), include_characters="_"),
               min_size=1, max_size=30))
def test_verbalize_any_label_total(label):
    phrase = verbalize_relation(label, DEFAULT_LEXICON)
    assert "_" not in phrase
    text = render_description(None, phrase, "thing")
    assert text == text.lower()
    assert text.startswith("something which ")


def test_generated_text_is_lowercase_without_period(grounding_graph):
    for desc in generate_corpus(grounding_graph, 500, seed=13):
        assert desc.text == desc.text.lower()
        assert not desc.text.endswith(".")
        assert " which " in desc.text
