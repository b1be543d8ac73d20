import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biasaudit.config import data_path
from biasaudit.corpus import read_corpus
from biasaudit.extract import (
    FEATURES,
    CompositeDef,
    FeatureVector,
    category_counts,
    compute_composites,
    dump_feature_table,
    extract_corpus,
    extract_features,
    load_feature_table,
    parse_composites,
    tokenize,
)
from biasaudit.lexicon import Entry, Lexicon, Pattern, compile_matcher

from .oracles.reference import ref_features, ref_tokenize

CDI = CompositeDef(
    "Analytic", 30.0,
    (("article", 1.0), ("prep", 1.0), ("ppron", -1.0), ("ipron", -1.0),
     ("auxverb", -1.0), ("conj", -1.0), ("adverb", -1.0), ("negate", -1.0)),
)


def test_schema():
    assert len(FEATURES) == 34
    assert len(set(FEATURES)) == 34
    assert FEATURES[:5] == ("Segment", "WC", "Analytic", "Clout", "Tone")
    assert FEATURES[-1] == "allure"


class TestTokenize:
    def test_sentence(self):
        assert tokenize("We propose a novel method.") == ["we", "propose", "a", "novel", "method"]

    def test_internal_hyphen_and_apostrophe(self):
        assert tokenize("state-of-the-art don't") == ["state-of-the-art", "don't"]

    def test_empty(self):
        assert tokenize("") == []

    def test_edges_are_stripped(self):
        assert tokenize("'quoted' -dash- end-") == ["quoted", "dash", "end"]

    def test_unicode_and_curly_apostrophe(self):
        assert tokenize("Café don’t Ünïcode") == ["café", "don't", "ünïcode"]

    @settings(max_examples=300, deadline=None)
    @given(st.text(alphabet=st.sampled_from(list("abZ9 '-.,é’\n")), max_size=40))
    def test_matches_character_scanner(self, text):
        assert tokenize(text) == ref_tokenize(text)


def _toy_matcher():
    cats = tuple((i + 1, name) for i, name in enumerate(FEATURES[5:]))
    ids = dict((n, i) for i, n in cats)
    entries = (Entry(Pattern.parse("we"), frozenset({ids["affiliation"]})),)
    return compile_matcher(Lexicon(cats, entries))


class TestExtractFeatures:
    def test_percentage_five_tokens(self):
        v = extract_features(_toy_matcher(), [], "we propose a novel method")
        assert v["WC"] == 5
        assert v["affiliation"] == 20.0
        assert v["Segment"] == 1.0
        assert not v.degenerate

    def test_seven_of_hundred(self):
        cats = tuple((i + 1, n) for i, n in enumerate(FEATURES[5:]))
        insight = dict((n, i) for i, n in cats)["insight"]
        m = compile_matcher(Lexicon(cats, (Entry(Pattern.parse("know*"), frozenset({insight})),)))
        text = " ".join(["knows"] * 7 + ["filler"] * 93)
        assert extract_features(m, [], text)["insight"] == 7.0

    def test_zero_wc_is_degenerate(self, bundled_matcher, bundled_composites):
        v = extract_features(bundled_matcher, bundled_composites, "-- ... !!")
        assert v.degenerate
        assert v["WC"] == 0
        assert all(v[f] == 0.0 for f in FEATURES if f not in ("Segment",))

    def test_missing_category_is_an_error(self):
        m = compile_matcher(Lexicon(((1, "insight"),)))
        with pytest.raises(ValueError, match="lacks categories"):
            extract_features(m, [], "text")

    def test_phrase_counts_once_per_category(self):
        cats = tuple((i + 1, n) for i, n in enumerate(FEATURES[5:]))
        ids = dict((n, i) for i, n in cats)
        m = compile_matcher(Lexicon(cats, (
            Entry(Pattern.parse("in spite* of"), frozenset({ids["differ"]})),
            Entry(Pattern.parse("spite"), frozenset({ids["differ"], ids["conflict"]})),
        )))
        wc, counts = category_counts(m, "in spite of it")
        assert wc == 4
        # phrase start "in" and token "spite" each count once for differ
        assert counts == {ids["differ"]: 2, ids["conflict"]: 1}

    def test_phrase_does_not_cross_sentence_boundary(self):
        cats = tuple((i + 1, n) for i, n in enumerate(FEATURES[5:]))
        m = compile_matcher(Lexicon(cats, (Entry(Pattern.parse("due to"), frozenset({1})),)))
        assert category_counts(m, "due to")[1] == {1: 1}
        assert category_counts(m, "due. to")[1] == {}


class TestComposites:
    def test_intercept_only(self):
        raw = {c: 0.0 for c, _ in CDI.terms}
        assert compute_composites(raw, [CDI]) == {"Analytic": 30.0}

    def test_clamped(self):
        d = CompositeDef("X", 0.0, (("insight", 2.0),))
        assert compute_composites({"insight": 60.0}, [d]) == {"X": 100.0}
        assert compute_composites({"insight": -60.0}, [d]) == {"X": 0.0}

    def test_missing_category(self):
        with pytest.raises(KeyError, match="article"):
            compute_composites({}, [CDI])

    def test_random_defs_match_direct_formula(self):
        rng = random.Random(3)
        names = [f"c{i}" for i in range(8)]
        for _ in range(200):
            raw = {n: rng.uniform(0, 40) for n in names}
            terms = tuple((n, rng.uniform(-3, 3)) for n in rng.sample(names, rng.randint(1, 8)))
            d = CompositeDef("X", rng.uniform(-50, 80), terms)
            expected = d.intercept
            for name, weight in d.terms:
                expected += weight * raw[name]
            expected = min(100.0, max(0.0, expected))
            assert compute_composites(raw, [d])["X"] == pytest.approx(expected, abs=1e-12)

    def test_parse_tree(self):
        defs = parse_composites({"composites": [{"name": "Tone", "intercept": 50, "terms": {"tone_pos": 10}}]})
        assert defs == [CompositeDef("Tone", 50.0, (("tone_pos", 10.0),))]


def test_bundled_composites_reference_known_categories(bundled_lexicon, bundled_composites):
    from biasaudit.extract import validate_composites

    validate_composites(bundled_composites, bundled_lexicon.names.values())
    assert [d.name for d in bundled_composites] == ["Analytic", "Clout", "Tone"]


def _toy_docs():
    return [(r.id, "Human", r.abstract) for r in read_corpus(data_path("toy_corpus.jsonl"))]


def test_toy_corpus_vs_count_and_divide(bundled_lexicon, bundled_matcher, bundled_composites):
    docs = _toy_docs()
    assert len(docs) == 20
    for rid, _, text in docs:
        got = extract_features(bundled_matcher, bundled_composites, text, rid).as_dict()
        want = ref_features(bundled_lexicon, bundled_composites, text, FEATURES)
        for f in FEATURES:
            assert got[f] == pytest.approx(want[f], abs=1e-12), (rid, f)


def test_extract_corpus_is_compositional(bundled_matcher, bundled_composites):
    docs = _toy_docs()
    table = extract_corpus(bundled_matcher, bundled_composites, docs)
    singles = [extract_features(bundled_matcher, bundled_composites, t, r, v) for r, v, t in docs]
    assert table == singles
    assert [(v.record_id, v.variant) for v in table] == [(r, v) for r, v, _ in docs]


def test_extract_corpus_parallel_equals_serial(bundled_matcher, bundled_composites):
    docs = _toy_docs()
    serial = extract_corpus(bundled_matcher, bundled_composites, docs, workers=1)
    parallel = extract_corpus(bundled_matcher, bundled_composites, docs, workers=3)
    assert dump_feature_table(serial) == dump_feature_table(parallel)


def test_feature_table_round_trip():
    v = FeatureVector("r1", "Human", tuple(float(i) / 3 for i in range(34)), False)
    d = FeatureVector("r2", "Human", tuple([1.0, 0.0] + [0.0] * 32), True)
    text = dump_feature_table([v, d])
    assert text.splitlines()[0].split(",")[2:-1] == list(FEATURES)
    assert load_feature_table(text) == [v, d]


def test_nan_survives_table_round_trip():
    v = FeatureVector("r1", "Human", (math.nan,) * 34)
    assert math.isnan(load_feature_table(dump_feature_table([v]))[0]["WC"])


def _random_doc(rng, vocab):
    sentences = []
    for _ in range(rng.randint(1, 6)):
        sentences.append(" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 15))) + ".")
    return " ".join(sentences)


@pytest.fixture(scope="module")
def vocab(bundled_lexicon):
    words = []
    for e in bundled_lexicon.entries:
        words.extend(t.rstrip("*") + ("s" if t.endswith("*") else "") for t in e.pattern.tokens)
    return sorted(set(words)) + ["filler", "data", "model", "results", "x"] * 20


def test_scale_invariance(bundled_matcher, bundled_composites, vocab):
    rng = random.Random(5)
    for _ in range(100):
        doc = _random_doc(rng, vocab)
        one = extract_features(bundled_matcher, bundled_composites, doc)
        k = rng.randint(2, 5)
        many = extract_features(bundled_matcher, bundled_composites, " ".join([doc] * k))
        assert many["WC"] == k * one["WC"]
        for f in FEATURES[2:]:
            assert many[f] == pytest.approx(one[f], abs=1e-9), f


def test_counts_are_additive(bundled_matcher, vocab):
    rng = random.Random(6)
    for _ in range(200):
        a, b = _random_doc(rng, vocab), _random_doc(rng, vocab)
        wa, ca = category_counts(bundled_matcher, a)
        wb, cb = category_counts(bundled_matcher, b)
        wab, cab = category_counts(bundled_matcher, a + " " + b)
        assert wab == wa + wb
        assert cab == {k: ca.get(k, 0) + cb.get(k, 0) for k in set(ca) | set(cb)}


def test_bounded_on_random_documents(bundled_matcher, bundled_composites, vocab):
    rng = random.Random(8)
    for _ in range(1000):
        v = extract_features(bundled_matcher, bundled_composites, _random_doc(rng, vocab))
        assert v["WC"] >= 1
        for f in FEATURES[2:]:
            assert 0.0 <= v[f] <= 100.0, f
