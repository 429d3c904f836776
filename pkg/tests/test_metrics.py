import json

import pytest
from hypothesis import given, strategies as st

from ctc_ilme.errors import UsageError
from ctc_ilme.metrics import (OOV_F1_DEFINITION, compare_systems, corpus_wer, evaluate_system, load_word_list,
                              mine_oov, normalize_words, oov_f1, read_transcripts, relative_werr,
                              render_json, render_text, word_error_rate)

import oracles

words = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=10)


@pytest.mark.parametrize("ref,hyp,sdi", [
    ("a b c", "a x c", (1, 0, 0)),
    ("a b c", "a", (0, 2, 0)),
    ("a", "a a", (0, 0, 1)),
    ("", "", (0, 0, 0)),
])
def test_wer_examples(ref, hyp, sdi):
    c = word_error_rate(ref.split(), hyp.split())
    assert (c.substitutions, c.deletions, c.insertions) == sdi


def test_wer_values():
    assert word_error_rate("a b c".split(), "a x c".split()).wer == pytest.approx(1 / 3)
    assert word_error_rate([], ["x", "y"]).wer == 2.0


def test_tie_prefers_substitution_over_ins_del():
    # "a b" -> "b c": 2 subs or 1 del + 1 ins; fewer insertions wins
    c = word_error_rate(["a", "b"], ["b", "c"])
    assert (c.substitutions, c.deletions, c.insertions) == (2, 0, 0)


@given(words, words)
def test_wer_matches_textbook_dp(r, h):
    c = word_error_rate(r, h)
    assert c.errors == oracles.levenshtein(r, h)
    assert len(h) == len(r) - c.deletions + c.insertions


@given(words, words)
def test_wer_symmetry(r, h):
    a, b = word_error_rate(r, h), word_error_rate(h, r)
    assert a.errors == b.errors


@given(words)
def test_wer_identity(r):
    assert word_error_rate(r, r).errors == 0


def test_corpus_wer_is_pooled():
    pairs = [(["a"], ["b"]), (["a"] * 9, ["a"] * 9)]
    assert corpus_wer(pairs).wer == pytest.approx(0.1)
    mean = sum(word_error_rate(r, h).wer for r, h in pairs) / 2
    assert mean == pytest.approx(0.5)


def test_relative_werr():
    assert relative_werr(4.0, 2.9) == pytest.approx(0.275)
    assert round(relative_werr(8.1, 6.5) * 100, 1) == 19.8
    assert relative_werr(0.0, 1.0) is None


def test_oov_f1_hand():
    refs = [["zantis", "rose", "zantis"], ["korvel"]]
    hyps = [["zantis", "rose"], ["korvel", "korvel"]]
    rep = oov_f1(refs, hyps, {"zantis", "korvel"})
    # tp = 1 + 1; hyp = 1 + 2; ref = 2 + 1
    assert rep.precision == pytest.approx(2 / 3)
    assert rep.recall == pytest.approx(2 / 3)
    assert rep.terms["korvel"].hyp_count == 2
    with pytest.raises(UsageError):
        oov_f1(refs, hyps, set())


def test_mine_oov_casefold():
    assert mine_oov([["The", "Zantis"]], ["the"]) == {"zantis"}


def test_normalize_words():
    assert normalize_words("Hello, World! don't") == ["hello", "world", "don't"]


def test_missing_word_list(tmp_path):
    with pytest.raises(UsageError):
        load_word_list(tmp_path / "nope.txt")


def test_reports(tmp_path):
    refs = {"u1": "a b c", "u2": "zantis fell"}
    bs = evaluate_system("BS", refs, {"u1": "a b c", "u2": "santis fell"}, {"zantis"})
    ilme = evaluate_system("ILME+target", refs, {"u1": "a b c", "u2": "zantis fell"}, {"zantis"})
    systems = compare_systems([bs, ilme], "BS")
    assert systems[1].werr == pytest.approx(1.0)
    text = render_text(systems, "BS", "toy")
    assert "ILME+target" in text and OOV_F1_DEFINITION in text
    data = json.loads(render_json(systems, "BS", "toy"))
    row = [r for r in data["wer_table"] if r["method"] == "ILME"][0]
    assert row["lm"] == "target"


def test_read_transcripts(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("u1\thello there\nu2\t\n", encoding="utf-8")
    assert read_transcripts(p) == {"u1": "hello there", "u2": ""}
