import gzip
import io
import itertools
import math

import pytest

from ctc_ilme.errors import ArpaParseError, ScoringError
from ctc_ilme.ngram import (TokenLmScorer, load_arpa, parse_arpa, score_sequence, score_token,
                            write_arpa)

LN10 = math.log(10)

# log10 sums traced by hand through the backoff chain of fixture4.arpa
HAND = {
    # P(a|<s>) + P(b|<s> a) + P(</s>|<s> a b) all stored directly
    ("a", "b"): -0.221849 - 0.154902 - 1.0,
    # P(b|<s>); bo(<s> b)=0, bo(b)+P(b); P(</s>|b)
    ("b", "b"): -0.522879 + (-0.066947 - 0.455932) - 0.39794,
    # P(a|<s>); bo(<s> a)+P(a|a); P(b|a); P(</s>|a b) via trigram
    ("a", "a", "b"): -0.221849 + (-0.221849 - 1.0) - 0.30103 - 0.69897,
    # last step: bo(a b a) + bo(b a) + bo(a) + P(</s>)
    ("b", "a", "b", "a"): (-0.522879 - 0.522879 - 0.221849 - 0.30103
                           + (-0.602065 - 0.09691 + 0.20412 - 0.60206)),
    # 4-gram hits in the middle; bo(b a b)=0 then trigram a b </s>
    ("a", "b", "a", "b"): -0.221849 - 0.154902 - 0.09691 - 0.045757 + (0.0 - 0.69897),
}


def test_counts_and_order(fixture4_lm):
    assert fixture4_lm.order == 4
    assert fixture4_lm.counts == [4, 6, 4, 3]
    assert sum(fixture4_lm.counts) <= 20


@pytest.mark.parametrize("words", sorted(HAND))
def test_hand_values(fixture4_lm, words):
    assert score_sequence(fixture4_lm, list(words)) == pytest.approx(LN10 * HAND[words], abs=1e-9)


def test_base_conversion_exact(fixture4_lm):
    assert score_token(fixture4_lm, ["<s>"], "a") == LN10 * -0.221849


def test_context_mass(fixture4_lm):
    words = ["a", "b", "</s>"]
    hists = [("<s>",) + h for n in range(4) for h in itertools.product("ab", repeat=n)]
    hists += [h for n in range(1, 4) for h in itertools.product("ab", repeat=n)]
    for h in hists:
        mass = sum(10 ** fixture4_lm.log10_prob(list(h), w) for w in words)
        assert mass == pytest.approx(1.0, abs=1e-3), h


def test_unknown_without_unk(fixture4_lm):
    with pytest.raises(ScoringError):
        score_token(fixture4_lm, ["<s>"], "zzz")


def test_unk_mapping():
    text = ("\\data\\\nngram 1=4\n\n\\1-grams:\n-1.0 <s> 0.0\n-0.5 x\n-0.6 <unk>\n-0.7 </s>\n\n\\end\\\n")
    lm = parse_arpa(io.StringIO(text))
    assert score_token(lm, ["<s>"], "nope") == LN10 * -0.6


def test_roundtrip_and_gzip(tmp_path, fixture4_lm):
    text = write_arpa(fixture4_lm)
    assert parse_arpa(io.StringIO(text)) == fixture4_lm
    gz = tmp_path / "m.arpa.gz"
    with gzip.open(gz, "wt", encoding="utf-8") as f:
        f.write(text)
    assert load_arpa(gz) == fixture4_lm


def test_tab_separated(fixture4_lm, data_dir):
    text = (data_dir / "fixture4.arpa").read_text(encoding="utf-8")
    tabbed = "\n".join(l.replace(" ", "\t") if l[:1] == "-" else l for l in text.splitlines())
    assert parse_arpa(io.StringIO(tabbed)) == fixture4_lm


@pytest.mark.parametrize("bad,where", [
    ("\\data\\\nngram 1=2\n\n\\1-grams:\n-1.0 <s>\n\n\\end\\\n", "1-grams"),
    ("\\data\\\nngram 1=1\n\n\\1-grams:\n-1.0\n\n\\end\\\n", "line 5"),
    ("\\data\\\nngram 1=1\nngram 2=1\n\n\\1-grams:\n-1 a\n\n\\2-grams:\n-1 b a\n\n\\end\\\n", "history"),
    ("\\data\\\nngram 1=2\n\n\\1-grams:\n-1 a\n-1 a\n\n\\end\\\n", "duplicate"),
])
def test_parse_errors(bad, where):
    with pytest.raises(ArpaParseError, match=where):
        parse_arpa(io.StringIO(bad))


def test_token_scorer_matches_sequence(fixture4_lm):
    s = TokenLmScorer(fixture4_lm, ["<b>", "a", "b"])
    for words in HAND:
        ids = [1 if w == "a" else 2 for w in words]
        assert s.score_ids(ids) == pytest.approx(score_sequence(fixture4_lm, list(words)), abs=1e-12)


def test_word_mode_glues_subwords():
    text = ("\\data\\\nngram 1=4\n\n\\1-grams:\n-99 <s> 0.0\n-0.30103 hello\n-0.60206 <unk>\n-0.60206 </s>\n"
            "\n\\end\\\n")
    lm = parse_arpa(io.StringIO(text))
    s = TokenLmScorer(lm, ["<b>", "▁hel", "lo", "▁x"], "▁")
    expect = LN10 * (-0.30103 - 0.60206 - 0.60206)
    assert s.score_ids([1, 2, 3]) == pytest.approx(expect, abs=1e-12)
