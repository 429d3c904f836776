import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctc_ilme.core import FeatureSequence, Vocabulary, log_softmax
from ctc_ilme.decoder import (DecodeConfig, attribute_ilm, beam_decode, ctc_log_likelihood,
                              decode_corpus, greedy_decode)
from ctc_ilme.errors import ConfigError
from ctc_ilme.ilme import IlmConfig
from ctc_ilme.ngram import load_arpa, score_sequence
from ctc_ilme.kernels import compiled_available

import oracles
from conftest import DATA, random_log_posteriors

BACKENDS = ["python"] + (["cython"] if compiled_available() else [])


def test_defaults():
    c = DecodeConfig()
    assert (c.beam_size, c.lambda_lm) == (50, 1.0)


def test_greedy_collapse():
    v = Vocabulary(("<b>", "a", "b"))
    path = [1, 1, 0, 2, 2, 0, 2]
    scores = np.full((7, 3), math.log(0.1))
    scores[np.arange(7), path] = math.log(0.8)
    h = greedy_decode(scores, v)
    assert h.tokens == (1, 2, 2)
    assert h.acoustic_score == pytest.approx(7 * math.log(0.8), abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_frame_prefix_sums(backend):
    # hand sums over the 9 paths: "a" <- (a,a),(a,-),(-,a)
    v = Vocabulary(("<b>", "a", "b"))
    p = np.array([[0.5, 0.3, 0.2], [0.6, 0.3, 0.1]])
    hyps = beam_decode(np.log(p), v, config=DecodeConfig(beam_size=10, nbest=10), backend=backend)
    got = {h.tokens: h.acoustic_score for h in hyps}
    assert got[()] == pytest.approx(math.log(0.5 * 0.6), abs=1e-12)
    assert got[(1,)] == pytest.approx(math.log(0.3 * 0.3 + 0.3 * 0.6 + 0.5 * 0.3), abs=1e-12)
    assert got[(1, 2)] == pytest.approx(math.log(0.3 * 0.1), abs=1e-12)
    assert got[(2,)] == pytest.approx(math.log(0.2 * 0.1 + 0.2 * 0.6 + 0.5 * 0.1), abs=1e-12)
    assert (2, 2) not in got


@pytest.mark.parametrize("backend", BACKENDS)
def test_beam_matches_brute_force(backend, abc_vocab, abc_lm):
    rng = np.random.default_rng(12)
    names = abc_vocab.tokens
    for _ in range(40):
        T, N = int(rng.integers(1, 5)), 4
        s = random_log_posteriors(rng, T, N)
        for lm in (None, abc_lm):
            lmf = (lambda lab: score_sequence(abc_lm, [names[i] for i in lab])) if lm else None
            lab, ac, _ = oracles.brute_force_best(s.tolist(), 0, lmf)
            best = beam_decode(s, abc_vocab, lm, DecodeConfig(beam_size=N ** T), backend=backend)[0]
            assert best.tokens == lab
            assert best.acoustic_score == pytest.approx(ac, abs=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_forward_matches_brute_force(backend):
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = random_log_posteriors(rng, 4, 3)
        for lab, ac in oracles.brute_force_label_sums(s.tolist(), 0).items():
            assert ctc_log_likelihood(s, lab, 0, backend) == pytest.approx(ac, abs=1e-9)


def test_forward_impossible_label():
    s = np.log(np.full((1, 3), 1 / 3))
    assert ctc_log_likelihood(s, [1, 1], 0) == -math.inf


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_lambda_zero_ignores_lm(T, seed):
    v = Vocabulary(("<b>", "a", "b", "c"))
    rng = np.random.default_rng(seed)
    s = random_log_posteriors(rng, T, 4)
    plain = beam_decode(s, v, None, DecodeConfig(beam_size=8))
    zero = beam_decode(s, v, load_arpa(DATA / "abc.arpa"), DecodeConfig(beam_size=8, lambda_lm=0.0))
    assert [h.tokens for h in plain] == [h.tokens for h in zero]


def test_beam_one_is_not_worse_than_greedy_on_peaked_input():
    v = Vocabulary(("<b>", "a", "b"))
    s = log_softmax(np.eye(3)[[1, 1, 0, 2]] * 10, axis=1)
    assert beam_decode(s, v, config=DecodeConfig(beam_size=1))[0].tokens == greedy_decode(s, v).tokens


def test_insertion_bonus_favours_longer():
    v = Vocabulary(("<b>", "a"))
    s = np.log([[0.8, 0.2], [0.8, 0.2]])
    assert beam_decode(s, v)[0].tokens == ()
    assert beam_decode(s, v, config=DecodeConfig(token_insertion_bonus=1.0))[0].tokens == (1,)


def test_lm_vocab_mismatch(fixture4_lm):
    v = Vocabulary(("<b>", "a", "q"))
    with pytest.raises(ConfigError):
        beam_decode(np.log(np.full((2, 3), 1 / 3)), v, fixture4_lm)


def test_attribute_ilm_keeps_total():
    v = Vocabulary(("<b>", "a", "b"))
    rng = np.random.default_rng(0)
    raw = random_log_posteriors(rng, 5, 3)
    adj = raw - 0.1 * random_log_posteriors(rng, 5, 3)
    hyps = beam_decode(adj, v, config=DecodeConfig(nbest=3))
    out = attribute_ilm(hyps, raw, adj, 0.1, 0)
    for h, o in zip(hyps, out):
        assert o.total_score == h.total_score
        assert o.acoustic_score == pytest.approx(ctc_log_likelihood(raw, h.tokens, 0), abs=1e-9)
        assert o.acoustic_score - 0.1 * o.ilm_score == pytest.approx(h.acoustic_score, abs=1e-9)


def test_decode_corpus_modes_and_failures(abc_vocab, abc_lm):
    from ctc_ilme.acoustic import ToyConvModel
    model = ToyConvModel(abc_vocab, 3, seed=2)
    rng = np.random.default_rng(8)
    utts = [(f"u{i}", FeatureSequence(rng.normal(size=(6, 3)))) for i in (2, 0, 1)]
    utts.append(("bad", FeatureSequence(rng.normal(size=(6, 5)))))
    with pytest.raises(ConfigError):
        decode_corpus(utts, model, "sf", abc_vocab)
    res = decode_corpus(utts, model, "ilme", abc_vocab, abc_lm)
    assert [r.utt_id for r in res.results] == ["bad", "u0", "u1", "u2"]
    assert set(res.failures) == {"bad"}
    assert res.results[1].diagnostics is not None
    base = decode_corpus(utts, model, "baseline", abc_vocab)
    assert base.results[1].diagnostics is None
    # beta = 0 leaves scores untouched, so ilme without an LM equals baseline
    same = decode_corpus(utts, model, "ilme", abc_vocab, None, IlmConfig(beta=0.0))
    assert same.transcripts_text() == base.transcripts_text()
