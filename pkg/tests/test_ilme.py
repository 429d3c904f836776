import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctc_ilme.core import FeatureSequence, Vocabulary, log_softmax, log_sum_exp
from ctc_ilme.errors import UsageError
from ctc_ilme.ilme import (IlmConfig, adjust_scores, estimate_ilm, normalize_deltas, posterior_deltas,
                           run_ilme)
from ctc_ilme.masking import plan_equal
from ctc_ilme.acoustic import ToyConvModel

from conftest import random_log_posteriors


def test_defaults():
    c = IlmConfig()
    assert (c.gamma, c.beta, c.lambda_ilm) == (0.25, 0.9, 0.1)


@pytest.mark.parametrize("kw", [{"gamma": 1.5}, {"beta": -0.1}, {"lambda_ilm": -1.0}])
def test_config_validation(kw):
    with pytest.raises(UsageError):
        IlmConfig(**kw)


class TestDeltas:
    def test_max_abs(self):
        a = np.log([[0.5, 0.5], [0.9, 0.1]])
        b = np.log([[0.25, 0.75], [0.9, 0.1]])
        d = posterior_deltas(a, b)
        assert d[0] == pytest.approx(math.log(2), abs=1e-12)
        assert d[1] == 0.0

    def test_normalize(self):
        np.testing.assert_array_equal(normalize_deltas([0.5, 2.0, 0.0]), [0.25, 1.0, 0.0])

    def test_all_zero(self):
        np.testing.assert_array_equal(normalize_deltas([0.0, 0.0]), [0.0, 0.0])

    def test_infinite(self):
        np.testing.assert_array_equal(normalize_deltas([1.0, math.inf]), [0.0, 1.0])

    def test_hard_zero_token_equal_gives_zero(self):
        a = np.array([[0.0, -math.inf]])
        assert posterior_deltas(a, a)[0] == 0.0


def _manual(orig, masked, gamma):
    """Direct per-frame reference: sum, over selected masks, then log-softmax."""
    K = len(masked)
    dh = []
    for m in masked:
        d = np.max(np.abs(m - orig), axis=1)
        dh.append(d / d.max() if d.max() > 0 else np.zeros_like(d))
    rows = {}
    for t in range(orig.shape[0]):
        sel = [k for k in range(K) if dh[k][t] > gamma]
        if sel:
            s = sum(masked[k][t] for k in sel)
            rows[t] = s - log_sum_exp(s)
    return rows


def test_estimate_matches_direct_formula():
    rng = np.random.default_rng(3)
    for _ in range(20):
        T, N, K = int(rng.integers(2, 12)), int(rng.integers(2, 6)), 0
        K = int(rng.integers(1, T + 1))
        orig = random_log_posteriors(rng, T, N)
        masked = [random_log_posteriors(rng, T, N) for _ in range(K)]
        est = estimate_ilm(orig, masked, plan_equal(T, K), IlmConfig())
        ref = _manual(orig, masked, 0.25)
        assert sorted(ref) == np.flatnonzero(est.applied).tolist()
        for t, row in ref.items():
            np.testing.assert_allclose(est.rows[t], row, atol=1e-12)
        assert np.isnan(est.rows[~est.applied]).all()


def test_strict_gamma_excludes_equal():
    orig = np.log([[0.5, 0.5], [0.5, 0.5]])
    masked = [np.log([[0.25, 0.75], [0.5, 0.5]])]
    est = estimate_ilm(orig, masked, plan_equal(2, 1), IlmConfig(gamma=0.0))
    # frame 1 has delta_hat exactly 0, not > 0
    assert est.applied.tolist() == [True, False]


def test_single_mask_ilm_is_that_mask():
    rng = np.random.default_rng(0)
    orig = random_log_posteriors(rng, 6, 4)
    masked = [random_log_posteriors(rng, 6, 4)]
    est = estimate_ilm(orig, masked, plan_equal(6, 1), IlmConfig(gamma=0.0))
    for t in np.flatnonzero(est.applied):
        np.testing.assert_allclose(est.rows[t], masked[0][t], atol=1e-12)


def test_adjust_gate_and_passthrough_rows():
    orig = np.log([[0.95, 0.05], [0.2, 0.8]])
    masked = [np.log([[0.5, 0.5], [0.6, 0.4]])]
    cfg = IlmConfig(gamma=0.0, beta=0.9, lambda_ilm=0.5)
    est = estimate_ilm(orig, masked, plan_equal(2, 1), cfg)
    out = adjust_scores(orig, est, cfg, blank_index=0)
    # blank 0.95 >= beta: row copied bit for bit
    assert out[0].tobytes() == orig[0].tobytes()
    np.testing.assert_allclose(out[1], orig[1] - 0.5 * est.rows[1], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(2, 8), st.integers(1, 6), st.integers(0, 2**31 - 1),
       st.floats(0, 1), st.floats(0, 1), st.floats(0, 2))
def test_invariants(T, N, K, seed, gamma, beta, lam):
    K = min(K, T)
    rng = np.random.default_rng(seed)
    orig = random_log_posteriors(rng, T, N)
    masked = [random_log_posteriors(rng, T, N) for _ in range(K)]
    cfg = IlmConfig(gamma, beta, lam)
    est = estimate_ilm(orig, masked, plan_equal(T, K), cfg)
    for t in np.flatnonzero(est.applied):
        assert abs(log_sum_exp(est.rows[t])) <= 1e-9
    assert (est.contributing_mask_counts <= K).all()
    out = adjust_scores(orig, est, cfg, 0)
    untouched = ~((np.exp(orig[:, 0]) < beta) & est.applied) | (lam == 0)
    assert out[untouched].tobytes() == orig[untouched].tobytes()
    # raising gamma never adds contributing masks
    higher = estimate_ilm(orig, masked, plan_equal(T, K), IlmConfig(min(1.0, gamma + 0.2), beta, lam))
    assert (higher.contributing_mask_counts <= est.contributing_mask_counts).all()


def test_run_ilme_batched_equals_sequential():
    vocab = Vocabulary(("<b>", "x", "y", "z"))
    model = ToyConvModel(vocab, 3, seed=11)
    X = FeatureSequence(np.random.default_rng(4).normal(size=(15, 3)))
    plan = plan_equal(15, 5)
    a, est_a, diag_a = run_ilme(X, model, plan, IlmConfig(batched=True), 0)
    b, est_b, diag_b = run_ilme(X, model, plan, IlmConfig(batched=False), 0)
    assert a.tobytes() == b.tobytes()
    assert diag_a.report() == diag_b.report()
    assert diag_a.delta_hat.shape == (5, 15)


def test_report_format():
    vocab = Vocabulary(("<b>", "x", "y"))
    X = FeatureSequence(np.random.default_rng(1).normal(size=(4, 2)))
    _, _, diag = run_ilme(X, ToyConvModel(vocab, 2, seed=1), plan_equal(4, 2), IlmConfig(), 0)
    lines = diag.report().splitlines()
    assert lines[0] == "# frame\tblank_prob\tadjusted\tcount\tdhat_1\tdhat_2"
    assert len(lines) == 5
    assert lines[1].split("\t")[0] == "0"
