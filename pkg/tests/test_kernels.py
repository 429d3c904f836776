import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctc_ilme import kernels
from ctc_ilme.kernels import compiled_available, get_backend

from conftest import random_log_posteriors

pytestmark = pytest.mark.skipif(not compiled_available(), reason="compiled kernels not built")

py = get_backend("python")


@pytest.fixture(scope="module")
def cy():
    return get_backend("cython")


@pytest.mark.skipif(os.environ.get("CTC_ILME_PURE_PYTHON") == "1", reason="fallback forced")
def test_default_backend_is_compiled():
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    code = "from ctc_ilme import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CTC_ILME_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")


@pytest.mark.parametrize("a,b", [(0.0, 0.0), (-math.inf, -1.0), (-math.inf, -math.inf), (-700.0, 3.0)])
def test_log_add(cy, a, b):
    assert cy.log_add(a, b) == py.log_add(a, b)


def test_max_abs_diff_rows(cy):
    rng = np.random.default_rng(0)
    a, b = random_log_posteriors(rng, 30, 7), random_log_posteriors(rng, 30, 7)
    a[3, 2] = b[3, 2] = -math.inf
    a.setflags(write=False)
    np.testing.assert_array_equal(np.asarray(cy.max_abs_diff_rows(a, b)), py.max_abs_diff_rows(a, b))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(2, 5), st.integers(0, 10_000), st.integers(1, 16))
def test_beam_parity(cy, T, N, seed, beam):
    s = random_log_posteriors(np.random.default_rng(seed), T, N)
    args = (s, 0, beam, math.inf, 0.0, 0.0, None, None, None)
    assert cy.prefix_beam_search(*args) == py.prefix_beam_search(*args)


def test_beam_parity_with_lm_and_ties(cy, abc_lm):
    from ctc_ilme.ngram import TokenLmScorer
    lm = TokenLmScorer(abc_lm, ["<b>", "a", "b", "c"])
    rng = np.random.default_rng(9)
    for T in range(1, 9):
        s = random_log_posteriors(rng, T, 4)
        flat = np.log(np.full((T, 4), 0.25))  # every prefix of equal length ties
        for m in (s, flat):
            for beam in (1, 3, 10):
                args = (m, 0, beam, math.inf, 0.5, 0.7, lm.initial_state(), lm.step, lm.final)
                assert cy.prefix_beam_search(*args) == py.prefix_beam_search(*args)
                bare = (m, 0, beam, 2.0, 0.0, 0.0, None, None, None)
                assert cy.prefix_beam_search(*bare) == py.prefix_beam_search(*bare)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.lists(st.integers(1, 3), max_size=6), st.integers(0, 10_000))
def test_forward_parity(cy, T, labels, seed):
    s = random_log_posteriors(np.random.default_rng(seed), T, 4)
    a, b = cy.ctc_forward(s, labels, 0), py.ctc_forward(s, labels, 0)
    assert a == pytest.approx(b, abs=1e-12) or (a == b == -math.inf)


@given(st.lists(st.sampled_from("abcd"), max_size=12), st.lists(st.sampled_from("abcd"), max_size=12))
def test_edit_parity(cy, r, h):
    assert tuple(cy.edit_counts(r, h)) == tuple(py.edit_counts(r, h))
