import sys
from pathlib import Path

import numpy as np
import pytest

from ctc_ilme.core import Vocabulary, log_softmax
from ctc_ilme.ngram import load_arpa

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def abc_vocab():
    return Vocabulary(("<b>", "a", "b", "c"), 0)


@pytest.fixture(scope="session")
def fixture4_lm():
    return load_arpa(DATA / "fixture4.arpa")


@pytest.fixture(scope="session")
def abc_lm():
    return load_arpa(DATA / "abc.arpa")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    from ctc_ilme.toy import build_toy_corpus
    out = tmp_path_factory.mktemp("toy")
    return build_toy_corpus(out, seed=7, n_utts=20, K=5)


def random_log_posteriors(rng, T, N, scale=2.0):
    return log_softmax(rng.normal(size=(T, N)) * scale, axis=1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
