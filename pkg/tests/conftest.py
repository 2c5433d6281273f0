import numpy as np
import pytest
from hypothesis import settings

from rewriter_evaluator import corpus
from rewriter_evaluator.vocab import Vocabulary

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_vocab():
    return Vocabulary(["a", "b", "c", "d", "e", "f"])


@pytest.fixture(scope="session")
def toy_corpus():
    return corpus.generate(corpus.TaskSpec("noisy-reversal", vocab_size=8, min_len=3, max_len=5, noise_rate=0.2), 40)


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
