import numpy as np
import pytest

from corpus_automator.ctcseg import PosteriorMatrix
from corpus_automator.subtext import TokenTable
from corpus_automator.synth import TOKENS, make_fixture


@pytest.fixture
def token_table():
    return TokenTable(TOKENS)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """The bundled synthetic corpus and its construction sheet, built once."""
    directory = tmp_path_factory.mktemp("fixture")
    construction = make_fixture(str(directory), seed=0)
    return directory, construction


def posteriors_from_probs(probs, samples_per_frame=640, sample_rate_hz=16000):
    probs = np.asarray(probs, dtype=np.float64)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return PosteriorMatrix(np.log(probs), samples_per_frame, sample_rate_hz)


def random_posteriors(rng, n_frames, vocab_size, samples_per_frame=640):
    return posteriors_from_probs(rng.dirichlet(np.ones(vocab_size), size=n_frames), samples_per_frame)
