import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import speech_like  # noqa: E402

from specsieve import AudioBuffer, TrainConfig, train_dictionary
from specsieve.dsp import make_stft_config


@pytest.fixture(scope="session")
def stft_config():
    return make_stft_config(16000, 10.0)


@pytest.fixture(scope="session")
def small_dictionary(stft_config):
    """K=16 dictionary from ~40 s of synthetic speech; fast, for unit tests."""
    corpus = [AudioBuffer(speech_like(4.0, seed=100 + i), 16000) for i in range(10)]
    cfg = TrainConfig(n_clusters=16, n_patches=2000, rng_seed=0, max_iters=60)
    dictionary, _ = train_dictionary(corpus, cfg, stft_config)
    return dictionary


@pytest.fixture(scope="session")
def speech_clip():
    """A held-out utterance none of the dictionaries trained on."""
    return AudioBuffer(speech_like(2.5, seed=7777), 16000)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
