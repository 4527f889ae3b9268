import os
import sys

import numpy as np
import pytest

from source.data.fixture import generate_fixture_corpus
from source.data.splits import make_seen_split
from source.dsp.masking import CHUNK_FRAMES
from source.dsp.mixture import Ltas, generate_ssn
from source.dsp.stft import NUM_BINS

TEST_SNRS = (0.0, 5.0)


class ConstantMaskModel:
    """Mask estimator returning the same value everywhere."""

    def __init__(self, modality: str = 'AO', value: float = 1.0):
        self.modality = modality
        self.value = value
        self.calls = 0

    def estimate_masks(self, audio, video):
        self.calls += 1
        num_chunks = len(audio) if audio is not None else len(video)
        return np.full((num_chunks, NUM_BINS, CHUNK_FRAMES), self.value)


@pytest.fixture(scope='session')
def corpus_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp('corpus'))


@pytest.fixture(scope='session')
def manifest(corpus_dir):
    # 2 speakers x 18 sentences: 10 test, 5 validation, 3 training per speaker.
    return generate_fixture_corpus(n_speakers=2, n_utterances=18, seed=0, out_dir=corpus_dir)


@pytest.fixture(scope='session')
def seen_plan(manifest):
    return make_seen_split(manifest, 'L', seed=0, snrs=TEST_SNRS)


@pytest.fixture(scope='session')
def noise():
    # Flat spectrum, long enough for every fixture utterance (at most 3 s).
    return generate_ssn(Ltas(np.ones(NUM_BINS)), 10 * 3 * 16000, seed=0)


@pytest.fixture
def pesq_tool(tmp_path):
    """Command template of a fake PESQ tool printing a fixed score."""

    script = tmp_path / 'fake_pesq.py'
    script.write_text(
        "import sys\n"
        "assert len(sys.argv) >= 3, sys.argv\n"
        "print('P.862.2 Prediction (MOS-LQO):  = 2.750')\n"
    )
    return f"'{sys.executable}' '{script}' {{mode_flag}} {{clean}} {{degraded}}"


@pytest.fixture
def clean_env(monkeypatch):
    for key in ('AVSE_DATA_DIR', 'AVSE_PESQ_CMD'):
        monkeypatch.delenv(key, raising=False)
    return os.environ
