import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from samplecnn import audio, train
from samplecnn.model import ModelSpec

TINY = dict(m=3, n=3, input_len=81, channels=(4, 4, 8))


def tiny_spec(**kw):
    return ModelSpec(**{**TINY, "n_tags": 4, **kw})


@pytest.fixture(scope="session")
def tiny_corpus():
    """40 half-second-ish synthetic clips at 2 kHz with four tag bands."""
    spec = audio.SynthSpec(n_clips=40, clip_seconds=0.2, sample_rate_hz=2000, n_bands=4, seed=5)
    return audio.generate_synthetic(spec)


@pytest.fixture
def tiny_splits(tiny_corpus):
    clips, entries = tiny_corpus
    splits, _ = train.build_splits(tiny_spec(), clips, entries)
    return splits


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
