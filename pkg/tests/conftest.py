import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_waveform(rng):
    from prdsp.fieldcore import ComplexWaveform

    def make(n=256, sample_rate_hz=100e9, seed=None):
        gen = np.random.default_rng(seed) if seed is not None else rng
        samples = gen.standard_normal(n) + 1j * gen.standard_normal(n)
        return ComplexWaveform(samples, sample_rate_hz)

    return make
