import numpy as np
import pytest

from tonetrace.audio import AudioBuffer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def noise_buffer(rng):
    """One second of unit-RMS white noise at 32 kHz."""
    samples = rng.normal(size=32000)
    samples /= np.sqrt(np.mean(samples**2))
    return AudioBuffer(samples=samples, sample_rate=32000)
