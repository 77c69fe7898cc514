import numpy as np

from tonetrace.audio import AudioBuffer


def tone_buffer(freq, duration=1.0, sample_rate=32000, amplitude=1.0, phase=0.0):
    t = np.arange(int(duration * sample_rate)) / sample_rate
    return AudioBuffer(samples=amplitude * np.cos(2 * np.pi * freq * t + phase),
                       sample_rate=sample_rate)


def noise(rng, n=32000, sample_rate=32000, level=1.0):
    samples = rng.normal(size=n)
    samples *= level / np.sqrt(np.mean(samples**2))
    return AudioBuffer(samples=samples, sample_rate=sample_rate)
