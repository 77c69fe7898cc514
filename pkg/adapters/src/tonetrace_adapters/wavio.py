"""Thin WAV helpers for adapter I/O (mono float in [-1, 1])."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile


def read_wav(path) -> tuple[np.ndarray, int]:
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    else:
        data = data.astype(np.float32)
    return data, int(rate)


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    wavfile.write(path, rate, np.asarray(samples, dtype=np.float32))
