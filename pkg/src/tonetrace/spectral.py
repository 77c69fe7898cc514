"""STFT and mel-spectrogram computation for the mel-band rule detector.

Mel frequencies use the HTK-style formula mel = 2595 * log10(1 + f / 700).
Spectrogram values stay in linear power (magnitude squared); band scores
downstream are sums of linear power, not dB.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioBuffer
from .errors import InvalidRange, OutOfRange, RateMismatch, TooShort


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    """Triangular mel filters: weights is (n_mels, n_fft//2 + 1), rows unimodal."""

    n_mels: int
    n_fft: int
    sample_rate: int
    fmin: float
    fmax: float
    weights: np.ndarray
    band_centers_hz: np.ndarray


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """Frame-by-band matrix of linear mel power plus the band center frequencies."""

    values: np.ndarray  # (n_frames, n_mels), nonnegative
    frame_hop: int
    band_centers_hz: np.ndarray


def _hann(n_fft: int) -> np.ndarray:
    # Periodic Hann window.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def stft_power(audio: AudioBuffer, n_fft: int, hop: int, window: str = "hann") -> np.ndarray:
    """Squared-magnitude one-sided spectra of Hann-windowed frames.

    No centering or padding: n_frames = 1 + (len - n_fft) // hop.
    """
    if window != "hann":
        raise ValueError(f"unsupported window {window!r}")
    if n_fft <= 0 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError("n_fft must be a power of two")
    x = audio.samples
    if x.size < n_fft:
        raise TooShort(f"need at least {n_fft} samples, have {x.size}")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop]
    spec = np.fft.rfft(frames * _hann(n_fft), axis=1)
    return np.abs(spec) ** 2


def mel_filterbank(
    n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None
) -> MelFilterbank:
    """Build triangular filters with apexes equally spaced on the mel scale."""
    if fmax is None:
        fmax = sample_rate / 2.0
    if not (0 <= fmin < fmax <= sample_rate / 2.0):
        raise InvalidRange(f"need 0 <= fmin < fmax <= {sample_rate / 2}, got [{fmin}, {fmax}]")

    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bin_mels = hz_to_mel(bin_freqs)

    weights = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        left, center, right = mel_points[m], mel_points[m + 1], mel_points[m + 2]
        up = (bin_mels - left) / (center - left)
        down = (right - bin_mels) / (right - center)
        weights[m] = np.clip(np.minimum(up, down), 0.0, None)
        if not weights[m].any():
            raise InvalidRange(f"mel band {m} has no FFT bin support (n_fft too small)")

    return MelFilterbank(
        n_mels=n_mels,
        n_fft=n_fft,
        sample_rate=int(sample_rate),
        fmin=float(fmin),
        fmax=float(fmax),
        weights=weights,
        band_centers_hz=hz_points[1:-1],
    )


@lru_cache(maxsize=32)
def cached_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float, fmax: float):
    """Filterbanks are pure functions of their parameters; share them."""
    return mel_filterbank(n_mels, n_fft, sample_rate, fmin, fmax)


def mel_spectrogram(audio: AudioBuffer, fb: MelFilterbank, hop: int) -> MelSpectrogram:
    """Project the power STFT onto the mel filters (linear power, not dB)."""
    if fb.sample_rate != audio.sample_rate:
        raise RateMismatch(
            f"filterbank built for {fb.sample_rate} Hz, audio is {audio.sample_rate} Hz"
        )
    power = stft_power(audio, fb.n_fft, hop)
    return MelSpectrogram(
        values=power @ fb.weights.T, frame_hop=hop, band_centers_hz=fb.band_centers_hz
    )


def band_for_frequency(fb: MelFilterbank, f: float) -> int:
    """Index of the band whose center is closest to f; ties go to the lower index."""
    if not (fb.fmin <= f <= fb.fmax):
        raise OutOfRange(f"{f} Hz outside filterbank range [{fb.fmin}, {fb.fmax}]")
    return int(np.argmin(np.abs(fb.band_centers_hz - f)))


def distinct_bands(fb: MelFilterbank, f: float, f2: float) -> bool:
    """True iff the two frequencies map to different mel bands."""
    return band_for_frequency(fb, f) != band_for_frequency(fb, f2)
