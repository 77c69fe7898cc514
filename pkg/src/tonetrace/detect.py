"""Mel-band rule classifier and score aggregation (ROC AUC, best-of-n).

The rule score for a target frequency is the sum over frames of the linear
mel power in the band whose center is closest to that frequency. Higher
score = more tone present. AUC treats "watermarked" as the positive class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .audio import AudioBuffer
from .errors import ConfigError, DegenerateLabels, EmptyGroup
from .spectral import band_for_frequency, cached_filterbank, stft_power
from .watermark import WatermarkSpec

CLEAN = "clean"
WATERMARKED = "watermarked"


@dataclass(frozen=True)
class DetectorParams:
    """Mel analysis parameters of the rule classifier."""

    n_mels: int = 128
    n_fft: int = 2048
    hop: int = 512
    fmin: float = 0.0
    fmax: float | None = None

    def filterbank(self, sample_rate: int):
        fmax = self.fmax if self.fmax is not None else sample_rate / 2.0
        return cached_filterbank(self.n_mels, self.n_fft, sample_rate, self.fmin, fmax)


DEFAULT_PARAMS = DetectorParams()


@dataclass(frozen=True)
class ScoredOutput:
    """One generated audio with its provenance label and detector score."""

    id: str
    source_label: str  # CLEAN or WATERMARKED
    score: float
    prompt_id: str = ""
    replicate: int = 0

    def __post_init__(self):
        if self.source_label not in (CLEAN, WATERMARKED):
            raise ValueError(f"bad source_label {self.source_label!r}")
        if not np.isfinite(self.score):
            raise ValueError("score must be finite")


def _band_frame_values(
    audio: AudioBuffer, f: float, params: DetectorParams
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame mel power in the band nearest f, plus each frame's start sample."""
    fb = params.filterbank(audio.sample_rate)
    band = band_for_frequency(fb, f)
    power = stft_power(audio, params.n_fft, params.hop)
    values = power @ fb.weights[band]
    starts = np.arange(values.size) * params.hop
    return values, starts


def rule_score(audio: AudioBuffer, f: float, params: DetectorParams = DEFAULT_PARAMS) -> float:
    """Sum of linear mel power in the band nearest f, over all frames."""
    values, _ = _band_frame_values(audio, f, params)
    return float(values.sum())


def secret_score(
    audio: AudioBuffer,
    f: float,
    f2: float,
    onset: float,
    params: DetectorParams = DEFAULT_PARAMS,
) -> float:
    """Rule score for f2 restricted to frames starting at or after `onset` seconds.

    Measures whether the hidden continuation frequency shows up where it
    should. Raises ConfigError when f and f2 fall in the same mel band.
    """
    fb = params.filterbank(audio.sample_rate)
    if band_for_frequency(fb, f) == band_for_frequency(fb, f2):
        raise ConfigError(
            f"{f} Hz and {f2} Hz fall in the same mel band "
            f"({band_for_frequency(fb, f)}); pick farther-apart frequencies"
        )
    values, starts = _band_frame_values(audio, f2, params)
    keep = starts >= onset * audio.sample_rate - 1e-9
    return float(values[keep].sum())


def stop_presence_score(
    audio: AudioBuffer, f: float, d: float, params: DetectorParams = DEFAULT_PARAMS
) -> float:
    """Rule score for f over frames lying entirely inside the first d seconds."""
    values, starts = _band_frame_values(audio, f, params)
    keep = starts + params.n_fft <= d * audio.sample_rate + 1e-9
    return float(values[keep].sum())


def matched_score(
    audio: AudioBuffer,
    spec: WatermarkSpec,
    params: DetectorParams = DEFAULT_PARAMS,
    onset: float | None = None,
) -> float:
    """Score an audio with the detector matching a watermark spec.

    tone: presence of f anywhere. switch/alternate: presence of the second
    frequency from `onset` (default: the switch point d). stop: presence of
    f inside the first d seconds.
    """
    if spec.kind == "tone":
        return rule_score(audio, spec.f, params)
    if spec.kind in ("switch", "alternate"):
        start = spec.d if onset is None else onset
        return secret_score(audio, spec.f, spec.f2, start, params)
    return stop_presence_score(audio, spec.f, spec.d, params)


def auc(scores: Iterable[ScoredOutput]) -> float:
    """Probability a random watermarked output outscores a random clean one.

    Mann-Whitney estimator with midrank tie handling: ties count 1/2.
    """
    items = list(scores)
    values = np.array([s.score for s in items], dtype=np.float64)
    positive = np.array([s.source_label == WATERMARKED for s in items], dtype=bool)
    n_pos = int(positive.sum())
    n_neg = int(values.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} watermarked / {n_neg} clean")
    ranks = rankdata(values, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def detection_accuracy(scores: Iterable[ScoredOutput], threshold: float) -> float:
    """Fraction of outputs where (score > threshold) agrees with the label."""
    items = list(scores)
    if not items:
        raise EmptyGroup("no scores")
    correct = sum(
        (s.score > threshold) == (s.source_label == WATERMARKED) for s in items
    )
    return correct / len(items)


def best_of_n(scores_per_prompt: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Per-prompt maximum over that prompt's continuation scores."""
    out = {}
    for prompt_id, values in scores_per_prompt.items():
        if len(values) == 0:
            raise EmptyGroup(f"prompt {prompt_id!r} has no continuation scores")
        out[prompt_id] = max(values)
    return out
