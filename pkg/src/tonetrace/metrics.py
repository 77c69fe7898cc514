"""Imperceptibility and distribution-shift metrics.

si_snr measures how audible an additive watermark is; kld/kld_min compare
classifier label distributions; fad compares Gaussian fits to embedding sets.
The built-in extractor is a deterministic mel-statistics embedding; heavier
pretrained extractors plug in through the same interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .errors import (
    DimMismatch,
    LabelMismatch,
    LengthMismatch,
    NumericalFailure,
    TooFewSamples,
    ZeroReference,
)
from .spectral import cached_filterbank, stft_power

_RESIDUAL_FLOOR = 1e-30


def si_snr(s: AudioBuffer, s_w: AudioBuffer) -> float:
    """Scale-invariant signal-to-noise ratio of s_w against reference s, in dB.

    The watermarked signal is first projected onto the reference
    (alpha = <s, s_w> / ||s||^2), making the value invariant to rescaling
    either input. Returns +inf when s_w is an exact rescaling of s.
    """
    x, y = s.samples, s_w.samples
    if x.size != y.size:
        raise LengthMismatch(f"{x.size} vs {y.size} samples")
    s_energy = float(np.dot(x, x))
    if s_energy == 0.0:
        raise ZeroReference("reference signal is identically zero")
    alpha = float(np.dot(x, y)) / s_energy
    target = alpha * x
    residual = target - y
    res_energy = float(np.dot(residual, residual))
    if res_energy < _RESIDUAL_FLOOR:
        return math.inf
    target_energy = float(np.dot(target, target))
    if target_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(target_energy / res_energy)


@dataclass(frozen=True, eq=False)
class LabelDistribution:
    """Probabilities over named class labels, normalized to 1."""

    probs: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", tuple(self.labels))
        if probs.size != len(self.labels):
            raise LabelMismatch("probs and labels differ in length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to 1")


def _aligned(p: LabelDistribution, q: LabelDistribution) -> tuple[np.ndarray, np.ndarray]:
    if p.labels == q.labels:
        return p.probs, q.probs
    if set(p.labels) != set(q.labels):
        raise LabelMismatch("distributions are over different label sets")
    order = [q.labels.index(lbl) for lbl in p.labels]
    return p.probs, q.probs[order]


def kld(p: LabelDistribution, q: LabelDistribution) -> float:
    """Kullback-Leibler divergence D(p || q) in nats; +inf on support violation."""
    pv, qv = _aligned(p, q)
    support = pv > 0
    if np.any(qv[support] == 0):
        return math.inf
    return float(np.sum(pv[support] * np.log(pv[support] / qv[support])))


def kld_min(p: LabelDistribution, q: LabelDistribution) -> float:
    """Minimum of the two KLD directions (the divergence is asymmetric)."""
    return min(kld(p, q), kld(q, p))


@dataclass(frozen=True, eq=False)
class GaussianStats:
    """Mean and covariance of an embedding set, plus the sample count."""

    mean: np.ndarray
    covariance: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.size


def _psd_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        eigvals, eigvecs = np.linalg.eigh(matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    return np.clip(eigvals, 0.0, None), eigvecs


def fit_gaussian(embeddings) -> GaussianStats:
    """Sample mean and unbiased covariance, with eigenvalues clamped at zero."""
    matrix = np.asarray(list(embeddings), dtype=np.float64)
    if matrix.ndim != 2:
        raise DimMismatch("embeddings must share one dimension")
    n, _dim = matrix.shape
    if n < 2:
        raise TooFewSamples(f"need >= 2 embeddings, got {n}")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    eigvals, eigvecs = _psd_eigh(cov)
    cov = (eigvecs * eigvals) @ eigvecs.T
    return GaussianStats(mean=mean, covariance=(cov + cov.T) / 2.0, n=n)


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared-mean-difference plus covariance trace term between two Gaussians.

    ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the matrix
    square root taken through the symmetrized product
    S_a^{1/2} S_b S_a^{1/2}.
    """
    if a.dim != b.dim:
        raise DimMismatch(f"{a.dim}-d vs {b.dim}-d stats")
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    eigvals_a, eigvecs_a = _psd_eigh(a.covariance)
    sqrt_a = (eigvecs_a * np.sqrt(eigvals_a)) @ eigvecs_a.T
    product = sqrt_a @ b.covariance @ sqrt_a
    product = (product + product.T) / 2.0
    eigvals_p, _ = _psd_eigh(product)
    if eigvals_p.size and eigvals_p[-1] > 0:
        # rank-deficient fits leave noise eigenvalues whose square roots would
        # swamp the trace; treat anything below machine-level as exactly zero
        eigvals_p[eigvals_p < eigvals_p[-1] * 1e-12] = 0.0
    trace_term = float(
        np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.sum(np.sqrt(eigvals_p))
    )
    total = mean_term + trace_term
    if total < 0.0:
        if total < -1e-8:
            raise NumericalFailure(f"negative distance {total}")
        total = 0.0
    return total


class MelStatsExtractor:
    """Deterministic embedding: per-band mean and std of a log(1+x) mel spectrogram."""

    def __init__(self, n_mels: int = 64, n_fft: int = 2048, hop: int = 512):
        self.n_mels = n_mels
        self.n_fft = n_fft
        self.hop = hop
        self.dim = 2 * n_mels
        self.name = f"mel-stats-{n_mels}"

    def extract(self, audio: AudioBuffer) -> np.ndarray:
        fb = cached_filterbank(
            self.n_mels, self.n_fft, audio.sample_rate, 0.0, audio.sample_rate / 2.0
        )
        power = stft_power(audio, self.n_fft, self.hop)
        logmel = np.log1p(power @ fb.weights.T)
        return np.concatenate([logmel.mean(axis=0), logmel.std(axis=0)])


def default_extractor() -> MelStatsExtractor:
    return MelStatsExtractor()


def fad(reference, generated, extractor=None) -> float:
    """Frechet distance between Gaussian fits to two sets of audio embeddings."""
    extractor = extractor or default_extractor()
    ref = [extractor.extract(a) for a in reference]
    gen = [extractor.extract(a) for a in generated]
    if len(ref) < 2 or len(gen) < 2:
        raise TooFewSamples("fad needs at least 2 samples per set")
    return frechet_distance(fit_gaussian(ref), fit_gaussian(gen))


def metric_report(metric: str, value: float, n_reference: int = 0,
                  n_generated: int = 0, extractor_name: str = "") -> dict:
    """JSON-ready record for a single metric value."""
    return {
        "metric": metric,
        "value": value,
        "n_reference": n_reference,
        "n_generated": n_generated,
        "extractor_name": extractor_name,
    }
