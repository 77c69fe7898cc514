"""Tone watermarks for audio corpora: embed, detect, and attribute."""

from .audio import AttackSpec, AudioBuffer, apply_attack, load_wav, mix, prefix, repeat, resample, rms, store_wav
from .detect import DetectorParams, ScoredOutput, auc, best_of_n, detection_accuracy, rule_score, secret_score
from .metrics import GaussianStats, LabelDistribution, fad, fit_gaussian, frechet_distance, kld, kld_min, si_snr
from .spectral import MelFilterbank, MelSpectrogram, band_for_frequency, distinct_bands, mel_filterbank, mel_spectrogram, stft_power
from .watermark import ToneEmbedder, WatermarkSpec, embed, multi_apply, parse_spec

__version__ = "0.1.0"
