"""Procedural synthetic audio corpus for desk-scale experiments.

Every clip draws its notes from one shared equal-tempered vocabulary (tuned
slightly off A440 so no note coincides exactly with a typical watermark
tone). Clips differ in key, melody, drone, and loudness, but frames across
clips share spectral shapes, which is what lets a codec fit on this corpus
generalize across clips the way a real tokenizer does.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, store_wav

_TUNING_HZ = 442.5  # concert-pitch offset keeps notes off exact watermark tones
_MIDI_LOW, _MIDI_HIGH = 45, 86  # roots ~110..250 Hz, melodies reach ~1050 Hz
_SCALE_STEPS = (0, 2, 4, 5, 7, 9, 11)  # major scale within an octave


def note_hz(midi: int) -> float:
    return _TUNING_HZ * 2.0 ** ((midi - 69) / 12.0)


@dataclass(frozen=True)
class DatasetItem:
    id: str
    caption: str
    audio: AudioBuffer


def _note(freq: float, n: int, amp: float, sr: int, phase: float) -> np.ndarray:
    # plucked single-partial note: fast attack, exponential decay. Pure
    # partials keep frequency bands independent, which the
    # frequency-specificity experiments rely on.
    t = np.arange(n) / sr
    wave = np.cos(2 * np.pi * freq * t + phase)
    env = np.exp(-t / 0.14)
    attack = min(n, 128)
    env[:attack] *= np.linspace(0, 1, attack)
    return amp * wave * env


def make_clip(seed: int, index: int, duration: float = 10.0, sample_rate: int = 32000) -> AudioBuffer:
    """One deterministic clip; (seed, index) fully determines the samples."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
    n = int(duration * sample_rate)
    out = np.zeros(n)

    key_root = int(rng.integers(_MIDI_LOW, _MIDI_HIGH - 24))
    key_notes = [key_root + octave + step for octave in (0, 12) for step in _SCALE_STEPS]

    # melody: a random walk over the key, back-to-back note events
    pos = 0
    degree = int(rng.integers(len(key_notes)))
    while pos < n:
        length = min(int(rng.uniform(0.3, 1.0) * sample_rate), n - pos)
        if length < 512:
            break
        degree = int(np.clip(degree + rng.integers(-2, 3), 0, len(key_notes) - 1))
        freq = note_hz(key_notes[degree])
        out[pos : pos + length] += _note(
            freq, length, rng.uniform(0.05, 0.11), sample_rate, rng.uniform(0, 2 * np.pi)
        )
        pos += length

    # sustained drone on the root, one octave down
    t = np.arange(n) / sample_rate
    drone_hz = note_hz(key_root - 12)
    out += rng.uniform(0.02, 0.05) * np.cos(2 * np.pi * drone_hz * t + rng.uniform(0, 2 * np.pi))

    out += 0.004 * rng.standard_normal(n)

    target = rng.uniform(0.07, 0.13)
    out *= target / np.sqrt(np.mean(out**2))
    return AudioBuffer(samples=out, sample_rate=sample_rate)


def make_corpus(
    n_clips: int = 200, duration: float = 10.0, sample_rate: int = 32000, seed: int = 0
) -> list[DatasetItem]:
    items = []
    for i in range(n_clips):
        audio = make_clip(seed, i, duration, sample_rate)
        items.append(
            DatasetItem(
                id=f"clip-{i:04d}",
                caption=f"synthetic clip {i} (seed {seed})",
                audio=audio,
            )
        )
    return items


def write_corpus(items: list[DatasetItem], out_dir, encoding: str = "float32") -> Path:
    """Write clips as WAVs plus a dataset manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for item in items:
        fname = f"{item.id}.wav"
        store_wav(item.audio, out_dir / fname, encoding=encoding)
        records.append({"file": fname, "caption": item.caption, "id": item.id})
    manifest = out_dir / "dataset.json"
    manifest.write_text(json.dumps(records, indent=2, sort_keys=True))
    return manifest
