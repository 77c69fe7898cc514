"""Audio buffers, WAV file I/O, resampling, signal arithmetic, and removal attacks.

Everything downstream works on mono float buffers in [-1, 1]. Stereo input is
downmixed on load; clipping is applied only when encoding to PCM16, never
during processing, so metric computations see the true additive signal.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy import signal as _sig

from .errors import (
    CorruptFile,
    EmptyBuffer,
    InvalidAttackParams,
    IoError,
    LengthMismatch,
    OutOfRange,
    RateMismatch,
    UnsupportedFormat,
)

_WAVE_FMT_PCM = 1
_WAVE_FMT_FLOAT = 3


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono audio: a float sample array plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer samples must be one-dimensional")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ValueError("sample_rate must be a positive integer")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class AttackSpec:
    """A signal-level removal attack: filtering, requantization, or added noise."""

    kind: str  # "highpass" | "lowpass" | "quantize" | "noise"
    cutoff_hz: float | None = None
    bits: int | None = None
    snr_db: float | None = None
    seed: int = 0

    _KINDS = ("highpass", "lowpass", "quantize", "noise")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InvalidAttackParams(f"unknown attack kind {self.kind!r}")
        if self.kind in ("highpass", "lowpass"):
            if self.cutoff_hz is None or not (self.cutoff_hz > 0):
                raise InvalidAttackParams("filter attack needs cutoff_hz > 0")
        elif self.kind == "quantize":
            if self.bits is None or not (2 <= self.bits <= 16):
                raise InvalidAttackParams("quantize bits must be in [2, 16]")
        else:
            if self.snr_db is None or not math.isfinite(self.snr_db):
                raise InvalidAttackParams("noise attack needs a finite snr_db")

    @classmethod
    def parse(cls, text: str) -> "AttackSpec":
        """Parse the CLI shorthand, e.g. "highpass:30" or "noise:40:7"."""
        parts = text.split(":")
        kind = parts[0].lower()
        try:
            if kind in ("highpass", "lowpass") and len(parts) == 2:
                return cls(kind=kind, cutoff_hz=float(parts[1]))
            if kind == "quantize" and len(parts) == 2:
                return cls(kind=kind, bits=int(parts[1]))
            if kind == "noise" and len(parts) in (2, 3):
                seed = int(parts[2]) if len(parts) == 3 else 0
                return cls(kind=kind, snr_db=float(parts[1]), seed=seed)
        except ValueError as exc:
            raise InvalidAttackParams(f"bad attack parameter in {text!r}: {exc}") from exc
        raise InvalidAttackParams(f"cannot parse attack spec {text!r}")


def load_wav(path) -> AudioBuffer:
    """Read a RIFF/WAVE file (PCM16 or IEEE float32, mono or stereo).

    Stereo is downmixed by channel mean; PCM16 samples are scaled to
    [-1, 1) by division by 32768.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptFile(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise CorruptFile(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise CorruptFile(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise CorruptFile(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {channels} channels (only mono/stereo)")

    if audio_format == _WAVE_FMT_PCM and bits == 16:
        frames = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
        samples = frames.astype(np.float64) / 32768.0
    elif audio_format == _WAVE_FMT_FLOAT and bits == 32:
        frames = np.frombuffer(data[: len(data) - len(data) % (4 * channels)], dtype="<f4")
        samples = frames.astype(np.float64)
    else:
        raise UnsupportedFormat(
            f"{path}: format code {audio_format} / {bits} bits (need PCM16 or float32)"
        )

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioBuffer(samples=samples, sample_rate=int(sample_rate))


def store_wav(audio: AudioBuffer, path, encoding: str = "float32") -> None:
    """Write a mono WAV file. ``encoding`` is "pcm16" or "float32".

    PCM16 clamps to the representable code range; float32 is lossless for
    float32-representable samples.
    """
    encoding = encoding.lower()
    if encoding == "pcm16":
        codes = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
        payload = codes.tobytes()
        fmt_code, bits = _WAVE_FMT_PCM, 16
    elif encoding == "float32":
        payload = audio.samples.astype("<f4").tobytes()
        fmt_code, bits = _WAVE_FMT_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(payload)),
            b"WAVE",
            b"fmt ",
            struct.pack(
                "<IHHIIHH",
                16,
                fmt_code,
                1,
                audio.sample_rate,
                audio.sample_rate * block_align,
                block_align,
                bits,
            ),
            b"data",
            struct.pack("<I", len(payload)),
        ]
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def resample(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase resampling with a Kaiser(8) window.

    Output length is round(len * target/source); tones below both Nyquist
    frequencies keep their frequency.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == audio.sample_rate:
        return audio
    g = math.gcd(int(target_rate), audio.sample_rate)
    up, down = int(target_rate) // g, audio.sample_rate // g
    out = _sig.resample_poly(audio.samples, up, down, window=("kaiser", 8.0))
    n_out = int(round(audio.samples.size * target_rate / audio.sample_rate))
    if out.size > n_out:
        out = out[:n_out]
    elif out.size < n_out:
        out = np.pad(out, (0, n_out - out.size))
    return AudioBuffer(samples=out, sample_rate=int(target_rate))


def repeat(audio: AudioBuffer, times: int) -> AudioBuffer:
    """Concatenate ``times`` copies of the buffer."""
    if times < 1:
        raise ValueError("times must be >= 1")
    if times == 1:
        return audio
    return AudioBuffer(samples=np.tile(audio.samples, times), sample_rate=audio.sample_rate)


def prefix(audio: AudioBuffer, seconds: float) -> AudioBuffer:
    """First floor(seconds * sample_rate) samples."""
    if not (0 < seconds <= audio.duration_seconds):
        raise OutOfRange(
            f"prefix duration {seconds} s outside (0, {audio.duration_seconds:.6g}]"
        )
    n = int(seconds * audio.sample_rate)
    return AudioBuffer(samples=audio.samples[:n].copy(), sample_rate=audio.sample_rate)


def rms(audio: AudioBuffer) -> float:
    """Root mean square amplitude."""
    if audio.samples.size == 0:
        raise EmptyBuffer("rms of an empty buffer")
    return float(np.sqrt(np.mean(np.square(audio.samples))))


def mix(a: AudioBuffer, b: AudioBuffer) -> AudioBuffer:
    """Elementwise sum of two equal-length, equal-rate buffers. No clipping."""
    if a.sample_rate != b.sample_rate:
        raise RateMismatch(f"{a.sample_rate} Hz vs {b.sample_rate} Hz")
    if a.samples.size != b.samples.size:
        raise LengthMismatch(f"{a.samples.size} vs {b.samples.size} samples")
    return AudioBuffer(samples=a.samples + b.samples, sample_rate=a.sample_rate)


def _gaussian(rng: np.random.Generator, n: int) -> np.ndarray:
    # Box-Muller over uniform draws: stable across numpy versions.
    u1 = 1.0 - rng.random(n)
    u2 = rng.random(n)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def apply_attack(audio: AudioBuffer, attack: AttackSpec) -> AudioBuffer:
    """Apply a removal attack and return the degraded signal."""
    x = audio.samples
    if attack.kind in ("highpass", "lowpass"):
        if not (0 < attack.cutoff_hz < audio.sample_rate / 2):
            raise InvalidAttackParams(
                f"cutoff {attack.cutoff_hz} Hz outside (0, {audio.sample_rate / 2})"
            )
        sos = _sig.butter(
            2, attack.cutoff_hz, btype=attack.kind, fs=audio.sample_rate, output="sos"
        )
        # Zero-phase application; a causal single pass leaves ~11% of a tone at
        # cutoff/3, too leaky to count as removed.
        y = _sig.sosfiltfilt(sos, x)
    elif attack.kind == "quantize":
        delta = 2.0 / (1 << attack.bits)
        codes = np.clip(
            np.floor(np.clip(x, -1.0, 1.0) / delta),
            -(1 << (attack.bits - 1)),
            (1 << (attack.bits - 1)) - 1,
        )
        y = (codes + 0.5) * delta
    else:  # noise
        level = float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0
        noise_rms = level * 10.0 ** (-attack.snr_db / 20.0)
        rng = np.random.Generator(np.random.PCG64(attack.seed))
        y = x + noise_rms * _gaussian(rng, x.size)
    return AudioBuffer(samples=y, sample_rate=audio.sample_rate)
