"""Tone-family watermark embedders and k-fold composition.

All embedders add pure cosine tones scaled by the RMS amplitude of the
original signal (computed once per embed call, over the whole buffer), so a
louder carrier gets a proportionally louder mark. Silent input therefore
receives a zero watermark rather than an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .audio import AudioBuffer
from .errors import InvalidSpec

KINDS = ("tone", "switch", "alternate", "stop")


@dataclass(frozen=True)
class WatermarkSpec:
    """Declarative description of a tone-family watermark.

    kind "tone": a tone at f over the whole signal.
    kind "switch": f for the first d seconds, then f2 to the end.
    kind "alternate": f and f2 alternating every d seconds.
    kind "stop": f for the first d seconds, the rest untouched.
    """

    kind: str
    f: float
    f2: float | None = None
    d: float | None = None
    strength: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown watermark kind {self.kind!r}")
        if self.kind in ("switch", "alternate"):
            if self.f2 is None:
                raise InvalidSpec(f"{self.kind} watermark needs f2")
            if self.d is None or self.d <= 0:
                raise InvalidSpec(f"{self.kind} watermark needs d > 0")
        if self.kind == "stop" and (self.d is None or self.d <= 0):
            raise InvalidSpec("stop watermark needs d > 0")
        if self.kind == "tone" and self.f2 is not None:
            raise InvalidSpec("tone watermark takes no f2")
        if self.strength <= 0:
            raise InvalidSpec("strength must be positive")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "f": self.f,
                "f2": self.f2,
                "d": self.d,
                "strength": self.strength,
                "phase": self.phase,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "WatermarkSpec":
        obj = json.loads(text)
        return cls(
            kind=obj["kind"],
            f=float(obj["f"]),
            f2=None if obj.get("f2") is None else float(obj["f2"]),
            d=None if obj.get("d") is None else float(obj["d"]),
            strength=float(obj.get("strength", 1.0)),
            phase=float(obj.get("phase", 0.0)),
        )

    def with_strength(self, strength: float) -> "WatermarkSpec":
        return replace(self, strength=strength)


_SHORTHAND_ARITY = {"tone": 2, "switch": 4, "alternate": 4, "stop": 3}


def parse_spec(text: str, strength: float = 1.0, phase: float = 0.0) -> WatermarkSpec:
    """Parse CLI shorthand: tone:F, switch:F:F2:D, alternate:F:F2:D, stop:F:D."""
    parts = text.split(":")
    kind = parts[0].lower()
    if kind not in _SHORTHAND_ARITY:
        raise InvalidSpec(f"unknown watermark kind {parts[0]!r} at position 0 in {text!r}")
    if len(parts) != _SHORTHAND_ARITY[kind]:
        raise InvalidSpec(
            f"{kind!r} shorthand takes {_SHORTHAND_ARITY[kind] - 1} parameters, "
            f"got {len(parts) - 1} in {text!r}"
        )
    values = []
    for i, token in enumerate(parts[1:], start=1):
        try:
            values.append(float(token))
        except ValueError:
            raise InvalidSpec(f"bad number {token!r} at position {i} in {text!r}") from None
    if kind == "tone":
        return WatermarkSpec(kind="tone", f=values[0], strength=strength, phase=phase)
    if kind == "stop":
        return WatermarkSpec(kind="stop", f=values[0], d=values[1], strength=strength, phase=phase)
    return WatermarkSpec(
        kind=kind, f=values[0], f2=values[1], d=values[2], strength=strength, phase=phase
    )


def _check_frequency(f: float, sample_rate: int, label: str) -> None:
    if not (0 < f < sample_rate / 2):
        raise InvalidSpec(f"{label}={f} Hz outside (0, {sample_rate / 2}) at {sample_rate} Hz")


def _segment_tone(n_samples: int, start: int, stop: int, f: float, amp: float,
                  phase: float, sample_rate: int, out: np.ndarray) -> None:
    # Tone restarts at `phase` at its segment start (no cross-segment continuity).
    t = np.arange(stop - start) / sample_rate
    out[start:stop] += amp * np.cos(2.0 * np.pi * f * t + phase)


def embed_tone(audio: AudioBuffer, spec: WatermarkSpec) -> AudioBuffer:
    """Add a full-duration tone at spec.f, amplitude strength * rms(audio)."""
    if spec.kind != "tone":
        raise InvalidSpec(f"embed_tone got kind {spec.kind!r}")
    _check_frequency(spec.f, audio.sample_rate, "f")
    amp = spec.strength * _rms(audio.samples)
    out = audio.samples.copy()
    _segment_tone(out.size, 0, out.size, spec.f, amp, spec.phase, audio.sample_rate, out)
    return AudioBuffer(samples=out, sample_rate=audio.sample_rate)


def embed_switch(audio: AudioBuffer, spec: WatermarkSpec) -> AudioBuffer:
    """Tone at f on [0, d), then f2 to the end; both scaled by the whole-signal RMS."""
    if spec.kind != "switch":
        raise InvalidSpec(f"embed_switch got kind {spec.kind!r}")
    _check_frequency(spec.f, audio.sample_rate, "f")
    _check_frequency(spec.f2, audio.sample_rate, "f2")
    if spec.d >= audio.duration_seconds:
        raise InvalidSpec(f"switch point d={spec.d} s >= duration {audio.duration_seconds} s")
    amp = spec.strength * _rms(audio.samples)
    out = audio.samples.copy()
    n_d = int(spec.d * audio.sample_rate)
    _segment_tone(out.size, 0, n_d, spec.f, amp, spec.phase, audio.sample_rate, out)
    _segment_tone(out.size, n_d, out.size, spec.f2, amp, spec.phase, audio.sample_rate, out)
    return AudioBuffer(samples=out, sample_rate=audio.sample_rate)


def embed_alternate(audio: AudioBuffer, spec: WatermarkSpec) -> AudioBuffer:
    """Tones at f and f2 alternating every d seconds over the whole signal."""
    if spec.kind != "alternate":
        raise InvalidSpec(f"embed_alternate got kind {spec.kind!r}")
    _check_frequency(spec.f, audio.sample_rate, "f")
    _check_frequency(spec.f2, audio.sample_rate, "f2")
    if spec.d >= audio.duration_seconds:
        raise InvalidSpec(f"segment d={spec.d} s >= duration {audio.duration_seconds} s")
    amp = spec.strength * _rms(audio.samples)
    out = audio.samples.copy()
    n = out.size
    k = 0
    while True:
        start = int(k * spec.d * audio.sample_rate)
        if start >= n:
            break
        stop = min(int((k + 1) * spec.d * audio.sample_rate), n)
        freq = spec.f if k % 2 == 0 else spec.f2
        _segment_tone(n, start, stop, freq, amp, spec.phase, audio.sample_rate, out)
        k += 1
    return AudioBuffer(samples=out, sample_rate=audio.sample_rate)


def embed_stop(audio: AudioBuffer, spec: WatermarkSpec) -> AudioBuffer:
    """Tone at f on [0, d) only; every later sample is bit-identical to the input."""
    if spec.kind != "stop":
        raise InvalidSpec(f"embed_stop got kind {spec.kind!r}")
    _check_frequency(spec.f, audio.sample_rate, "f")
    if spec.d >= audio.duration_seconds:
        raise InvalidSpec(f"stop point d={spec.d} s >= duration {audio.duration_seconds} s")
    amp = spec.strength * _rms(audio.samples)
    out = audio.samples.copy()
    n_d = int(spec.d * audio.sample_rate)
    _segment_tone(out.size, 0, n_d, spec.f, amp, spec.phase, audio.sample_rate, out)
    return AudioBuffer(samples=out, sample_rate=audio.sample_rate)


_EMBED_FUNCS = {
    "tone": embed_tone,
    "switch": embed_switch,
    "alternate": embed_alternate,
    "stop": embed_stop,
}


def embed(audio: AudioBuffer, spec: WatermarkSpec) -> AudioBuffer:
    """Apply the embedder matching spec.kind."""
    return _EMBED_FUNCS[spec.kind](audio, spec)


class ToneEmbedder:
    """Embedder wrapping a fixed WatermarkSpec; length- and rate-preserving."""

    def __init__(self, spec: WatermarkSpec, name: str | None = None):
        self.spec = spec
        self.name = name or f"{spec.kind}:{spec.f:g}"

    def embed(self, audio: AudioBuffer) -> AudioBuffer:
        return embed(audio, self.spec)


def multi_apply(embedder, audio: AudioBuffer, k: int) -> AudioBuffer:
    """Compose the embedder with itself k times; k=0 is the identity."""
    if k < 0:
        raise InvalidSpec("k must be >= 0")
    out = audio
    for _ in range(k):
        out = embedder.embed(out)
        if len(out) != len(audio) or out.sample_rate != audio.sample_rate:
            raise InvalidSpec(f"embedder {getattr(embedder, 'name', embedder)!r} "
                              "did not preserve length/rate")
    return out


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0
