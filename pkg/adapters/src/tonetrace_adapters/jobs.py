"""Adapter job descriptions and their validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = (
    "audioseal_embed",
    "audioseal_detect",
    "musicgen_continue",
    "embed_extract",
    "pesq",
)

_LABELS = ("clean", "watermarked")


class ModelUnavailable(RuntimeError):
    """The pretrained model backing this job is not installed/downloadable."""


class InferenceError(RuntimeError):
    """Model inference failed; the message names the file being processed."""


@dataclass(frozen=True)
class AdapterJob:
    """One batch job: a kind, an input directory, an output directory.

    kind-specific params:
      audioseal_embed: times (k-fold embedding, default 1)
      musicgen_continue: prompt_seconds, source_label, replicates, caption
        (manifest may point at a dataset JSON carrying per-file captions)
      embed_extract: model ("vggish" or "passt")
      pesq: manifest points at a CSV with columns file, reference
    """

    kind: str
    in_dir: str
    out_dir: str
    manifest: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown job kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "audioseal_embed":
            times = self.params.get("times", 1)
            if not (isinstance(times, int) and times >= 1):
                raise ValueError(f"audioseal_embed times must be a positive int, got {times!r}")
        if self.kind == "musicgen_continue":
            label = self.params.get("source_label", "clean")
            if label not in _LABELS:
                raise ValueError(f"source_label must be one of {_LABELS}, got {label!r}")
            if self.params.get("prompt_seconds", 5.0) <= 0:
                raise ValueError("prompt_seconds must be positive")
        if self.kind == "embed_extract":
            model = self.params.get("model", "vggish")
            if model not in ("vggish", "passt"):
                raise ValueError(f"embed_extract model must be vggish or passt, got {model!r}")
        if self.kind == "pesq" and self.manifest is None:
            raise ValueError("pesq jobs need a manifest CSV with columns file, reference")

    @classmethod
    def load(cls, path) -> "AdapterJob":
        obj = json.loads(Path(path).read_text())
        return cls(
            kind=obj.get("kind", ""),
            in_dir=obj["in_dir"],
            out_dir=obj["out_dir"],
            manifest=obj.get("manifest"),
            params=obj.get("params", {}),
        )

    def input_wavs(self) -> list[Path]:
        files = sorted(Path(self.in_dir).glob("*.wav"))
        if not files:
            raise FileNotFoundError(f"no WAV files under {self.in_dir}")
        return files
