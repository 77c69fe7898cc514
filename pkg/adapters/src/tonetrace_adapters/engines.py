"""Wrappers around the pretrained models, resolved lazily.

Each engine exposes `name` and `version` for provenance stamping plus one
inference method. Constructing an engine raises ModelUnavailable when its
stack is not installed, so jobs fail fast with the model named.
"""

from __future__ import annotations

import numpy as np

from .jobs import InferenceError, ModelUnavailable

AUDIOSEAL_MODEL = "audioseal_wm_16bits"
AUDIOSEAL_RATE = 16000
MUSICGEN_MODEL = "facebook/musicgen-small"


def _require(module_name: str, model_name: str):
    try:
        return __import__(module_name)
    except ImportError as exc:
        raise ModelUnavailable(
            f"{model_name} needs the {module_name!r} package (pip install {module_name})"
        ) from exc


def _version_of(module) -> str:
    return getattr(module, "__version__", "unknown")


def _resample_to(samples: np.ndarray, rate: int, target: int) -> np.ndarray:
    if rate == target:
        return samples
    from math import gcd

    from scipy.signal import resample_poly

    g = gcd(rate, target)
    return resample_poly(samples, target // g, rate // g).astype(np.float32)


class AudioSealEmbedEngine:
    def __init__(self):
        audioseal = _require("audioseal", "AudioSeal")
        torch = _require("torch", "AudioSeal")
        self._torch = torch
        self._generator = audioseal.AudioSeal.load_generator(AUDIOSEAL_MODEL)
        self.name = AUDIOSEAL_MODEL
        self.version = _version_of(audioseal)

    def embed(self, samples: np.ndarray, rate: int) -> np.ndarray:
        torch = self._torch
        work = _resample_to(samples, rate, AUDIOSEAL_RATE)
        batch = torch.from_numpy(work).float().reshape(1, 1, -1)
        with torch.no_grad():
            marked = self._generator(batch, sample_rate=AUDIOSEAL_RATE, alpha=1.0)
        out = marked.squeeze().cpu().numpy()
        return _resample_to(out, AUDIOSEAL_RATE, rate)[: samples.size]


class AudioSealDetectEngine:
    def __init__(self):
        audioseal = _require("audioseal", "AudioSeal")
        torch = _require("torch", "AudioSeal")
        self._torch = torch
        self._detector = audioseal.AudioSeal.load_detector("audioseal_detector_16bits")
        self.name = "audioseal_detector_16bits"
        self.version = _version_of(audioseal)

    def score(self, samples: np.ndarray, rate: int) -> float:
        torch = self._torch
        work = _resample_to(samples, rate, AUDIOSEAL_RATE)
        batch = torch.from_numpy(work).float().reshape(1, 1, -1)
        with torch.no_grad():
            result, _message = self._detector.detect_watermark(batch, AUDIOSEAL_RATE)
        return float(result)


class MusicGenEngine:
    def __init__(self):
        audiocraft = _require("audiocraft", "MusicGen")
        from audiocraft.models import MusicGen

        self._model = MusicGen.get_pretrained(MUSICGEN_MODEL)
        self._torch = _require("torch", "MusicGen")
        self.name = MUSICGEN_MODEL
        self.version = _version_of(audiocraft)

    def continue_audio(self, prompt: np.ndarray, rate: int, caption: str,
                       seconds: float, seed: int) -> tuple[np.ndarray, int]:
        torch = self._torch
        torch.manual_seed(seed)
        self._model.set_generation_params(duration=seconds + prompt.size / rate,
                                          top_k=250, temperature=1.0)
        batch = torch.from_numpy(prompt).float().reshape(1, 1, -1)
        try:
            wav = self._model.generate_continuation(
                batch, prompt_sample_rate=rate, descriptions=[caption], progress=False
            )
        except Exception as exc:  # surfaced with context by the runner
            raise InferenceError(str(exc)) from exc
        out = wav.squeeze().cpu().numpy()
        out_rate = int(self._model.sample_rate)
        skip = int(prompt.size / rate * out_rate)
        return out[skip:], out_rate


class VggishEngine:
    def __init__(self):
        torchvggish = _require("torchvggish", "VGGish")
        torch = _require("torch", "VGGish")
        self._torch = torch
        self._model = torch.hub.load("harritaylor/torchvggish", "vggish")
        self._model.eval()
        self.name = "vggish"
        self.version = _version_of(torchvggish)

    def extract(self, samples: np.ndarray, rate: int) -> np.ndarray:
        with self._torch.no_grad():
            emb = self._model(samples.astype(np.float64), rate)
        return emb.mean(dim=0).cpu().numpy()


class PasstEngine:
    def __init__(self):
        hear21passt = _require("hear21passt", "PaSST")
        from hear21passt.base import get_basic_model

        self._torch = _require("torch", "PaSST")
        self._model = get_basic_model(mode="logits")
        self._model.eval()
        self.name = "passt"
        self.version = _version_of(hear21passt)

    def extract(self, samples: np.ndarray, rate: int) -> np.ndarray:
        torch = self._torch
        work = _resample_to(samples, rate, 32000)
        with torch.no_grad():
            logits = self._model(torch.from_numpy(work).float().reshape(1, -1))
        return torch.softmax(logits.squeeze(), dim=-1).cpu().numpy()


class PesqEngine:
    def __init__(self):
        pesq_mod = _require("pesq", "PESQ")
        self._pesq = pesq_mod.pesq
        self.name = "pesq-itu"
        self.version = _version_of(pesq_mod)

    def score(self, reference: np.ndarray, degraded: np.ndarray, rate: int) -> float:
        target = 16000 if rate >= 16000 else 8000
        mode = "wb" if target == 16000 else "nb"
        ref = _resample_to(reference, rate, target)
        deg = _resample_to(degraded, rate, target)
        n = min(ref.size, deg.size)
        return float(self._pesq(target, ref[:n], deg[:n], mode))


def resolve_engine(kind: str, params: dict):
    if kind == "audioseal_embed":
        return AudioSealEmbedEngine()
    if kind == "audioseal_detect":
        return AudioSealDetectEngine()
    if kind == "musicgen_continue":
        return MusicGenEngine()
    if kind == "embed_extract":
        return PasstEngine() if params.get("model") == "passt" else VggishEngine()
    if kind == "pesq":
        return PesqEngine()
    raise ValueError(f"no engine for job kind {kind!r}")
