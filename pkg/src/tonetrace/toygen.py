"""Desk-scale generative stand-in: a quantizing mel codec plus an n-gram sampler.

The codec maps audio to discrete tokens (nearest log-mel centroid per frame)
and synthesizes audio back from token centroids; weak additive marks die in
the quantizer while strong ones move frames across centroid boundaries and
survive. The n-gram model memorizes token transitions, which is exactly the
behaviour the attribution experiment probes. None of this pretends to match a
real neural codec or transformer; it is an auditable proxy.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer
from .errors import (
    EmptyCorpus,
    InvalidToken,
    PromptTooShort,
    RateMismatch,
    TooFewFrames,
)
from .spectral import cached_filterbank, stft_power

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureParams:
    """Framing used by the codec: non-overlapping frames keep tokens independent."""

    n_mels: int = 128
    n_fft: int = 2048
    hop: int = 2048
    sample_rate: int = 32000

    def to_dict(self) -> dict:
        return {
            "n_mels": self.n_mels,
            "n_fft": self.n_fft,
            "hop": self.hop,
            "sample_rate": self.sample_rate,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureParams":
        return cls(**{k: int(v) for k, v in obj.items()})


def frame_features(audio: AudioBuffer, params: FeatureParams) -> np.ndarray:
    """log(1 + mel power) per frame; the codec's feature space."""
    if audio.sample_rate != params.sample_rate:
        raise RateMismatch(
            f"codec built for {params.sample_rate} Hz, audio is {audio.sample_rate} Hz"
        )
    fb = cached_filterbank(
        params.n_mels, params.n_fft, params.sample_rate, 0.0, params.sample_rate / 2.0
    )
    power = stft_power(audio, params.n_fft, params.hop)
    return np.log1p(power @ fb.weights.T)


@dataclass(frozen=True, eq=False)
class Codebook:
    """K centroids in log-mel feature space plus the framing they were fit with."""

    centroids: np.ndarray  # (K, n_mels)
    feature_params: FeatureParams

    @property
    def size(self) -> int:
        return self.centroids.shape[0]


def _pairwise_sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * (x @ c.T) + np.sum(c * c, axis=1)[None, :]
    return np.maximum(d, 0.0)


def fit_codebook(
    corpus,
    k: int,
    feature_params: FeatureParams = FeatureParams(),
    seed: int = 0,
    iterations: int = 25,
) -> Codebook:
    """K-means (k-means++ init, fixed Lloyd iterations) over corpus frames.

    Deterministic under seed; empty clusters are re-seeded to the frame
    farthest from its centroid.
    """
    feats = [frame_features(a, feature_params) for a in corpus]
    if not feats:
        raise EmptyCorpus("no audio to fit a codebook on")
    x = np.vstack(feats)
    n = x.shape[0]
    if n < k:
        raise TooFewFrames(f"{n} frames < K={k}")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
        else:
            centroids[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))

    for _ in range(iterations):
        dist = _pairwise_sq_dist(x, centroids)
        assign = dist.argmin(axis=1)
        nearest = dist[np.arange(n), assign]
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                centroids[j] = x[nearest.argmax()]
    return Codebook(centroids=centroids, feature_params=feature_params)


def encode(audio: AudioBuffer, cb: Codebook) -> np.ndarray:
    """Nearest-centroid token per frame (ties resolve to the lower index)."""
    feats = frame_features(audio, cb.feature_params)
    return _pairwise_sq_dist(feats, cb.centroids).argmin(axis=1).astype(np.int64)


def _synthesis_bins(params: FeatureParams) -> np.ndarray:
    """One FFT bin per mel band: the bin nearest the band center.

    Bin frequencies complete whole cycles per n_fft samples, so with
    non-overlapping frames every synthesized segment is phase-identical and a
    token always analyzes to the same feature vector.
    """
    fb = cached_filterbank(
        params.n_mels, params.n_fft, params.sample_rate, 0.0, params.sample_rate / 2.0
    )
    bins = np.round(fb.band_centers_hz * params.n_fft / params.sample_rate).astype(int)
    bins = np.clip(bins, 1, params.n_fft // 2)
    if np.unique(bins).size != bins.size:
        raise ValueError("mel bands too dense for distinct synthesis bins; raise n_fft")
    return bins


def _waveform_bank(cb: Codebook, iterations: int = 6) -> np.ndarray:
    """One n_fft-sample waveform per token.

    Amplitudes start from a single-tone calibration and are refined by a
    multiplicative fixed point against the actual mel analysis, so the
    analyzed feature of each waveform lands back on its centroid.
    """
    params = cb.feature_params
    fb = cached_filterbank(
        params.n_mels, params.n_fft, params.sample_rate, 0.0, params.sample_rate / 2.0
    )
    bins = _synthesis_bins(params)
    n = np.arange(params.n_fft)
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / params.n_fft)
    # alternate quadrature phases: adjacent-bin tones then have zero power
    # cross-term under the (real-spectrum) Hann window, so band powers add
    phases = (np.pi / 2.0) * (np.arange(params.n_mels) % 2)
    cosines = np.cos(2.0 * np.pi * np.outer(bins, n) / params.n_fft + phases[:, None])

    # single-tone response of band b to its own unit-amplitude synthesis tone
    spec_single = np.abs(np.fft.rfft(cosines * window, axis=1)) ** 2
    own = np.einsum("bk,bk->b", spec_single, fb.weights)

    targets = np.maximum(np.expm1(cb.centroids), 0.0)  # (K, n_mels) power targets
    power = targets / np.maximum(own, 1e-300)
    for _ in range(iterations):
        waves = np.sqrt(power) @ cosines
        spec = np.abs(np.fft.rfft(waves * window, axis=1)) ** 2
        measured = spec @ fb.weights.T
        scale = np.divide(targets, measured, out=np.zeros_like(targets), where=measured > 0)
        power *= scale
    return np.sqrt(power) @ cosines


def decode(tokens, cb: Codebook) -> AudioBuffer:
    """Synthesize audio from tokens: per token a bank of sinusoids near the
    mel band centers carrying the centroid's expm1 band powers, placed at the
    hop length."""
    tokens = np.asarray(tokens, dtype=np.int64)
    params = cb.feature_params
    if tokens.size == 0:
        return AudioBuffer(samples=np.zeros(0), sample_rate=params.sample_rate)
    if tokens.min() < 0 or tokens.max() >= cb.size:
        bad = tokens[(tokens < 0) | (tokens >= cb.size)][0]
        raise InvalidToken(f"token {bad} outside [0, {cb.size})")

    bank = getattr(cb, "_bank", None)
    if bank is None:
        bank = _waveform_bank(cb)
        object.__setattr__(cb, "_bank", bank)

    n_fft, hop = params.n_fft, params.hop
    segments = bank[tokens]
    if hop == n_fft:
        out = segments.reshape(-1)
    else:
        total = (tokens.size - 1) * hop + n_fft
        out = np.zeros(total)
        weight = np.zeros(total)
        for i in range(tokens.size):
            out[i * hop : i * hop + n_fft] += segments[i]
            weight[i * hop : i * hop + n_fft] += 1.0
        out /= np.maximum(weight, 1.0)
    return AudioBuffer(samples=out, sample_rate=params.sample_rate)


@dataclass
class NGramModel:
    """Context -> next-token count tables with add-alpha smoothing at sample time.

    `counts` holds the full-order tables; `lower_counts[L]` holds the tables
    for context length L (0 = unigram). Sampling backs off to the longest
    context that was seen in training, so generation does not degenerate to
    uniform noise after one unseen window.
    """

    order: int
    vocab: int
    smoothing: float
    counts: dict = field(default_factory=dict)
    lower_counts: dict = field(default_factory=dict)

    def _table(self, context: tuple) -> dict | None:
        if len(context) == self.order - 1:
            return self.counts.get(context)
        return self.lower_counts.get(len(context), {}).get(context)

    def distribution(self, context) -> np.ndarray:
        context = tuple(int(t) for t in context)[max(0, len(context) - self.order + 1):]
        table = self._table(context)
        while table is None and context:
            context = context[1:]
            table = self._table(context)
        probs = np.full(self.vocab, self.smoothing, dtype=np.float64)
        for token, count in (table or {}).items():
            probs[token] += count
        total = probs.sum()
        if total <= 0:  # smoothing 0 and nothing seen anywhere
            return np.full(self.vocab, 1.0 / self.vocab)
        return probs / total


@dataclass(frozen=True)
class GenerationConfig:
    """Sampling knobs; temperature 0 is the greedy (argmax) limit."""

    length: int
    top_k: int = 250
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.length < 0:
            raise ValueError("length must be >= 0")


def train_ngram(token_corpus, order: int = 3, smoothing: float = 0.01,
                vocab: int | None = None) -> NGramModel:
    """Tally context -> next-token counts over every sliding window.

    Lower-order (backoff) tables are tallied from the same windows.
    """
    sequences = [np.asarray(seq, dtype=np.int64) for seq in token_corpus]
    if not sequences:
        raise EmptyCorpus("no token sequences")
    if vocab is None:
        vocab = int(max(seq.max() for seq in sequences if seq.size)) + 1
    model = NGramModel(order=order, vocab=vocab, smoothing=smoothing)
    model.lower_counts = {length: {} for length in range(order - 1)}
    ctx_len = order - 1
    for seq in sequences:
        tokens = [int(t) for t in seq]
        for i in range(len(tokens) - ctx_len):
            context = tuple(tokens[i : i + ctx_len])
            nxt = tokens[i + ctx_len]
            table = model.counts.setdefault(context, {})
            table[nxt] = table.get(nxt, 0) + 1
            for length in range(ctx_len):
                sub = context[ctx_len - length :]
                table = model.lower_counts[length].setdefault(sub, {})
                table[nxt] = table.get(nxt, 0) + 1
    return model


def generate_continuation(
    model: NGramModel, prompt_tokens, config: GenerationConfig
) -> np.ndarray:
    """Sample `config.length` tokens autoregressively after the prompt.

    Top-k restriction first, then temperature reweighting (p ** (1/T),
    renormalized); temperature 0 takes the argmax.
    """
    prompt = list(int(t) for t in prompt_tokens)
    ctx_len = model.order - 1
    if len(prompt) < ctx_len:
        raise PromptTooShort(f"prompt has {len(prompt)} tokens, need >= {ctx_len}")
    top_k = config.top_k
    if top_k > model.vocab:
        log.warning("top_k=%d exceeds vocabulary %d; capping", top_k, model.vocab)
        top_k = model.vocab

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    history = prompt[:]
    out = np.empty(config.length, dtype=np.int64)
    for i in range(config.length):
        probs = model.distribution(history[len(history) - ctx_len :]) if ctx_len else \
            model.distribution(())
        order_idx = np.argsort(-probs, kind="stable")[:top_k]
        weights = probs[order_idx]
        if config.temperature == 0.0:
            token = int(order_idx[0])
        else:
            weights = weights ** (1.0 / config.temperature)
            weights /= weights.sum()
            token = int(order_idx[rng.choice(order_idx.size, p=weights)])
        out[i] = token
        history.append(token)
    return out


def _write_container(path, header: dict, arrays: dict) -> None:
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(buf.getvalue())


def _read_container(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = np.load(io.BytesIO(fh.read()))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {header.get('format_version')}")
    return header, payload


def save_codebook(cb: Codebook, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "type": "codebook",
        "K": cb.size,
        "feature_params": cb.feature_params.to_dict(),
    }
    _write_container(path, header, {"centroids": cb.centroids})


def load_codebook(path) -> Codebook:
    header, payload = _read_container(path)
    if header.get("type") != "codebook":
        raise ValueError(f"not a codebook file: type={header.get('type')!r}")
    return Codebook(
        centroids=payload["centroids"],
        feature_params=FeatureParams.from_dict(header["feature_params"]),
    )


def _pack_tables(tables: dict, ctx_len: int) -> dict:
    contexts = np.array(sorted(tables), dtype=np.int64).reshape(len(tables), ctx_len)
    offsets = [0]
    tokens, counts = [], []
    for ctx in map(tuple, contexts):
        table = tables[ctx]
        for token in sorted(table):
            tokens.append(token)
            counts.append(table[token])
        offsets.append(len(tokens))
    return {
        "ctx": contexts,
        "off": np.array(offsets, dtype=np.int64),
        "tok": np.array(tokens, dtype=np.int64),
        "cnt": np.array(counts, dtype=np.int64),
    }


def _unpack_tables(arrays: dict) -> dict:
    out = {}
    contexts, offsets = arrays["ctx"], arrays["off"]
    tokens, counts = arrays["tok"], arrays["cnt"]
    for row in range(contexts.shape[0]):
        table = {}
        for j in range(offsets[row], offsets[row + 1]):
            table[int(tokens[j])] = int(counts[j])
        out[tuple(int(t) for t in contexts[row])] = table
    return out


def save_ngram(model: NGramModel, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "type": "ngram",
        "K": model.vocab,
        "order": model.order,
        "smoothing": model.smoothing,
    }
    arrays = {}
    for name, packed in [("full", _pack_tables(model.counts, model.order - 1))] + [
        (f"L{length}", _pack_tables(tables, length))
        for length, tables in sorted(model.lower_counts.items())
    ]:
        for key, value in packed.items():
            arrays[f"{name}_{key}"] = value
    _write_container(path, header, arrays)


def load_ngram(path) -> NGramModel:
    header, payload = _read_container(path)
    if header.get("type") != "ngram":
        raise ValueError(f"not an ngram file: type={header.get('type')!r}")
    model = NGramModel(
        order=int(header["order"]),
        vocab=int(header["K"]),
        smoothing=float(header["smoothing"]),
    )
    groups: dict[str, dict] = {}
    for key in payload.files:
        name, field_name = key.rsplit("_", 1)
        groups.setdefault(name, {})[field_name] = payload[key]
    model.counts = _unpack_tables(groups["full"])
    model.lower_counts = {
        int(name[1:]): _unpack_tables(arrays)
        for name, arrays in groups.items()
        if name.startswith("L")
    }
    return model
