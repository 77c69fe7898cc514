"""Experiment orchestration: corpus marking, model training, attribution runs.

A run trains two n-gram models over codec tokens — one on the original
training split, one on a split where a proportion p of samples carry the
watermark — then generates continuations of watermarked prompts from both and
asks the rule detector which model produced each continuation. AUC over the
labeled continuations is the attribution signal.

All randomness is derived from (manifest seed, task indices) so identical
manifests reproduce byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, AttackSpec, apply_attack, load_wav, prefix, resample, rms, store_wav
from .corpus import DatasetItem, make_corpus
from .detect import (
    CLEAN,
    WATERMARKED,
    DEFAULT_PARAMS,
    DetectorParams,
    ScoredOutput,
    auc,
    best_of_n,
    detection_accuracy,
    matched_score,
    rule_score,
    secret_score,
)
from .errors import BadCsv, ConfigError, EmptyDataset, MissingFile, RateMismatch
from .metrics import fad, si_snr
from .spectral import band_for_frequency
from .toygen import (
    Codebook,
    FeatureParams,
    GenerationConfig,
    decode,
    encode,
    fit_codebook,
    generate_continuation,
    train_ngram,
)
from .watermark import WatermarkSpec, embed, multi_apply

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CONTINUATION_SECONDS = 10.0


@dataclass(frozen=True)
class SplitConfig:
    train_frac: float = 0.8
    test_count: int = 50


@dataclass(frozen=True)
class ModelParams:
    codebook_k: int = 256
    order: int = 3
    smoothing: float = 0.01
    features: FeatureParams = field(default_factory=FeatureParams)


@dataclass(frozen=True)
class GenerationSettings:
    top_k: int = 250
    temperature: float = 1.0


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything that defines a run; hashing it gives the audit identity."""

    dataset_dir: str | None = None  # None = the bundled synthetic corpus
    watermark: WatermarkSpec | None = None
    proportion_p: float = 0.5
    prompt_seconds: float = 5.0
    n_prompts: int = 200
    continuations_per_prompt: int = 1
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    seeds: tuple[int, ...] = (0, 1, 2)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelParams = field(default_factory=ModelParams)
    score_frequency: float = 440.0  # detector target for unwatermarked (null) runs

    def __post_init__(self):
        if not (0 < self.proportion_p <= 1):
            raise ConfigError(f"proportion_p={self.proportion_p} outside (0, 1]")
        if self.n_prompts < 2:
            raise ConfigError("n_prompts must be >= 2")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "dataset_dir": self.dataset_dir,
            "watermark": None if self.watermark is None else json.loads(self.watermark.to_json()),
            "proportion_p": self.proportion_p,
            "prompt_seconds": self.prompt_seconds,
            "n_prompts": self.n_prompts,
            "continuations_per_prompt": self.continuations_per_prompt,
            "generation": {
                "top_k": self.generation.top_k,
                "temperature": self.generation.temperature,
            },
            "seeds": list(self.seeds),
            "split": {"train_frac": self.split.train_frac, "test_count": self.split.test_count},
            "model": {
                "codebook_k": self.model.codebook_k,
                "order": self.model.order,
                "smoothing": self.model.smoothing,
                "features": self.model.features.to_dict(),
            },
            "score_frequency": self.score_frequency,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentManifest":
        if obj.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ConfigError(f"unsupported manifest format_version {obj.get('format_version')}")
        wm = obj.get("watermark")
        model = obj.get("model", {})
        features = model.get("features")
        return cls(
            dataset_dir=obj.get("dataset_dir"),
            watermark=None if wm is None else WatermarkSpec.from_json(json.dumps(wm)),
            proportion_p=obj.get("proportion_p", 0.5),
            prompt_seconds=obj.get("prompt_seconds", 5.0),
            n_prompts=obj.get("n_prompts", 200),
            continuations_per_prompt=obj.get("continuations_per_prompt", 1),
            generation=GenerationSettings(**obj.get("generation", {})),
            seeds=tuple(obj.get("seeds", (0, 1, 2))),
            split=SplitConfig(**obj.get("split", {})),
            model=ModelParams(
                codebook_k=model.get("codebook_k", 256),
                order=model.get("order", 3),
                smoothing=model.get("smoothing", 0.01),
                features=FeatureParams.from_dict(features) if features else FeatureParams(),
            ),
            score_frequency=obj.get("score_frequency", 440.0),
        )

    def save(self, path) -> None:
        Path(path).write_text(canonical_json(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


@dataclass
class RunResult:
    auc: float
    auc_per_seed: list[float]
    manifest_hash: str
    watermark_name: str
    n_outputs: int
    detection_accuracy: float | None = None
    fad_clean: float | None = None
    fad_watermarked: float | None = None
    kld_min: float | None = None
    si_snr_mean: float | None = None
    si_snr_sd: float | None = None

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "auc_per_seed": self.auc_per_seed,
            "manifest_hash": self.manifest_hash,
            "watermark": self.watermark_name,
            "n_outputs": self.n_outputs,
            "detection_accuracy": self.detection_accuracy,
            "fad_clean": self.fad_clean,
            "fad_watermarked": self.fad_watermarked,
            "kld_min": self.kld_min,
            "si_snr_mean": self.si_snr_mean,
            "si_snr_sd": self.si_snr_sd,
        }


@dataclass(frozen=True)
class LabeledAudio:
    id: str
    source_label: str
    prompt_id: str
    replicate: int
    audio: AudioBuffer


@dataclass(frozen=True)
class SweepRow:
    k: int
    detection_accuracy: float
    si_snr_mean: float
    si_snr_sd: float
    pesq: float | None = None


def canonical_json(obj) -> str:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, (np.integer,)):
            return int(x)
        if isinstance(x, (np.floating,)):
            return float(x)
        return x

    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def derive_seed(*entropy: int) -> int:
    """Stable per-task integer seed from a tuple of nonnegative codes."""
    ss = np.random.SeedSequence([int(e) for e in entropy])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _as_items(dataset) -> list[DatasetItem]:
    items = []
    for i, entry in enumerate(dataset):
        if isinstance(entry, DatasetItem):
            items.append(entry)
        else:
            items.append(DatasetItem(id=f"item-{i:04d}", caption="", audio=entry))
    return items


def load_dataset(dataset_dir) -> list[DatasetItem]:
    """Read a dataset directory: dataset.json manifest if present, else all WAVs."""
    root = Path(dataset_dir)
    manifest = root / "dataset.json"
    items = []
    if manifest.exists():
        for rec in json.loads(manifest.read_text()):
            path = root / rec["file"]
            if not path.exists():
                raise MissingFile(f"dataset manifest names missing file {rec['file']!r}")
            items.append(
                DatasetItem(id=rec["id"], caption=rec.get("caption", ""), audio=load_wav(path))
            )
    else:
        for path in sorted(root.glob("*.wav")):
            items.append(DatasetItem(id=path.stem, caption="", audio=load_wav(path)))
    if not items:
        raise EmptyDataset(f"no audio found under {dataset_dir}")
    return items


def prepare_dataset(
    items: list[DatasetItem], target_rate: int = 32000, repeats: int = 1
) -> list[DatasetItem]:
    """Resample to the working rate and optionally tile each clip."""
    from .audio import repeat as repeat_op

    out = []
    for item in items:
        audio = resample(item.audio, target_rate)
        if repeats > 1:
            audio = repeat_op(audio, repeats)
        out.append(DatasetItem(id=item.id, caption=item.caption, audio=audio))
    return out


def watermark_dataset(
    dataset, spec: WatermarkSpec, p: float, seed: int = 0
) -> tuple[list[AudioBuffer], np.ndarray]:
    """Embed the spec into ceil(p*N) uniformly chosen samples; rest untouched.

    Returns the new list and the boolean selection mask for auditing.
    """
    buffers = [it.audio if isinstance(it, DatasetItem) else it for it in dataset]
    if not buffers:
        raise EmptyDataset("cannot watermark an empty dataset")
    if not (0 < p <= 1):
        raise ConfigError(f"proportion p={p} outside (0, 1]")
    n = len(buffers)
    n_marked = math.ceil(p * n)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    chosen = rng.choice(n, size=n_marked, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    out = [embed(buf, spec) if mask[i] else buf for i, buf in enumerate(buffers)]
    return out, mask


def split_dataset(
    n: int, seed: int, split: SplitConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (train, validation, test) index split."""
    if split.test_count >= n:
        raise ConfigError(f"test_count {split.test_count} >= dataset size {n}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 7])))
    perm = rng.permutation(n)
    test = perm[: split.test_count]
    rest = perm[split.test_count :]
    n_train = int(round(split.train_frac * rest.size))
    return np.sort(rest[:n_train]), np.sort(rest[n_train:]), np.sort(test)


def continuation_score(
    audio: AudioBuffer,
    spec: WatermarkSpec | None,
    score_frequency: float = 440.0,
    params: DetectorParams = DEFAULT_PARAMS,
) -> float:
    """Detector matched to a spec, applied to a generated continuation.

    The prompt (first d seconds of the source timeline) is not part of the
    continuation, so switch/alternate score their second frequency from the
    start. Stop rewards absence of the tone: its score is negated presence.
    """
    if spec is None:
        return rule_score(audio, score_frequency, params)
    if spec.kind == "tone":
        return rule_score(audio, spec.f, params)
    if spec.kind in ("switch", "alternate"):
        return secret_score(audio, spec.f, spec.f2, 0.0, params)
    return -rule_score(audio, spec.f, params)


def _validate_spec_bands(spec: WatermarkSpec | None, sample_rate: int,
                         params: DetectorParams) -> None:
    if spec is not None and spec.kind in ("switch", "alternate"):
        fb = params.filterbank(sample_rate)
        if band_for_frequency(fb, spec.f) == band_for_frequency(fb, spec.f2):
            raise ConfigError(
                f"watermark frequencies {spec.f} and {spec.f2} Hz share a mel band; "
                "the secret continuation would be undetectable"
            )


@dataclass
class _SeedRun:
    scored: list[ScoredOutput]
    si_snr_values: list[float]
    fad_clean: float | None
    fad_watermarked: float | None


def _run_seed(
    manifest: ExperimentManifest,
    items: list[DatasetItem],
    seed: int,
    prompt_spec: WatermarkSpec | None,
    scoring_spec: WatermarkSpec | None,
    score_freq: float,
    params: DetectorParams,
    export_dir: Path | None,
    compute_fad: bool,
) -> _SeedRun:
    spec = manifest.watermark
    fp = manifest.model.features
    train_idx, val_idx, test_idx = split_dataset(len(items), seed, manifest.split)
    train = [items[i].audio for i in train_idx]

    si_values: list[float] = []
    if spec is not None:
        marked_train, mask = watermark_dataset(train, spec, manifest.proportion_p,
                                               seed=derive_seed(seed, 1))
        si_values = [si_snr(train[i], marked_train[i]) for i in np.flatnonzero(mask)]
    else:
        marked_train = train

    codebook = fit_codebook(train, manifest.model.codebook_k, fp,
                            seed=derive_seed(seed, 2))
    clean_model = train_ngram([encode(a, codebook) for a in train],
                              order=manifest.model.order,
                              smoothing=manifest.model.smoothing,
                              vocab=codebook.size)
    marked_model = train_ngram([encode(a, codebook) for a in marked_train],
                               order=manifest.model.order,
                               smoothing=manifest.model.smoothing,
                               vocab=codebook.size)

    val_items = [items[i] for i in val_idx]
    usable = [it for it in val_items if rms(it.audio) > 0]
    skipped = len(val_items) - len(usable)
    if skipped:
        log.info("seed %d: excluded %d silent validation sample(s)", seed, skipped)
    if manifest.n_prompts > len(usable):
        log.warning(
            "seed %d: n_prompts=%d exceeds %d usable validation samples; capping",
            seed, manifest.n_prompts, len(usable),
        )
    prompts = usable[: manifest.n_prompts]
    if len(prompts) < 2:
        raise ConfigError(f"seed {seed}: only {len(prompts)} usable prompts")

    length = int(round(CONTINUATION_SECONDS * fp.sample_rate / fp.hop))
    scored: list[ScoredOutput] = []
    conts_by_label: dict[str, list[AudioBuffer]] = {CLEAN: [], WATERMARKED: []}
    exported: list[dict] = []
    for p_idx, item in enumerate(prompts):
        source = embed(item.audio, prompt_spec) if prompt_spec is not None else item.audio
        prompt_tokens = encode(prefix(source, manifest.prompt_seconds), codebook)
        for label, model, role in ((CLEAN, clean_model, 0), (WATERMARKED, marked_model, 1)):
            for rep in range(manifest.continuations_per_prompt):
                cfg = GenerationConfig(
                    length=length,
                    top_k=manifest.generation.top_k,
                    temperature=manifest.generation.temperature,
                    seed=derive_seed(seed, 3, role, p_idx, rep),
                )
                tokens = generate_continuation(model, prompt_tokens, cfg)
                cont = decode(tokens, codebook)
                score = continuation_score(cont, scoring_spec, score_freq, params)
                out_id = f"s{seed}-{label}-{item.id}-r{rep}"
                scored.append(
                    ScoredOutput(id=out_id, source_label=label, score=score,
                                 prompt_id=item.id, replicate=rep)
                )
                if compute_fad:
                    conts_by_label[label].append(cont)
                if export_dir is not None:
                    fname = f"{out_id}.wav"
                    store_wav(cont, export_dir / fname, encoding="float32")
                    exported.append(
                        {"file": fname, "source_label": label,
                         "prompt_id": item.id, "replicate": rep}
                    )

    if export_dir is not None:
        _append_labels_csv(export_dir / "labels.csv", exported)

    fad_clean = fad_marked = None
    if compute_fad:
        test = [items[i].audio for i in test_idx]
        fad_clean = fad(test, conts_by_label[CLEAN])
        fad_marked = fad(test, conts_by_label[WATERMARKED])
    return _SeedRun(scored=scored, si_snr_values=si_values,
                    fad_clean=fad_clean, fad_watermarked=fad_marked)


def _check_lengths(scored_audio_lengths: list[int], hop: int) -> None:
    if scored_audio_lengths and max(scored_audio_lengths) - min(scored_audio_lengths) > hop:
        log.warning(
            "scored audios differ in length by more than one frame (%d..%d samples); "
            "band sums are not length-normalized",
            min(scored_audio_lengths), max(scored_audio_lengths),
        )


def _resolve_dataset(manifest: ExperimentManifest, dataset) -> list[DatasetItem]:
    if dataset is not None:
        items = _as_items(dataset)
    elif manifest.dataset_dir is not None:
        items = load_dataset(manifest.dataset_dir)
    else:
        items = make_corpus()
    fp = manifest.model.features
    rate = items[0].audio.sample_rate
    if any(it.audio.sample_rate != rate for it in items):
        raise RateMismatch("dataset mixes sample rates")
    if rate != fp.sample_rate:
        log.info("resampling dataset %d -> %d Hz", rate, fp.sample_rate)
        items = prepare_dataset(items, target_rate=fp.sample_rate)
    return items


def run_attribution(
    manifest: ExperimentManifest,
    dataset=None,
    *,
    prompt_watermark: WatermarkSpec | None = None,
    score_frequency: float | None = None,
    params: DetectorParams = DEFAULT_PARAMS,
    export_dir=None,
    compute_fad: bool = True,
    jobs: int = 1,
) -> tuple[RunResult, list[ScoredOutput]]:
    """Full clean-vs-watermarked attribution experiment over all manifest seeds.

    `prompt_watermark` overrides the spec applied to prompts (for
    mismatched-frequency checks); `score_frequency` overrides the detector
    band when scoring plain tones or null runs. Seeds run in parallel when
    jobs > 1; results are identical either way.
    """
    items = _resolve_dataset(manifest, dataset)
    spec = manifest.watermark
    prompt_spec = prompt_watermark if prompt_watermark is not None else spec
    if score_frequency is not None:
        # Explicit detector band: score plain presence there (the
        # mismatched-frequency experiment trains at f, probes at f2).
        scoring_spec, score_freq = None, score_frequency
    else:
        scoring_spec, score_freq = spec, manifest.score_frequency
    _validate_spec_bands(manifest.watermark, manifest.model.features.sample_rate, params)
    _validate_spec_bands(prompt_spec, manifest.model.features.sample_rate, params)

    export_root = Path(export_dir) if export_dir is not None else None
    if export_root is not None:
        export_root.mkdir(parents=True, exist_ok=True)
        (export_root / "labels.csv").unlink(missing_ok=True)

    def run_one(seed: int) -> _SeedRun:
        return _run_seed(manifest, items, seed, prompt_spec, scoring_spec, score_freq,
                         params, export_root, compute_fad)

    if jobs > 1 and len(manifest.seeds) > 1 and export_root is None:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(run_one, manifest.seeds))
    else:
        per_seed = [run_one(seed) for seed in manifest.seeds]

    all_scored = [s for run in per_seed for s in run.scored]
    aucs = [auc(run.scored) for run in per_seed]
    clean_scores = [s.score for s in all_scored if s.source_label == CLEAN]
    threshold = float(np.percentile(clean_scores, 95, method="higher"))
    acc = detection_accuracy(all_scored, threshold)

    si_all = [v for run in per_seed for v in run.si_snr_values if math.isfinite(v)]
    fad_clean_vals = [r.fad_clean for r in per_seed if r.fad_clean is not None]
    fad_marked_vals = [r.fad_watermarked for r in per_seed if r.fad_watermarked is not None]

    result = RunResult(
        auc=float(np.mean(aucs)),
        auc_per_seed=[float(a) for a in aucs],
        manifest_hash=manifest.hash,
        watermark_name="none" if manifest.watermark is None
        else f"{manifest.watermark.kind}:{manifest.watermark.f:g}",
        n_outputs=len(all_scored),
        detection_accuracy=float(acc),
        fad_clean=float(np.mean(fad_clean_vals)) if fad_clean_vals else None,
        fad_watermarked=float(np.mean(fad_marked_vals)) if fad_marked_vals else None,
        si_snr_mean=float(np.mean(si_all)) if si_all else None,
        si_snr_sd=float(np.std(si_all)) if si_all else None,
    )
    return result, all_scored


def run_best_of_n(
    manifest: ExperimentManifest,
    dataset=None,
    *,
    params: DetectorParams = DEFAULT_PARAMS,
) -> list[dict]:
    """AUC as a function of how many continuations per prompt the detector may
    take the maximum over. Returns rows {n_used, auc, auc_per_seed}."""
    if manifest.continuations_per_prompt < 1:
        raise ConfigError("continuations_per_prompt must be >= 1")
    items = _resolve_dataset(manifest, dataset)
    _validate_spec_bands(manifest.watermark, manifest.model.features.sample_rate, params)
    runs = [
        _run_seed(manifest, items, seed, manifest.watermark, manifest.watermark,
                  manifest.score_frequency, params, None, False)
        for seed in manifest.seeds
    ]
    n_max = manifest.continuations_per_prompt
    rows = []
    for n_used in range(1, n_max + 1):
        per_seed_auc = []
        for run in runs:
            groups: dict[tuple[str, str], list[float]] = {}
            for s in run.scored:
                if s.replicate < n_used:
                    groups.setdefault((s.prompt_id, s.source_label), []).append(s.score)
            maxima = best_of_n({f"{p}|{lbl}": v for (p, lbl), v in groups.items()})
            reduced = [
                ScoredOutput(id=key, source_label=key.split("|")[1], score=val,
                             prompt_id=key.split("|")[0])
                for key, val in maxima.items()
            ]
            per_seed_auc.append(auc(reduced))
        rows.append(
            {"n_used": n_used, "auc": float(np.mean(per_seed_auc)),
             "auc_per_seed": [float(a) for a in per_seed_auc]}
        )
    return rows


def run_robustness_sweep(
    dataset,
    embedder,
    k_values,
    attack: AttackSpec | None = None,
    *,
    codebook: Codebook | None = None,
    channel: str = "codec",
    model: ModelParams = ModelParams(),
    params: DetectorParams = DEFAULT_PARAMS,
    seed: int = 0,
) -> list[SweepRow]:
    """Detection accuracy and imperceptibility across repeated embedding.

    The channel between embedding and detection is the codec round-trip by
    default, an AttackSpec when given, or "identity" for a null channel. The
    detection threshold is the 95th percentile of clean scores through the
    same channel.
    """
    items = _as_items(dataset)
    if not items:
        raise EmptyDataset("sweep needs a dataset")
    if not list(k_values):
        raise ConfigError("k_values must be nonempty")
    buffers = [it.audio for it in items]
    spec = embedder.spec

    if attack is not None:
        send = lambda a: apply_attack(a, attack)
    elif channel == "identity":
        send = lambda a: a
    elif channel == "codec":
        cb = codebook or fit_codebook(buffers, model.codebook_k, model.features, seed=seed)
        send = lambda a: decode(encode(a, cb), cb)
    else:
        raise ConfigError(f"unknown channel {channel!r}")

    def score(a: AudioBuffer) -> float:
        return matched_score(a, spec, params)

    clean_scores = [score(send(a)) for a in buffers]
    # "higher" order statistic: a fully separated marked set can then reach
    # accuracy 1.0 while the clean side stays >= 95% correct
    threshold = float(np.percentile(clean_scores, 95, method="higher"))

    rows = []
    for k in k_values:
        marked = [multi_apply(embedder, a, int(k)) for a in buffers]
        si_values = [si_snr(a, m) for a, m in zip(buffers, marked)]
        finite = [v for v in si_values if math.isfinite(v)]
        scored = [
            ScoredOutput(id=f"clean-{i}", source_label=CLEAN, score=s)
            for i, s in enumerate(clean_scores)
        ] + [
            ScoredOutput(id=f"wm-{i}", source_label=WATERMARKED, score=score(send(m)))
            for i, m in enumerate(marked)
        ]
        rows.append(
            SweepRow(
                k=int(k),
                detection_accuracy=detection_accuracy(scored, threshold),
                si_snr_mean=float(np.mean(finite)) if finite else math.inf,
                si_snr_sd=float(np.std(finite)) if finite else 0.0,
            )
        )
    return rows


def _append_labels_csv(path: Path, rows: list[dict]) -> None:
    exists = path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file", "source_label", "prompt_id", "replicate"])
        if not exists:
            writer.writeheader()
        writer.writerows(rows)


def ingest_external_outputs(directory, labels_csv) -> list[LabeledAudio]:
    """Load adapter-produced WAVs plus their labels CSV for detector scoring.

    The CSV needs columns file, source_label, prompt_id, replicate; files are
    resolved relative to `directory`.
    """
    directory = Path(directory)
    try:
        with open(labels_csv, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"file", "source_label", "prompt_id", "replicate"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise BadCsv(f"{labels_csv}: need columns {sorted(required)}")
            rows = list(reader)
    except OSError as exc:
        raise BadCsv(f"cannot read {labels_csv}: {exc}") from exc
    if not rows:
        raise BadCsv(f"{labels_csv}: no data rows")

    out = []
    for i, row in enumerate(rows, start=1):
        label = row["source_label"].strip().lower()
        if label not in (CLEAN, WATERMARKED):
            raise BadCsv(f"{labels_csv} row {i}: bad source_label {row['source_label']!r}")
        path = directory / row["file"]
        if not path.exists():
            raise MissingFile(f"{labels_csv} row {i}: missing file {row['file']!r}")
        try:
            replicate = int(row["replicate"])
        except ValueError:
            raise BadCsv(f"{labels_csv} row {i}: bad replicate {row['replicate']!r}") from None
        out.append(
            LabeledAudio(id=row["file"], source_label=label, prompt_id=row["prompt_id"],
                         replicate=replicate, audio=load_wav(path))
        )
    _check_lengths([len(item.audio) for item in out], DEFAULT_PARAMS.hop)
    return out


def score_labeled(
    labeled: list[LabeledAudio],
    spec: WatermarkSpec | None,
    score_frequency: float = 440.0,
    params: DetectorParams = DEFAULT_PARAMS,
) -> list[ScoredOutput]:
    """Continuation-score a set of ingested outputs."""
    return [
        ScoredOutput(
            id=item.id,
            source_label=item.source_label,
            score=continuation_score(item.audio, spec, score_frequency, params),
            prompt_id=item.prompt_id,
            replicate=item.replicate,
        )
        for item in labeled
    ]


def merge_pesq_csv(path) -> dict[str, float]:
    """Adapter-computed PESQ values, keyed by file name."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"file", "pesq"}.issubset(reader.fieldnames):
            raise BadCsv(f"{path}: need columns ['file', 'pesq']")
        return {row["file"]: float(row["pesq"]) for row in reader}


def scores_to_csv(scored: list[ScoredOutput], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "prompt_id", "replicate", "source_label", "score"])
        for s in scored:
            writer.writerow([s.id, s.prompt_id, s.replicate, s.source_label, repr(s.score)])


def _fmt(value, digits=4) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def summary_markdown(result: RunResult, n_seeds: int, pesq: float | None = None) -> str:
    """Table-style summary: Watermark, AUC, PESQ, SI-SNR, FAD, KLD."""
    if n_seeds > 1:
        sd = float(np.std(result.auc_per_seed))
        auc_cell = f"{result.auc:.4f} ± {sd:.4f}"
    else:
        auc_cell = f"{result.auc:.4f}"
    if result.si_snr_mean is None:
        si_cell = "n/a"
    elif n_seeds > 1 or result.si_snr_sd:
        si_cell = f"{_fmt(result.si_snr_mean, 2)} ± {_fmt(result.si_snr_sd, 2)}"
    else:
        si_cell = _fmt(result.si_snr_mean, 2)
    fad_value = result.fad_watermarked if result.watermark_name != "none" else result.fad_clean
    lines = [
        "| Watermark | AUC | PESQ | SI-SNR | FAD | KLD |",
        "| --- | --- | --- | --- | --- | --- |",
        f"| {result.watermark_name} | {auc_cell} | {_fmt(pesq, 2)} | {si_cell} "
        f"| {_fmt(fad_value)} | {_fmt(result.kld_min)} |",
    ]
    return "\n".join(lines) + "\n"


def write_run_outputs(out_dir, manifest: ExperimentManifest, result: RunResult,
                      scored: list[ScoredOutput], pesq: float | None = None) -> None:
    """results.json + scores.csv + summary.md, deterministically."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(canonical_json(result.to_dict()))
    scores_to_csv(scored, out / "scores.csv")
    (out / "summary.md").write_text(summary_markdown(result, len(manifest.seeds), pesq))


def report(results, fmt: str, path) -> None:
    """Render a result or sweep table as csv, json, or markdown."""
    path = Path(path)
    if isinstance(results, RunResult):
        payload = results.to_dict()
        rows = [payload]
    elif results and isinstance(results[0], SweepRow):
        rows = [
            {"k": r.k, "detection_accuracy": r.detection_accuracy,
             "si_snr_mean": r.si_snr_mean, "si_snr_sd": r.si_snr_sd, "pesq": r.pesq}
            for r in results
        ]
        payload = rows
    else:
        rows = list(results)
        payload = rows

    if fmt == "json":
        path.write_text(canonical_json(payload))
    elif fmt == "csv":
        keys = list(rows[0].keys())
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=keys)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if row[k] is None else row[k]) for k in keys})
    elif fmt == "markdown":
        keys = list(rows[0].keys())
        lines = ["| " + " | ".join(keys) + " |", "| " + " | ".join("---" for _ in keys) + " |"]
        for row in rows:
            lines.append("| " + " | ".join(_fmt(row[k]) if isinstance(row[k], float) or row[k] is None
                                           else str(row[k]) for k in keys) + " |")
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
