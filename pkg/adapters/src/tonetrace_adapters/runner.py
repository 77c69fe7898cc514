"""Execute adapter jobs and write harness-format outputs.

Output contracts (what the harness ingests):
  audioseal_embed     -> watermarked WAVs mirroring input names
  audioseal_detect    -> scores.csv with columns file, score
  musicgen_continue   -> continuation WAVs + labels.csv with columns
                         file, source_label, prompt_id, replicate
  embed_extract       -> embeddings.csv with columns file, e0..e{d-1}
  pesq                -> pesq.csv with columns file, pesq
Every job also stamps provenance.json ({model_name, version, checksum})
beside its outputs; the checksum digests the produced files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .engines import resolve_engine
from .jobs import AdapterJob, InferenceError
from .wavio import read_wav, write_wav


def _stamp_provenance(out_dir: Path, name: str, version: str, files: list[Path]) -> Path:
    digest = hashlib.sha256()
    for path in sorted(files):
        digest.update(path.name.encode())
        digest.update(hashlib.sha256(path.read_bytes()).digest())
    payload = {"model_name": name, "version": version, "checksum": digest.hexdigest()}
    prov = out_dir / "provenance.json"
    prov.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return prov


def _load_captions(job: AdapterJob) -> dict[str, str]:
    if not job.manifest:
        return {}
    records = json.loads(Path(job.manifest).read_text())
    return {rec["file"]: rec.get("caption", "") for rec in records}


def _run_audioseal_embed(job: AdapterJob, engine, out_dir: Path) -> list[Path]:
    times = job.params.get("times", 1)
    written = []
    for path in job.input_wavs():
        samples, rate = read_wav(path)
        try:
            for _ in range(times):
                samples = engine.embed(samples, rate)
        except InferenceError as exc:
            raise InferenceError(f"{path.name}: {exc}") from exc
        out_path = out_dir / path.name
        write_wav(out_path, samples, rate)
        written.append(out_path)
    return written


def _run_audioseal_detect(job: AdapterJob, engine, out_dir: Path) -> list[Path]:
    rows = []
    for path in job.input_wavs():
        samples, rate = read_wav(path)
        try:
            rows.append({"file": path.name, "score": engine.score(samples, rate)})
        except InferenceError as exc:
            raise InferenceError(f"{path.name}: {exc}") from exc
    out_path = out_dir / "scores.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file", "score"])
        writer.writeheader()
        writer.writerows(rows)
    return [out_path]


def _run_musicgen_continue(job: AdapterJob, engine, out_dir: Path) -> list[Path]:
    captions = _load_captions(job)
    prompt_seconds = float(job.params.get("prompt_seconds", 5.0))
    seconds = float(job.params.get("seconds", 10.0))
    replicates = int(job.params.get("replicates", 1))
    label = job.params.get("source_label", "clean")
    written = []
    rows = []
    for path in job.input_wavs():
        samples, rate = read_wav(path)
        prompt = samples[: int(prompt_seconds * rate)]
        for rep in range(replicates):
            try:
                cont, cont_rate = engine.continue_audio(
                    prompt, rate, captions.get(path.name, ""), seconds,
                    seed=job.params.get("seed", 0) * 1000 + rep,
                )
            except InferenceError as exc:
                raise InferenceError(f"{path.name} (replicate {rep}): {exc}") from exc
            fname = f"{path.stem}-{label}-r{rep}.wav"
            write_wav(out_dir / fname, cont, cont_rate)
            written.append(out_dir / fname)
            rows.append(
                {"file": fname, "source_label": label, "prompt_id": path.stem,
                 "replicate": rep}
            )
    labels_path = out_dir / "labels.csv"
    with open(labels_path, "a" if labels_path.exists() else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file", "source_label", "prompt_id", "replicate"])
        if fh.tell() == 0:
            writer.writeheader()
        writer.writerows(rows)
    return written + [labels_path]


def _run_embed_extract(job: AdapterJob, engine, out_dir: Path) -> list[Path]:
    rows = []
    dim = None
    for path in job.input_wavs():
        samples, rate = read_wav(path)
        vector = np.asarray(engine.extract(samples, rate), dtype=np.float64)
        if dim is None:
            dim = vector.size
        elif vector.size != dim:
            raise InferenceError(f"{path.name}: embedding dim {vector.size} != {dim}")
        rows.append([path.name] + [repr(float(v)) for v in vector])
    out_path = out_dir / "embeddings.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file"] + [f"e{i}" for i in range(dim or 0)])
        writer.writerows(rows)
    return [out_path]


def _run_pesq(job: AdapterJob, engine, out_dir: Path) -> list[Path]:
    with open(job.manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"file", "reference"}.issubset(reader.fieldnames):
            raise ValueError(f"{job.manifest}: need columns ['file', 'reference']")
        pairs = list(reader)
    rows = []
    in_dir = Path(job.in_dir)
    for pair in pairs:
        deg, rate = read_wav(in_dir / pair["file"])
        ref, ref_rate = read_wav(pair["reference"])
        if ref_rate != rate:
            raise InferenceError(f"{pair['file']}: rate {rate} != reference {ref_rate}")
        rows.append({"file": pair["file"], "pesq": engine.score(ref, deg, rate)})
    out_path = out_dir / "pesq.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["file", "pesq"])
        writer.writeheader()
        writer.writerows(rows)
    return [out_path]


_RUNNERS = {
    "audioseal_embed": _run_audioseal_embed,
    "audioseal_detect": _run_audioseal_detect,
    "musicgen_continue": _run_musicgen_continue,
    "embed_extract": _run_embed_extract,
    "pesq": _run_pesq,
}


def run_adapter(job: AdapterJob, engine=None) -> list[Path]:
    """Run one job; returns the written files (provenance last).

    `engine` overrides model resolution, which keeps the file plumbing
    testable without any neural dependency installed.
    """
    if engine is None:
        engine = resolve_engine(job.kind, job.params)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = _RUNNERS[job.kind](job, engine, out_dir)
    prov = _stamp_provenance(out_dir, engine.name, engine.version, written)
    return written + [prov]
