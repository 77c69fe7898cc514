"""Format conformance with injected fake engines: the files an adapter writes
must match the harness ingest contracts byte-for-column."""

import csv
import hashlib
import json

import numpy as np
import pytest

from tonetrace_adapters.jobs import AdapterJob, ModelUnavailable
from tonetrace_adapters.runner import run_adapter
from tonetrace_adapters.wavio import read_wav, write_wav


class FakeEmbed:
    name = "fake-embed"
    version = "0"

    def embed(self, samples, rate):
        return samples + 0.01


class FakeDetect:
    name = "fake-detect"
    version = "0"

    def score(self, samples, rate):
        return float(np.mean(np.abs(samples)))


class FakeContinue:
    name = "fake-musicgen"
    version = "0"

    def continue_audio(self, prompt, rate, caption, seconds, seed):
        rng = np.random.default_rng(seed)
        return rng.normal(size=int(seconds * rate)).astype(np.float32) * 0.1, rate


class FakeExtract:
    name = "fake-extractor"
    version = "0"

    def extract(self, samples, rate):
        return np.array([samples.mean(), samples.std(), float(rate)])


class FakePesq:
    name = "fake-pesq"
    version = "0"

    def score(self, reference, degraded, rate):
        return 4.5 if np.array_equal(reference, degraded) else 2.0


@pytest.fixture
def in_dir(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    rng = np.random.default_rng(1)
    for i in range(3):
        write_wav(src / f"clip{i}.wav", rng.normal(size=16000).astype(np.float32) * 0.1, 16000)
    return src


def read_provenance(out_dir):
    payload = json.loads((out_dir / "provenance.json").read_text())
    assert set(payload) == {"model_name", "version", "checksum"}
    return payload


class TestEmbedJob:
    def test_writes_marked_wavs_and_provenance(self, tmp_path, in_dir):
        out = tmp_path / "out"
        job = AdapterJob(kind="audioseal_embed", in_dir=str(in_dir), out_dir=str(out),
                         params={"times": 2})
        written = run_adapter(job, engine=FakeEmbed())
        names = {p.name for p in written}
        assert {"clip0.wav", "clip1.wav", "clip2.wav", "provenance.json"} == names
        original, _ = read_wav(in_dir / "clip0.wav")
        marked, rate = read_wav(out / "clip0.wav")
        assert rate == 16000
        assert np.allclose(marked - original, 0.02, atol=1e-6)  # two applications
        assert read_provenance(out)["model_name"] == "fake-embed"

    def test_never_touches_inputs(self, tmp_path, in_dir):
        before = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                  for p in in_dir.iterdir()}
        job = AdapterJob(kind="audioseal_embed", in_dir=str(in_dir),
                         out_dir=str(tmp_path / "out"))
        run_adapter(job, engine=FakeEmbed())
        after = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                 for p in in_dir.iterdir()}
        assert before == after


class TestDetectJob:
    def test_scores_csv_schema(self, tmp_path, in_dir):
        out = tmp_path / "out"
        job = AdapterJob(kind="audioseal_detect", in_dir=str(in_dir), out_dir=str(out))
        run_adapter(job, engine=FakeDetect())
        with open(out / "scores.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["file"] for r in rows] == ["clip0.wav", "clip1.wav", "clip2.wav"]
        assert all(float(r["score"]) > 0 for r in rows)


class TestContinueJob:
    def test_labels_csv_matches_ingest_contract(self, tmp_path, in_dir):
        out = tmp_path / "out"
        manifest = tmp_path / "dataset.json"
        manifest.write_text(json.dumps(
            [{"file": f"clip{i}.wav", "caption": f"c{i}", "id": f"clip{i}"} for i in range(3)]
        ))
        for label in ("clean", "watermarked"):
            job = AdapterJob(
                kind="musicgen_continue", in_dir=str(in_dir), out_dir=str(out),
                manifest=str(manifest),
                params={"source_label": label, "prompt_seconds": 0.5,
                        "seconds": 1.0, "replicates": 2},
            )
            run_adapter(job, engine=FakeContinue())
        with open(out / "labels.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == ["file", "source_label", "prompt_id", "replicate"]
            rows = list(reader)
        assert len(rows) == 12  # 3 prompts x 2 replicates x 2 labels
        assert {r["source_label"] for r in rows} == {"clean", "watermarked"}
        for row in rows:
            wav_path = out / row["file"]
            assert wav_path.exists()
            samples, rate = read_wav(wav_path)
            assert abs(samples.size / rate - 1.0) < 0.01
            assert row["replicate"] in ("0", "1")

    def test_distinct_replicates(self, tmp_path, in_dir):
        out = tmp_path / "out"
        job = AdapterJob(
            kind="musicgen_continue", in_dir=str(in_dir), out_dir=str(out),
            params={"source_label": "clean", "prompt_seconds": 0.5,
                    "seconds": 1.0, "replicates": 2},
        )
        run_adapter(job, engine=FakeContinue())
        a, _ = read_wav(out / "clip0-clean-r0.wav")
        b, _ = read_wav(out / "clip0-clean-r1.wav")
        assert not np.array_equal(a, b)


class TestExtractJob:
    def test_embeddings_csv(self, tmp_path, in_dir):
        out = tmp_path / "out"
        job = AdapterJob(kind="embed_extract", in_dir=str(in_dir), out_dir=str(out),
                         params={"model": "vggish"})
        run_adapter(job, engine=FakeExtract())
        with open(out / "embeddings.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header == ["file", "e0", "e1", "e2"]
        assert len(rows) == 3
        assert float(rows[0][3]) == 16000.0


class TestPesqJob:
    def test_pesq_csv(self, tmp_path, in_dir):
        out = tmp_path / "out"
        manifest = tmp_path / "pairs.csv"
        lines = ["file,reference\n"] + [
            f"clip{i}.wav,{in_dir / f'clip{i}.wav'}\n" for i in range(3)
        ]
        manifest.write_text("".join(lines))
        job = AdapterJob(kind="pesq", in_dir=str(in_dir), out_dir=str(out),
                         manifest=str(manifest))
        run_adapter(job, engine=FakePesq())
        with open(out / "pesq.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["pesq"]) == 4.5 for r in rows)  # reference == degraded


class TestProvenance:
    def test_checksum_tracks_outputs(self, tmp_path, in_dir):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            job = AdapterJob(kind="audioseal_detect", in_dir=str(in_dir), out_dir=str(out))
            run_adapter(job, engine=FakeDetect())
        assert read_provenance(out_a)["checksum"] == read_provenance(out_b)["checksum"]

    def test_unavailable_model_is_named(self, tmp_path, in_dir):
        available = True
        try:
            import audioseal  # noqa: F401
        except ImportError:
            available = False
        if available:
            pytest.skip("audioseal installed; unavailability path not exercisable")
        job = AdapterJob(kind="audioseal_embed", in_dir=str(in_dir),
                         out_dir=str(tmp_path / "out"))
        with pytest.raises(ModelUnavailable, match="audioseal"):
            run_adapter(job)
