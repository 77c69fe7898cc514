import json

import numpy as np

from tonetrace.audio import rms
from tonetrace.corpus import make_clip, make_corpus, write_corpus


class TestMakeClip:
    def test_deterministic(self):
        a = make_clip(0, 7)
        b = make_clip(0, 7)
        assert np.array_equal(a.samples, b.samples)

    def test_distinct_across_indices(self):
        assert not np.array_equal(make_clip(0, 1).samples, make_clip(0, 2).samples)

    def test_shape_and_level(self):
        clip = make_clip(3, 0, duration=10.0, sample_rate=32000)
        assert len(clip) == 320000
        assert 0.05 < rms(clip) < 0.2


class TestCorpus:
    def test_count_and_ids(self):
        items = make_corpus(n_clips=5, duration=1.0, seed=2)
        assert [it.id for it in items] == [f"clip-{i:04d}" for i in range(5)]
        assert all(it.audio.duration_seconds == 1.0 for it in items)

    def test_write_manifest(self, tmp_path):
        items = make_corpus(n_clips=3, duration=0.5, seed=2)
        manifest = write_corpus(items, tmp_path / "data")
        records = json.loads(manifest.read_text())
        assert len(records) == 3
        assert all((tmp_path / "data" / r["file"]).exists() for r in records)
