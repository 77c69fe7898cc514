import struct

import numpy as np
import pytest

from tonetrace.audio import (
    AttackSpec,
    AudioBuffer,
    apply_attack,
    load_wav,
    mix,
    prefix,
    repeat,
    resample,
    rms,
    store_wav,
)
from tonetrace.errors import (
    CorruptFile,
    EmptyBuffer,
    InvalidAttackParams,
    LengthMismatch,
    OutOfRange,
    RateMismatch,
    UnsupportedFormat,
)

from helpers import tone_buffer


def fft_peak_hz(buf: AudioBuffer) -> float:
    """Independent oracle: frequency of the largest rFFT magnitude."""
    spectrum = np.abs(np.fft.rfft(buf.samples))
    return float(np.argmax(spectrum) * buf.sample_rate / len(buf.samples))


def write_raw_wav(path, fmt_code, bits, channels, sample_rate, payload):
    block = channels * bits // 8
    header = b"".join(
        [
            b"RIFF", struct.pack("<I", 36 + len(payload)), b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, fmt_code, channels, sample_rate,
                        sample_rate * block, block, bits),
            b"data", struct.pack("<I", len(payload)),
        ]
    )
    path.write_bytes(header + payload)


class TestBufferInvariants:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            AudioBuffer(samples=np.array([0.0, np.nan]), sample_rate=100)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            AudioBuffer(samples=np.zeros(4), sample_rate=0)

    def test_duration(self):
        buf = AudioBuffer(samples=np.zeros(16000), sample_rate=32000)
        assert buf.duration_seconds == 0.5


class TestWavIo:
    def test_pcm16_silence(self, tmp_path):
        path = tmp_path / "silence.wav"
        write_raw_wav(path, 1, 16, 1, 32000, np.zeros(32000, dtype="<i2").tobytes())
        buf = load_wav(path)
        assert buf.sample_rate == 32000
        assert len(buf) == 32000
        assert np.all(buf.samples == 0)

    def test_pcm16_full_scale_negative(self, tmp_path):
        path = tmp_path / "fs.wav"
        write_raw_wav(path, 1, 16, 1, 8000, np.array([-32768], dtype="<i2").tobytes())
        assert load_wav(path).samples[0] == -1.0

    def test_stereo_downmix_mean(self, tmp_path):
        path = tmp_path / "st.wav"
        frames = np.array([16384, -16384], dtype="<i2")  # (0.5, -0.5)
        write_raw_wav(path, 1, 16, 2, 8000, frames.tobytes())
        assert load_wav(path).samples[0] == 0.0

    def test_float32_roundtrip_bit_identical(self, tmp_path, rng):
        samples = rng.normal(size=512).astype(np.float32).astype(np.float64)
        buf = AudioBuffer(samples=samples, sample_rate=16000)
        path = tmp_path / "f32.wav"
        store_wav(buf, path, encoding="float32")
        back = load_wav(path)
        assert np.array_equal(back.samples, samples)
        assert back.sample_rate == 16000

    def test_pcm16_roundtrip_error_bound(self, tmp_path, rng):
        samples = np.clip(rng.normal(size=512) * 0.3, -0.99, 0.99)
        buf = AudioBuffer(samples=samples, sample_rate=16000)
        path = tmp_path / "p16.wav"
        store_wav(buf, path, encoding="pcm16")
        back = load_wav(path)
        assert np.max(np.abs(back.samples - samples)) <= 1.0 / 32768

    def test_pcm16_quarter(self, tmp_path):
        buf = AudioBuffer(samples=np.array([0.25]), sample_rate=8000)
        path = tmp_path / "q.wav"
        store_wav(buf, path, encoding="pcm16")
        assert abs(load_wav(path).samples[0] - 0.25) <= 1.0 / 32768

    def test_pcm16_clamps_overrange(self, tmp_path):
        buf = AudioBuffer(samples=np.array([1.5]), sample_rate=8000)
        path = tmp_path / "c.wav"
        store_wav(buf, path, encoding="pcm16")
        assert load_wav(path).samples[0] == 32767 / 32768

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "u8.wav"
        write_raw_wav(path, 1, 8, 1, 8000, bytes(16))
        with pytest.raises(UnsupportedFormat):
            load_wav(path)

    def test_truncated_chunk(self, tmp_path):
        path = tmp_path / "ok.wav"
        write_raw_wav(path, 1, 16, 1, 8000, np.zeros(64, dtype="<i2").tobytes())
        clipped = tmp_path / "trunc.wav"
        clipped.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CorruptFile):
            load_wav(clipped)

    def test_not_riff(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"not a wave file at all")
        with pytest.raises(CorruptFile):
            load_wav(path)


class TestResample:
    def test_48k_to_32k_length(self):
        buf = AudioBuffer(samples=np.zeros(480000), sample_rate=48000)
        out = resample(buf, 32000)
        assert len(out) == 320000
        assert out.sample_rate == 32000

    def test_identity(self, noise_buffer):
        assert resample(noise_buffer, 32000) is noise_buffer

    def test_tone_frequency_preserved(self):
        buf = tone_buffer(440.0, duration=1.0, sample_rate=48000)
        out = resample(buf, 32000)
        assert abs(fft_peak_hz(out) - 440.0) <= 1.0

    def test_duration_preserved_within_one_sample(self, rng):
        buf = AudioBuffer(samples=rng.normal(size=44113), sample_rate=44100)
        out = resample(buf, 32000)
        assert abs(out.duration_seconds - buf.duration_seconds) <= 1.0 / 32000


class TestRepeatPrefix:
    def test_repeat_identity(self, noise_buffer):
        assert repeat(noise_buffer, 1) is noise_buffer

    def test_repeat_three_times(self):
        buf = AudioBuffer(samples=np.zeros(320000), sample_rate=32000)
        assert repeat(buf, 3).duration_seconds == pytest.approx(30.0)

    def test_repeat_definition(self):
        buf = AudioBuffer(samples=np.array([1.0, 2.0]), sample_rate=10)
        assert np.array_equal(repeat(buf, 2).samples, [1.0, 2.0, 1.0, 2.0])

    def test_prefix_full_duration(self, noise_buffer):
        out = prefix(noise_buffer, noise_buffer.duration_seconds)
        assert np.array_equal(out.samples, noise_buffer.samples)

    def test_prefix_count(self):
        buf = AudioBuffer(samples=np.zeros(320000), sample_rate=32000)
        assert len(prefix(buf, 5.0)) == 160000

    def test_prefix_zero_rejected(self, noise_buffer):
        with pytest.raises(OutOfRange):
            prefix(noise_buffer, 0.0)


class TestRmsMix:
    def test_rms_zeros(self):
        assert rms(AudioBuffer(samples=np.zeros(100), sample_rate=10)) == 0.0

    def test_rms_constant(self):
        assert rms(AudioBuffer(samples=np.full(100, 0.5), sample_rate=10)) == 0.5

    def test_rms_sine_closed_form(self):
        # whole number of periods: rms = A / sqrt(2)
        buf = tone_buffer(100.0, duration=1.0, sample_rate=32000, amplitude=0.7)
        assert rms(buf) == pytest.approx(0.7 / np.sqrt(2), abs=1e-6)

    def test_rms_empty(self):
        with pytest.raises(EmptyBuffer):
            rms(AudioBuffer(samples=np.zeros(0), sample_rate=10))

    def test_mix_identity(self, noise_buffer):
        zeros = AudioBuffer(samples=np.zeros(len(noise_buffer)), sample_rate=32000)
        assert np.array_equal(mix(noise_buffer, zeros).samples, noise_buffer.samples)

    def test_mix_doubles(self, noise_buffer):
        assert np.array_equal(mix(noise_buffer, noise_buffer).samples, 2 * noise_buffer.samples)

    def test_mix_length_mismatch(self, noise_buffer):
        short = AudioBuffer(samples=np.zeros(10), sample_rate=32000)
        with pytest.raises(LengthMismatch):
            mix(noise_buffer, short)

    def test_mix_rate_mismatch(self, noise_buffer):
        other = AudioBuffer(samples=np.zeros(len(noise_buffer)), sample_rate=16000)
        with pytest.raises(RateMismatch):
            mix(noise_buffer, other)

    def test_mix_commutative_associative(self, rng):
        a, b, c = (AudioBuffer(samples=rng.normal(size=256), sample_rate=100) for _ in range(3))
        assert np.allclose(mix(a, b).samples, mix(b, a).samples, atol=1e-9)
        assert np.allclose(
            mix(mix(a, b), c).samples, mix(a, mix(b, c)).samples, atol=1e-9
        )


class TestAttacks:
    def test_highpass_kills_low_tone(self):
        buf = tone_buffer(10.0, duration=2.0)
        out = apply_attack(buf, AttackSpec(kind="highpass", cutoff_hz=30.0))
        assert rms(out) < 0.1 * rms(buf)

    def test_highpass_contract_at_quarter_and_four_times_cutoff(self):
        cutoff = 200.0
        low = tone_buffer(cutoff / 4, duration=2.0)
        high = tone_buffer(cutoff * 4, duration=2.0)
        spec = AttackSpec(kind="highpass", cutoff_hz=cutoff)
        att_low = 20 * np.log10(rms(apply_attack(low, spec)) / rms(low))
        att_high = 20 * np.log10(rms(apply_attack(high, spec)) / rms(high))
        assert att_low <= -10.0
        assert att_high >= -1.0

    def test_lowpass_symmetric_contract(self):
        cutoff = 1000.0
        low = tone_buffer(cutoff / 4, duration=1.0)
        spec = AttackSpec(kind="lowpass", cutoff_hz=cutoff)
        att = 20 * np.log10(rms(apply_attack(low, spec)) / rms(low))
        assert att >= -1.0

    def test_quantize_error_bound(self, noise_buffer):
        scaled = AudioBuffer(samples=np.clip(noise_buffer.samples * 0.2, -1, 1),
                             sample_rate=32000)
        out = apply_attack(scaled, AttackSpec(kind="quantize", bits=16))
        assert np.max(np.abs(out.samples - scaled.samples)) <= 2.0 / 65536

    def test_quantize_idempotent(self, noise_buffer):
        spec = AttackSpec(kind="quantize", bits=6)
        once = apply_attack(noise_buffer, spec)
        twice = apply_attack(once, spec)
        assert np.array_equal(once.samples, twice.samples)

    def test_noise_level_matches_snr(self, noise_buffer):
        out = apply_attack(noise_buffer, AttackSpec(kind="noise", snr_db=60.0, seed=3))
        noise = out.samples - noise_buffer.samples
        level = np.sqrt(np.mean(noise**2))
        assert level == pytest.approx(1e-3, rel=0.05)

    def test_noise_deterministic_under_seed(self, noise_buffer):
        spec = AttackSpec(kind="noise", snr_db=20.0, seed=9)
        a = apply_attack(noise_buffer, spec)
        b = apply_attack(noise_buffer, spec)
        assert np.array_equal(a.samples, b.samples)

    def test_bad_params(self, noise_buffer):
        with pytest.raises(InvalidAttackParams):
            AttackSpec(kind="quantize", bits=1)
        with pytest.raises(InvalidAttackParams):
            AttackSpec(kind="noise", snr_db=float("inf"))
        with pytest.raises(InvalidAttackParams):
            apply_attack(noise_buffer, AttackSpec(kind="highpass", cutoff_hz=20000.0))

    def test_parse_shorthand(self):
        spec = AttackSpec.parse("noise:40:7")
        assert spec.kind == "noise" and spec.snr_db == 40.0 and spec.seed == 7
        assert AttackSpec.parse("highpass:30").cutoff_hz == 30.0
        with pytest.raises(InvalidAttackParams):
            AttackSpec.parse("fade:1")
