"""Noise generators: white, phase-randomized speech-shaped, recorded."""

import numpy as np
import pytest

from phonobeam.audio import MultichannelWaveform, Waveform, write_wav
from phonobeam.noise import (
    NoiseSpec,
    load_recorded_noise,
    realize_noise,
    speech_shaped_noise,
    white_noise,
)


def _donor(n=4096, seed=7):
    # colored donor so the magnitude check is non-trivial
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    return Waveform(np.convolve(x, [0.6, 0.3, 0.1], mode="same") * 0.1, 16000)


class TestSpec:
    def test_white_needs_no_source(self):
        NoiseSpec("white")

    def test_shaped_requires_source(self):
        with pytest.raises(ValueError, match="source_path"):
            NoiseSpec("speech_shaped")

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown noise kind"):
            NoiseSpec("pink")


class TestWhite:
    def test_seeded_and_distinct(self):
        a = white_noise(1000, seed=3)
        b = white_noise(1000, seed=3)
        c = white_noise(1000, seed=4)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)
        assert abs(np.std(a.samples) - 1.0) < 0.1

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            white_noise(0, seed=1)


class TestSpeechShaped:
    @pytest.mark.parametrize("n", [4096, 4097])
    def test_magnitude_matches_donor(self, n):
        donor = _donor(n)
        ssn = speech_shaped_noise(donor, seed=11)
        mag_d = np.abs(np.fft.rfft(donor.samples))
        mag_s = np.abs(np.fft.rfft(ssn.samples))
        assert np.max(np.abs(mag_s - mag_d)) <= 1e-6 * np.max(mag_d)

    def test_energy_preserved(self):
        donor = _donor()
        ssn = speech_shaped_noise(donor, seed=11)
        e_d = np.sum(donor.samples**2)
        assert abs(np.sum(ssn.samples**2) - e_d) <= 1e-9 * e_d

    def test_dc_untouched(self):
        donor = _donor()
        ssn = speech_shaped_noise(donor, seed=5)
        assert np.sum(ssn.samples) == pytest.approx(np.sum(donor.samples), abs=1e-9)

    def test_seed_controls_phases(self):
        donor = _donor()
        a = speech_shaped_noise(donor, seed=1)
        b = speech_shaped_noise(donor, seed=1)
        c = speech_shaped_noise(donor, seed=2)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)


class TestRecorded:
    def test_wraparound(self, tmp_path):
        path = tmp_path / "rec.wav"
        source = np.arange(8.0) / 100.0
        write_wav(path, Waveform(source, 16000))
        out = load_recorded_noise(path, duration=11, offset=5)
        expected = source[(5 + np.arange(11)) % 8].astype(np.float32)
        assert np.array_equal(out.samples, expected)

    def test_stereo_downmix(self, tmp_path):
        path = tmp_path / "st.wav"
        data = np.stack([np.full(16, 0.25), np.full(16, 0.75)])
        write_wav(path, MultichannelWaveform(data, 16000, ("a", "b")))
        out = load_recorded_noise(path, duration=4)
        assert np.allclose(out.samples, 0.5)


class TestRealize:
    def test_white_uses_fallback_seed(self):
        spec = NoiseSpec("white")
        a = realize_noise(spec, 500, 16000, fallback_seed=9)
        b = realize_noise(spec, 500, 16000, fallback_seed=9)
        c = realize_noise(spec, 500, 16000, fallback_seed=10)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_spec_seed_wins(self):
        spec = NoiseSpec("white", seed=42)
        a = realize_noise(spec, 500, 16000, fallback_seed=1)
        b = realize_noise(spec, 500, 16000, fallback_seed=2)
        assert np.array_equal(a.samples, b.samples)

    def test_shaped_tiles_to_length(self, tmp_path):
        path = tmp_path / "donor.wav"
        write_wav(path, _donor(512))
        spec = NoiseSpec("speech_shaped", source_path=str(path))
        out = realize_noise(spec, 1300, 16000, fallback_seed=3)
        assert out.num_samples == 1300
        # tiling repeats the donor-length realization
        assert np.array_equal(out.samples[:512], out.samples[512:1024])

    def test_recorded_offset_is_seeded(self, tmp_path):
        path = tmp_path / "rec.wav"
        write_wav(path, Waveform(np.arange(64.0) / 64, 16000))
        spec = NoiseSpec("recorded", source_path=str(path))
        a = realize_noise(spec, 32, 16000, fallback_seed=5)
        b = realize_noise(spec, 32, 16000, fallback_seed=5)
        c = realize_noise(spec, 32, 16000, fallback_seed=6)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)
