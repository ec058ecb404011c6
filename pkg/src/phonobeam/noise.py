"""Interferer synthesis: white noise, speech-shaped noise, recorded noise.

Speech-shaped noise keeps the donor's full-length DFT magnitude and
randomizes only the interior bin phases, so the long-term spectrum (and
total energy, by Parseval) match the donor exactly. All generators are
pure functions of their seed.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .audio import Waveform, read_wav

NOISE_KINDS = ("white", "speech_shaped", "recorded")


@dataclass(frozen=True)
class NoiseSpec:
    """Declarative description of one interferer.

    Parameters
    ----------
    kind : {"white", "speech_shaped", "recorded"}
    source_path : path-like, optional
        Donor file for speech_shaped, recording for recorded.
    seed : int, optional
        Realization seed; when None the scene seed is used instead.
    """

    kind: str
    source_path: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, expected {NOISE_KINDS}")
        if self.kind in ("speech_shaped", "recorded") and self.source_path is None:
            raise ValueError(f"{self.kind} noise requires source_path")


def white_noise(duration, seed, sample_rate=16000):
    """I.i.d. standard normal samples.

    Parameters
    ----------
    duration : int
        Length in samples, > 0.
    seed : int
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    rng = np.random.default_rng(seed)
    return Waveform(rng.standard_normal(duration), sample_rate)


def speech_shaped_noise(donor, seed):
    """Phase-randomized copy of the donor signal.

    The full-length one-sided DFT of the donor is taken, interior bins
    get fresh phases uniform on [0, 2pi), and the DC (and Nyquist, for
    even lengths) bins are left untouched so the inverse transform stays
    real. |DFT| is preserved bin by bin.

    Parameters
    ----------
    donor : Waveform
        Real signal of length >= 2.
    seed : int
    """
    samples = donor.samples
    if samples.shape[0] < 2:
        raise ValueError("donor must have at least 2 samples")
    spectrum = np.fft.rfft(samples)
    rng = np.random.default_rng(seed)
    # bin 0 is DC; for even lengths the last bin is Nyquist, also real
    last_interior = spectrum.shape[0] - 1 if samples.shape[0] % 2 == 0 else spectrum.shape[0]
    phases = rng.uniform(0.0, 2.0 * np.pi, max(last_interior - 1, 0))
    randomized = spectrum.copy()
    randomized[1:last_interior] = np.abs(spectrum[1:last_interior]) * np.exp(1j * phases)
    out = np.fft.irfft(randomized, n=samples.shape[0])
    return Waveform(out, donor.sample_rate)


def load_recorded_noise(path, duration, offset=0):
    """Mono excerpt of a recorded noise file.

    Multichannel recordings are downmixed by channel mean. Requests past
    the end of the file wrap around to the beginning (the recording is
    treated as a loop).

    Parameters
    ----------
    path : path-like
    duration : int
        Excerpt length in samples.
    offset : int
        Start position in samples, wrapped to the file length.
    """
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    recording = read_wav(path)
    if isinstance(recording, Waveform):
        mono = recording.samples
    else:
        mono = recording.data.mean(axis=0)
    if mono.shape[0] == 0:
        raise ValueError(f"{path} is empty")
    indices = (offset + np.arange(duration)) % mono.shape[0]
    return Waveform(mono[indices], recording.sample_rate)


def _tile_to(samples, duration):
    reps = -(-duration // samples.shape[0])  # ceil division
    return np.tile(samples, reps)[:duration]


def realize_noise(spec, duration, sample_rate, fallback_seed):
    """Materialize a NoiseSpec as a dry waveform of the given length.

    Speech-shaped noise is generated at the donor's own length and then
    tiled or trimmed; recorded noise starts at a seed-derived offset.
    The spec's own seed wins over the fallback when set.
    """
    seed = spec.seed if spec.seed is not None else fallback_seed
    if spec.kind == "white":
        return white_noise(duration, seed, sample_rate)
    if spec.kind == "speech_shaped":
        donor = read_wav(spec.source_path, expected_rate=sample_rate)
        if not isinstance(donor, Waveform):
            donor = Waveform(donor.data.mean(axis=0), donor.sample_rate)
        shaped = speech_shaped_noise(donor, seed)
        return Waveform(_tile_to(shaped.samples, duration), sample_rate)
    # recorded
    probe = read_wav(spec.source_path, expected_rate=sample_rate)
    length = probe.num_samples
    if length == 0:
        raise ValueError(f"{spec.source_path} is empty")
    offset = int(np.random.default_rng(seed).integers(0, length))
    return load_recorded_noise(spec.source_path, duration, offset)
