"""Spatialized mixture construction.

A scene is built from one dry speech file and one dry noise realization:
noise is scaled so the dry active-segment SNR hits the target, both
sources are convolved with their angle's impulse responses, and the
per-channel images are summed. The SNR is set before convolution, so the
measured input SIR at the microphones additionally reflects whatever
spectral shaping the impulse responses apply.
"""

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .audio import MultichannelWaveform, Waveform, read_wav
from .noise import NoiseSpec, realize_noise

# Channel order used throughout: front then rear microphone of the left
# hearing aid, then the right one.
BINAURAL_LAYOUT = ("L1", "L2", "R1", "R2")


def _channel_order(labels):
    known = [ch for ch in BINAURAL_LAYOUT if ch in labels]
    extra = sorted(set(labels) - set(BINAURAL_LAYOUT))
    return tuple(known + extra)


@dataclass(frozen=True)
class RirSet:
    """Impulse responses keyed by (source angle in degrees, channel label)."""

    entries: dict

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty RirSet")
        rates = {rir.sample_rate for rir in self.entries.values()}
        if len(rates) != 1:
            raise ValueError(f"impulse responses disagree on sample_rate: {sorted(rates)}")

    @property
    def sample_rate(self):
        return next(iter(self.entries.values())).sample_rate

    @property
    def angles(self):
        return tuple(sorted({angle for angle, _ in self.entries}))

    def channels(self, angle):
        """Channel labels available for an angle, in binaural order."""
        labels = [ch for a, ch in self.entries if a == angle]
        if not labels:
            raise ValueError(f"no impulse responses for angle {angle}")
        return _channel_order(labels)

    def impulse_response(self, angle, channel):
        try:
            return self.entries[(angle, channel)]
        except KeyError:
            raise ValueError(f"no impulse response for angle {angle}, channel {channel!r}")

    def merged(self, other):
        """Union of two sets; overlapping keys must not conflict."""
        entries = dict(self.entries)
        for key, rir in other.entries.items():
            if key in entries and entries[key] is not rir:
                raise ValueError(f"conflicting impulse responses for {key}")
            entries[key] = rir
        return RirSet(entries)


def load_rir_set(root):
    """Load impulse responses laid out as ``<root>/<angle>/<channel>.wav``.

    Angle directories are named by integer degrees; each contains one
    mono WAV per channel.
    """
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"impulse response root {root} is not a directory")
    entries = {}
    for angle_dir in sorted(root.iterdir()):
        if not (angle_dir.is_dir() and re.fullmatch(r"-?\d+", angle_dir.name)):
            continue
        angle = int(angle_dir.name)
        for wav_path in sorted(angle_dir.glob("*.wav")):
            rir = read_wav(wav_path)
            if not isinstance(rir, Waveform):
                raise ValueError(f"{wav_path}: impulse responses must be mono")
            entries[(angle, wav_path.stem)] = rir
    if not entries:
        raise ValueError(f"no impulse responses found under {root}")
    return RirSet(entries)


@dataclass(frozen=True)
class ActivityDetectorConfig:
    """Frame-energy speech activity detector parameters.

    A frame is active when its energy is within threshold_db of the
    loudest frame.
    """

    frame_length: int = 320  # 20 ms at 16 kHz
    threshold_db: float = 40.0

    def __post_init__(self):
        if self.frame_length <= 0:
            raise ValueError("frame_length must be positive")
        if self.threshold_db <= 0:
            raise ValueError("threshold_db must be positive")


@dataclass(frozen=True)
class SceneConfig:
    speech_path: str
    noise: NoiseSpec
    noise_angle: int
    target_snr_db: float
    rir_set: RirSet
    seed: int
    speech_angle: int = 0

    def __post_init__(self):
        if not math.isfinite(self.target_snr_db):
            raise ValueError(f"target_snr_db must be finite, got {self.target_snr_db}")
        for angle in (self.speech_angle, self.noise_angle):
            if angle not in self.rir_set.angles:
                raise ValueError(
                    f"angle {angle} not in impulse response set "
                    f"(available: {self.rir_set.angles})"
                )


@dataclass(frozen=True)
class Scene:
    """Per-channel source images and their sum.

    mixture == speech_image + noise_image holds sample-exactly; the
    noise gain recorded here was applied to the dry noise before
    convolution.
    """

    speech_image: MultichannelWaveform
    noise_image: MultichannelWaveform
    mixture: MultichannelWaveform
    applied_noise_gain: float
    activity_mask: np.ndarray

    @property
    def sample_rate(self):
        return self.mixture.sample_rate

    @property
    def layout(self):
        return self.mixture.layout


def _frame_energies(samples, frame_length):
    num_frames = -(-samples.shape[0] // frame_length)  # trailing partial counts
    padded = np.pad(samples, (0, num_frames * frame_length - samples.shape[0]))
    return (padded.reshape(num_frames, frame_length) ** 2).sum(axis=1)


def detect_activity(speech, cfg=None):
    """Boolean activity flag per frame of the dry speech signal.

    Raises on an all-zero signal, for which no SNR is defined.
    """
    cfg = cfg or ActivityDetectorConfig()
    if speech.num_samples == 0:
        raise ValueError("empty signal")
    energies = _frame_energies(speech.samples, cfg.frame_length)
    peak = energies.max()
    if peak <= 0.0:
        raise ValueError("signal is digitally silent; activity undefined")
    return energies >= peak * 10.0 ** (-cfg.threshold_db / 10.0)


def noise_gain_for_snr(speech, noise, target_snr_db, activity, frame_length=320):
    """Gain g so that the dry active-segment SNR equals the target.

    Energies of both signals are summed over the speech-active frames
    only; g = sqrt(E_s / E_n) * 10^(-target/20).
    """
    if noise.num_samples != speech.num_samples:
        raise ValueError(
            f"speech and noise lengths differ "
            f"({speech.num_samples} vs {noise.num_samples})"
        )
    activity = np.asarray(activity, dtype=bool)
    speech_energy = _frame_energies(speech.samples, frame_length)[activity].sum()
    noise_energy = _frame_energies(noise.samples, frame_length)[activity].sum()
    if speech_energy <= 0.0:
        raise ValueError("no active speech energy")
    if noise_energy <= 0.0:
        raise ValueError("noise has no energy over the speech-active frames")
    return math.sqrt(speech_energy / noise_energy) * 10.0 ** (-target_snr_db / 20.0)


def convolve_rir(source, rir_set, angle):
    """Convolve a dry source with every channel's impulse response.

    Each channel is the full linear convolution; channels with shorter
    impulse responses are zero-padded so all share the length
    source_length + max_rir_length - 1.
    """
    if source.sample_rate != rir_set.sample_rate:
        raise ValueError(
            f"source at {source.sample_rate} Hz, impulse responses at "
            f"{rir_set.sample_rate} Hz"
        )
    labels = rir_set.channels(angle)
    rirs = [rir_set.impulse_response(angle, ch).samples for ch in labels]
    out_length = source.num_samples + max(r.shape[0] for r in rirs) - 1
    data = np.zeros((len(labels), out_length))
    for m, rir in enumerate(rirs):
        image = fftconvolve(source.samples, rir, mode="full")
        data[m, : image.shape[0]] = image
    return MultichannelWaveform(data, source.sample_rate, labels)


def _pad_to(signal, length):
    if signal.num_samples == length:
        return signal
    data = np.zeros((signal.num_channels, length))
    data[:, : signal.num_samples] = signal.data
    return MultichannelWaveform(data, signal.sample_rate, signal.layout)


def build_scene(cfg, detector=None):
    """Assemble speech image, scaled noise image, and their mixture."""
    detector = detector or ActivityDetectorConfig()
    speech = read_wav(cfg.speech_path, expected_rate=cfg.rir_set.sample_rate)
    if not isinstance(speech, Waveform):
        raise ValueError(f"{cfg.speech_path}: speech source must be mono")
    noise = realize_noise(cfg.noise, speech.num_samples, speech.sample_rate, cfg.seed)

    activity = detect_activity(speech, detector)
    gain = noise_gain_for_snr(
        speech, noise, cfg.target_snr_db, activity, detector.frame_length
    )

    speech_image = convolve_rir(speech, cfg.rir_set, cfg.speech_angle)
    scaled = Waveform(gain * noise.samples, noise.sample_rate)
    noise_image = convolve_rir(scaled, cfg.rir_set, cfg.noise_angle)
    if speech_image.layout != noise_image.layout:
        raise ValueError(
            f"channel layouts differ between angles "
            f"({speech_image.layout} vs {noise_image.layout})"
        )

    length = max(speech_image.num_samples, noise_image.num_samples)
    speech_image = _pad_to(speech_image, length)
    noise_image = _pad_to(noise_image, length)
    mixture = MultichannelWaveform(
        speech_image.data + noise_image.data, speech.sample_rate, speech_image.layout
    )
    return Scene(speech_image, noise_image, mixture, gain, activity)


@dataclass(frozen=True)
class DecaySpec:
    """Exponential noise tail appended after the direct tap."""

    time_constant_s: float
    duration_s: float
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.time_constant_s <= 0 or self.duration_s <= 0:
            raise ValueError("time_constant_s and duration_s must be positive")


def synth_test_rirs(angle, delays, gains, decay=None, sample_rate=16000):
    """Synthetic impulse responses: one delayed tap plus optional tail.

    Parameters
    ----------
    angle : int
        Source angle the set is keyed under.
    delays : dict
        Channel label -> delay in samples (non-negative).
    gains : dict
        Channel label -> direct tap gain; same keys as delays.
    decay : DecaySpec, optional
        Seeded exponential-decay noise tail following the direct tap.
    sample_rate : int
    """
    if set(delays) != set(gains):
        raise ValueError("delays and gains must cover the same channels")
    entries = {}
    rng = np.random.default_rng(decay.seed) if decay is not None else None
    tail_length = 0
    if decay is not None:
        tail_length = int(round(decay.duration_s * sample_rate))
    for channel in _channel_order(delays):
        delay = delays[channel]
        if delay < 0:
            raise ValueError(f"negative delay for channel {channel!r}")
        rir = np.zeros(delay + 1 + tail_length)
        rir[delay] = gains[channel]
        if decay is not None:
            # tail drawn per channel in layout order, so the set is
            # reproducible from the single decay seed
            offsets = np.arange(1, tail_length + 1)
            envelope = np.exp(-offsets / (decay.time_constant_s * sample_rate))
            rir[delay + 1 :] = decay.level * envelope * rng.standard_normal(tail_length)
        entries[(angle, channel)] = Waveform(rir, sample_rate)
    return RirSet(entries)
