"""Deterministic desk-scale corpus for demos and end-to-end checks.

Builds ten short synthetic utterances with sample-exact alignments, a
low-frequency-heavy donor for speech-shaped noise, impulse responses
for a frontal speech source and two lateral noise sources, and a ready
config file. Everything derives from one seed, so two builds are
byte-identical.

The noise-path impulse responses carry a first-order high-frequency
tilt on top of the delay/gain/decay taps. Room coloration of the
interferer is what separates the measured input SIR of spectrally
different noises at a matched dry SNR, so a desk room needs some
coloration too; a single echo tap is the smallest filter that provides
it.
"""

from pathlib import Path

import numpy as np

from .audio import Waveform, write_wav
from .scene import BINAURAL_LAYOUT, DecaySpec, RirSet, synth_test_rirs

SAMPLE_RATE = 16000
_PEAK = 0.3
_RAMP_S = 0.005
_NOISE_TILT_ALPHA = 0.62

# phone -> (synthesis kind, parameters)
_RECIPES = {
    # plosives: closure then burst
    "p": ("plosive", dict(band=(600.0, 2500.0))),
    "b": ("plosive", dict(band=(300.0, 2000.0))),
    "t": ("plosive", dict(band=(2000.0, 6000.0))),
    "d": ("plosive", dict(band=(1500.0, 5000.0))),
    "k": ("plosive", dict(band=(1000.0, 4000.0))),
    "ɡ": ("plosive", dict(band=(700.0, 3000.0))),
    # fricatives: shaped broadband noise
    "f": ("fricative", dict(band=(1000.0, 7000.0))),
    "v": ("fricative", dict(band=(500.0, 5000.0))),
    "θ": ("fricative", dict(band=(1500.0, 7500.0))),
    "ð": ("fricative", dict(band=(600.0, 5000.0))),
    "h": ("fricative", dict(band=(400.0, 3000.0))),
    # sibilants: concentrated high band
    "s": ("sibilant", dict(band=(4500.0, 7800.0))),
    "z": ("sibilant", dict(band=(4000.0, 7500.0))),
    "ʃ": ("sibilant", dict(band=(2500.0, 6500.0))),
    "ʒ": ("sibilant", dict(band=(2200.0, 6000.0))),
    # affricates: burst then sibilant tail
    "tʃ": ("affricate", dict(band=(2500.0, 6500.0))),
    "dʒ": ("affricate", dict(band=(2200.0, 6000.0))),
    # voiced sonorants: harmonic complexes, tilt sets the brightness
    "m": ("voiced", dict(f0=118.0, tilt=280.0, rms=0.09)),
    "n": ("voiced", dict(f0=126.0, tilt=320.0, rms=0.09)),
    "ŋ": ("voiced", dict(f0=112.0, tilt=260.0, rms=0.09)),
    "l": ("voiced", dict(f0=124.0, tilt=500.0, rms=0.11)),
    "ɹ": ("voiced", dict(f0=120.0, tilt=450.0, rms=0.11)),
    "w": ("voiced", dict(f0=110.0, tilt=380.0, rms=0.11)),
    "j": ("voiced", dict(f0=135.0, tilt=550.0, rms=0.11)),
    "ɾ": ("voiced", dict(f0=122.0, tilt=420.0, rms=0.10)),
    # vowels by height class
    "i": ("voiced", dict(f0=128.0, tilt=700.0, rms=0.15)),
    "u": ("voiced", dict(f0=116.0, tilt=420.0, rms=0.15)),
    "ɪ": ("voiced", dict(f0=126.0, tilt=620.0, rms=0.15)),
    "ʊ": ("voiced", dict(f0=118.0, tilt=460.0, rms=0.15)),
    "e": ("voiced", dict(f0=124.0, tilt=660.0, rms=0.15)),
    "ej": ("voiced", dict(f0=124.0, tilt=680.0, rms=0.15)),
    "ow": ("voiced", dict(f0=114.0, tilt=440.0, rms=0.15)),
    "ɛ": ("voiced", dict(f0=122.0, tilt=640.0, rms=0.15)),
    "ʌ": ("voiced", dict(f0=118.0, tilt=560.0, rms=0.15)),
    "ə": ("voiced", dict(f0=120.0, tilt=520.0, rms=0.13)),
    "ɔj": ("voiced", dict(f0=116.0, tilt=540.0, rms=0.15)),
    "æ": ("voiced", dict(f0=124.0, tilt=760.0, rms=0.16)),
    "ɑ": ("voiced", dict(f0=114.0, tilt=700.0, rms=0.16)),
    "aj": ("voiced", dict(f0=118.0, tilt=720.0, rms=0.16)),
    "aw": ("voiced", dict(f0=114.0, tilt=680.0, rms=0.16)),
}

# duration ranges (seconds) per synthesis kind; taps deliberately
# straddle the 32 ms scoring floor
_DURATIONS = {
    "sil": (0.08, 0.16),
    "plosive": (0.06, 0.10),
    "fricative": (0.07, 0.12),
    "sibilant": (0.09, 0.15),
    "affricate": (0.09, 0.14),
    "voiced": (0.10, 0.18),
}
_TAP_DURATION = (0.022, 0.042)

# ten phone sequences; every utterance contains at least one sibilant,
# and the corpus covers all thirteen categories
_SEQUENCES = (
    ("sil", "s", "ɑ", "n", "sil", "t", "i", "z", "sil"),
    ("sil", "ʃ", "ej", "m", "sil", "p", "ɪ", "s", "ɾ", "ə", "sil"),
    ("sil", "f", "aj", "v", "sil", "z", "u", "ŋ", "sil"),
    ("sil", "tʃ", "ɛ", "s", "sil", "l", "ow", "n", "sil"),
    ("sil", "k", "æ", "s", "ɾ", "ʌ", "m", "sil"),
    ("sil", "ʒ", "ʊ", "ʃ", "sil", "ɹ", "e", "s", "sil"),
    ("sil", "θ", "ɔj", "z", "sil", "w", "ɪ", "tʃ", "sil"),
    ("sil", "b", "aw", "s", "sil", "n", "ə", "ɡ", "sil"),
    ("sil", "h", "ɑ", "l", "d", "sil", "s", "i", "m", "sil"),
    ("sil", "dʒ", "ʌ", "s", "ɾ", "sil", "j", "u", "ð", "sil"),
)


def _band_noise(rng, length, low, high, rms):
    """Noise with a raised-cosine band-limited spectrum."""
    spectrum = np.fft.rfft(rng.standard_normal(length))
    freqs = np.fft.rfftfreq(length, 1.0 / SAMPLE_RATE)
    edge = max(0.08 * (high - low), 50.0)
    gain = np.clip((freqs - (low - edge)) / edge, 0.0, 1.0)
    gain *= np.clip(((high + edge) - freqs) / edge, 0.0, 1.0)
    out = np.fft.irfft(spectrum * gain, length)
    return _set_rms(out, rms)


def _harmonic(length, f0, tilt, rms):
    """Harmonic complex with a low-pass amplitude envelope.

    Schroeder phases keep the crest factor moderate.
    """
    t = np.arange(length) / SAMPLE_RATE
    num_harmonics = max(int(4000.0 // f0), 1)
    out = np.zeros(length)
    for k in range(1, num_harmonics + 1):
        amplitude = 1.0 / (1.0 + (k * f0 / tilt) ** 2)
        phase = -np.pi * k * (k - 1) / num_harmonics
        out += amplitude * np.sin(2.0 * np.pi * k * f0 * t + phase)
    return _set_rms(out, rms)


def _set_rms(samples, rms):
    current = np.sqrt(np.mean(samples**2))
    return samples * (rms / current) if current > 0 else samples


def _ramped(samples):
    ramp = int(_RAMP_S * SAMPLE_RATE)
    if samples.shape[0] < 2 * ramp:
        ramp = samples.shape[0] // 2
    if ramp == 0:
        return samples
    window = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    out = samples.copy()
    out[:ramp] *= window
    out[-ramp:] *= window[::-1]
    return out


def _synth_phone(rng, label, length):
    if label == "sil":
        return np.zeros(length)
    kind, params = _RECIPES[label]
    if kind == "voiced":
        return _ramped(_harmonic(length, **params))
    if kind in ("fricative", "sibilant"):
        rms = 0.07 if kind == "fricative" else 0.12
        return _ramped(_band_noise(rng, length, *params["band"], rms))
    if kind == "plosive":
        closure = int(0.6 * length)
        burst = _band_noise(rng, length - closure, *params["band"], 0.12)
        return _ramped(np.concatenate([np.zeros(closure), burst]))
    if kind == "affricate":
        burst_len = int(0.3 * length)
        burst = _band_noise(rng, burst_len, 1500.0, 5000.0, 0.12)
        tail = _band_noise(rng, length - burst_len, *params["band"], 0.12)
        return _ramped(np.concatenate([burst, tail]))
    raise ValueError(f"no recipe for {label!r}")


def _phone_duration(rng, label):
    if label == "sil":
        low, high = _DURATIONS["sil"]
    elif label == "ɾ":
        low, high = _TAP_DURATION
    else:
        low, high = _DURATIONS[_RECIPES[label][0]]
    return int(round(rng.uniform(low, high) * SAMPLE_RATE))


def _build_utterance(seed, index):
    rng = np.random.default_rng([seed, index])
    pieces = []
    rows = []
    cursor = 0
    for label in _SEQUENCES[index]:
        length = _phone_duration(rng, label)
        pieces.append(_synth_phone(rng, label, length))
        rows.append((label, cursor, cursor + length))
        cursor += length
    samples = np.concatenate(pieces)
    samples *= _PEAK / np.abs(samples).max()
    return samples.astype(np.float32).astype(np.float64), rows


def _write_alignment(path, rows):
    lines = ["phoneme,start,end"]
    for label, start, end in rows:
        lines.append(f"{label},{start / SAMPLE_RATE:.6f},{end / SAMPLE_RATE:.6f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _ssn_donor(seed, duration_s=2.5):
    """Low-frequency-heavy noise standing in for a speech donor."""
    rng = np.random.default_rng([seed, 1001])
    length = int(duration_s * SAMPLE_RATE)
    spectrum = np.fft.rfft(rng.standard_normal(length))
    freqs = np.fft.rfftfreq(length, 1.0 / SAMPLE_RATE)
    gain = 1.0 / (1.0 + (freqs / 450.0) ** 1.8)
    out = _set_rms(np.fft.irfft(spectrum * gain, length), 0.1)
    return Waveform(out.astype(np.float32).astype(np.float64), SAMPLE_RATE)


def _tilted(rir_set, alpha):
    """Apply the first-order high-frequency tilt [1, -alpha] per channel."""
    entries = {}
    for (angle, channel), rir in rir_set.entries.items():
        shaped = np.convolve(rir.samples, [1.0, -alpha])
        entries[(angle, channel)] = Waveform(shaped, rir.sample_rate)
    return RirSet(entries)


def _desk_rirs(seed):
    speech = synth_test_rirs(
        0,
        delays={"L1": 0, "L2": 1, "R1": 0, "R2": 1},
        gains={"L1": 1.0, "L2": 0.95, "R1": 1.0, "R2": 0.95},
        decay=DecaySpec(0.04, 0.12, 0.015, seed=seed + 1),
        sample_rate=SAMPLE_RATE,
    )
    noise_45 = synth_test_rirs(
        45,
        delays={"L1": 4, "L2": 5, "R1": 0, "R2": 1},
        gains={"L1": 0.62, "L2": 0.58, "R1": 1.0, "R2": 0.92},
        decay=DecaySpec(0.035, 0.1, 0.012, seed=seed + 2),
        sample_rate=SAMPLE_RATE,
    )
    noise_90 = synth_test_rirs(
        90,
        delays={"L1": 7, "L2": 8, "R1": 0, "R2": 1},
        gains={"L1": 0.45, "L2": 0.42, "R1": 1.0, "R2": 0.9},
        decay=DecaySpec(0.035, 0.1, 0.012, seed=seed + 3),
        sample_rate=SAMPLE_RATE,
    )
    lateral = _tilted(noise_45.merged(noise_90), _NOISE_TILT_ALPHA)
    return speech.merged(lateral)


_CONFIG_TEMPLATE = """\
speech_dir: speech
alignment_dir: alignments
rir_root: rirs
noise_kinds: [white, speech_shaped]
ssn_donor: noise/ssn_donor.wav
snr_db: [-5, 0, 5]
noise_angles_deg: [45]
algorithms: [mvdr, mwf, gevd_mwf]
ears: [L, R]
output_dir: out
master_seed: {seed}
workers: 4
"""


def build_desk_corpus(root, seed=20260826):
    """Write the corpus under `root` and return the config file path."""
    root = Path(root)
    for sub in ("speech", "alignments", "noise"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    for index in range(len(_SEQUENCES)):
        samples, rows = _build_utterance(seed, index)
        write_wav(root / "speech" / f"utt{index:02d}.wav",
                  Waveform(samples, SAMPLE_RATE))
        _write_alignment(root / "alignments" / f"utt{index:02d}.csv", rows)

    write_wav(root / "noise" / "ssn_donor.wav", _ssn_donor(seed))

    rirs = _desk_rirs(seed)
    for (angle, channel), rir in sorted(rirs.entries.items()):
        angle_dir = root / "rirs" / str(angle)
        angle_dir.mkdir(parents=True, exist_ok=True)
        write_wav(angle_dir / f"{channel}.wav", rir)

    config_path = root / "config.yaml"
    config_path.write_text(_CONFIG_TEMPLATE.format(seed=seed), encoding="utf-8")
    return config_path
