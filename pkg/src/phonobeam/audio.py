"""Time-domain containers, WAV file I/O, and the STFT/iSTFT pair.

All downstream processing runs on these containers. Arrays are stored
float64/complex128 and marked read-only, so scenes and spectrograms can
be shared freely across worker processes.

The inverse transform divides by the realized overlap-add envelope of
``analysis_window * synthesis_window`` instead of assuming a constant
COLA sum, so any config whose steady-state envelope is bounded away
from zero reconstructs exactly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

_PCM16_FULL_SCALE = 32768.0
_ENVELOPE_FLOOR = 1e-12


def _readonly(values, dtype):
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Waveform:
    """Single-channel signal with its sample rate.

    Parameters
    ----------
    samples : array_like
        1-D real amplitudes, nominal range [-1, 1].
    sample_rate : int
        Sampling frequency in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = _readonly(self.samples, np.float64)
        if samples.ndim != 1:
            raise ValueError(f"expected a 1-D sample array, got shape {samples.shape}")
        if not np.isfinite(samples).all():
            raise ValueError("samples contain NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        """Length in seconds."""
        return self.num_samples / self.sample_rate


@dataclass(frozen=True)
class MultichannelWaveform:
    """Channel-stacked signal bundle with named channel layout.

    Parameters
    ----------
    data : array_like
        Real array of shape (num_channels, num_samples).
    sample_rate : int
    layout : tuple of str
        One label per channel, e.g. ("L1", "L2", "R1", "R2").
    """

    data: np.ndarray
    sample_rate: int
    layout: tuple

    def __post_init__(self):
        data = _readonly(self.data, np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected (channels, samples), got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("samples contain NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        layout = tuple(self.layout)
        if len(layout) != data.shape[0]:
            raise ValueError(
                f"layout has {len(layout)} labels for {data.shape[0]} channels"
            )
        if len(set(layout)) != len(layout):
            raise ValueError(f"duplicate channel labels in layout {layout}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "layout", layout)

    @classmethod
    def from_channels(cls, channels, layout):
        """Stack equal-length single-channel waveforms."""
        channels = list(channels)
        if not channels:
            raise ValueError("need at least one channel")
        rate = channels[0].sample_rate
        length = channels[0].num_samples
        for ch in channels[1:]:
            if ch.sample_rate != rate:
                raise ValueError("channels disagree on sample_rate")
            if ch.num_samples != length:
                raise ValueError("channels disagree on length")
        return cls(np.stack([ch.samples for ch in channels]), rate, tuple(layout))

    @property
    def num_channels(self):
        return self.data.shape[0]

    @property
    def num_samples(self):
        return self.data.shape[1]

    def channel(self, label):
        """Return one channel as a Waveform."""
        return Waveform(self.data[self.layout.index(label)], self.sample_rate)

    def reordered(self, layout):
        """Return a copy with channels permuted into the given label order."""
        indices = [self.layout.index(label) for label in layout]
        return MultichannelWaveform(self.data[indices], self.sample_rate, tuple(layout))


def _taper(kind, length):
    if kind == "rect":
        return np.ones(length)
    n = np.arange(length)
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)  # periodic variant
    if kind == "hann":
        return hann
    if kind == "sqrt_hann":
        return np.sqrt(hann)
    raise ValueError(f"unknown window kind {kind!r}")


@dataclass(frozen=True)
class StftConfig:
    """Framing parameters shared by analysis and synthesis.

    The same taper is applied on both sides; the default square-root
    Hann at 50 % overlap gives a flat unit overlap-add envelope.
    """

    window_length: int = 512
    hop_length: int = 256
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.window_length <= 0:
            raise ValueError("window_length must be positive")
        if not 0 < self.hop_length <= self.window_length:
            raise ValueError(
                f"need 0 < hop_length <= window_length, got "
                f"{self.hop_length}/{self.window_length}"
            )
        taper = self.taper  # validates the window kind
        # Steady-state overlap-add envelope over one hop period. If it
        # dips to zero somewhere, no synthesis taper can undo the
        # framing and the config is rejected outright.
        product = taper * taper
        envelope = np.zeros(self.hop_length)
        for start in range(0, self.window_length, self.hop_length):
            chunk = product[start:start + self.hop_length]
            envelope[: chunk.shape[0]] += chunk
        if envelope.min() <= 1e-6:
            raise ValueError(
                f"window {self.window!r} with hop {self.hop_length} leaves "
                f"overlap-add gaps (envelope min {envelope.min():.2e})"
            )

    @property
    def taper(self):
        return _taper(self.window, self.window_length)

    @property
    def num_frequencies(self):
        return self.window_length // 2 + 1

    @property
    def pad_left(self):
        # One window minus one hop of leading zeros puts sample 0 under
        # the full steady-state envelope.
        return self.window_length - self.hop_length

    @property
    def pad_right(self):
        return self.window_length

    def num_frames(self, num_samples):
        padded = num_samples + self.pad_left + self.pad_right
        return (padded - self.window_length) // self.hop_length + 1


@dataclass(frozen=True)
class Spectrogram:
    """Single-channel complex STFT, indexed (frame, frequency)."""

    data: np.ndarray
    sample_rate: int
    config: StftConfig
    num_samples: int

    def __post_init__(self):
        data = _readonly(self.data, np.complex128)
        if data.ndim != 2:
            raise ValueError(f"expected (frames, frequencies), got shape {data.shape}")
        if data.shape[1] != self.config.num_frequencies:
            raise ValueError(
                f"{data.shape[1]} frequency bins, config implies "
                f"{self.config.num_frequencies}"
            )
        object.__setattr__(self, "data", data)

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_frequencies(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class MultichannelSpectrogram:
    """Channel-stacked complex STFT, indexed (channel, frame, frequency)."""

    data: np.ndarray
    sample_rate: int
    config: StftConfig
    num_samples: int
    layout: tuple

    def __post_init__(self):
        data = _readonly(self.data, np.complex128)
        if data.ndim != 3:
            raise ValueError(
                f"expected (channels, frames, frequencies), got shape {data.shape}"
            )
        if data.shape[2] != self.config.num_frequencies:
            raise ValueError(
                f"{data.shape[2]} frequency bins, config implies "
                f"{self.config.num_frequencies}"
            )
        layout = tuple(self.layout)
        if len(layout) != data.shape[0]:
            raise ValueError(
                f"layout has {len(layout)} labels for {data.shape[0]} channels"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "layout", layout)

    @property
    def num_channels(self):
        return self.data.shape[0]

    @property
    def num_frames(self):
        return self.data.shape[1]

    @property
    def num_frequencies(self):
        return self.data.shape[2]

    def channel(self, label):
        return Spectrogram(
            self.data[self.layout.index(label)],
            self.sample_rate,
            self.config,
            self.num_samples,
        )


def read_wav(path, expected_rate=None):
    """Read a PCM16 or float32 WAV file.

    PCM16 samples are normalized by 32768 so the positive full scale
    maps to 32767/32768. Other encodings are rejected.

    Parameters
    ----------
    path : path-like
    expected_rate : int, optional
        If given, a differing file rate raises (no resampling).

    Returns
    -------
    Waveform for mono files, MultichannelWaveform otherwise (channels
    labelled ch0, ch1, ... in file order).
    """
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_FULL_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise ValueError(
            f"unsupported WAV encoding {data.dtype} in {path} "
            f"(expected int16 or float32)"
        )
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if samples.ndim == 1:
        return Waveform(samples, rate)
    # scipy returns (samples, channels); stack channel-major
    layout = tuple(f"ch{i}" for i in range(samples.shape[1]))
    return MultichannelWaveform(samples.T, rate, layout)


def write_wav(path, signal, encoding="float32"):
    """Write a Waveform or MultichannelWaveform as WAV.

    float32 encoding round-trips bit-exactly through read_wav for
    float32-representable samples. PCM16 refuses samples outside
    [-1, 1] rather than clipping silently; exactly +1.0 saturates to
    32767.
    """
    if isinstance(signal, Waveform):
        data = signal.samples
    else:
        data = signal.data.T  # scipy expects (samples, channels)
    if encoding == "float32":
        wavfile.write(path, signal.sample_rate, data.astype(np.float32))
    elif encoding == "pcm16":
        peak = np.abs(data).max() if data.size else 0.0
        if peak > 1.0:
            raise ValueError(
                f"samples reach {peak:.6f}; PCM16 encoding would clip "
                f"(scale below 1.0 or use float32)"
            )
        scaled = np.floor(data * _PCM16_FULL_SCALE + 0.5)
        np.clip(scaled, -32768, 32767, out=scaled)
        wavfile.write(path, signal.sample_rate, scaled.astype(np.int16))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


def _frame(samples, cfg):
    padded = np.pad(samples, (cfg.pad_left, cfg.pad_right))
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.window_length)
    return frames[:: cfg.hop_length] * cfg.taper


def stft(signal, cfg=None):
    """Short-time Fourier transform.

    Parameters
    ----------
    signal : Waveform or MultichannelWaveform
    cfg : StftConfig, optional

    Returns
    -------
    Spectrogram or MultichannelSpectrogram with one-sided spectra,
    window_length // 2 + 1 bins.
    """
    cfg = cfg or StftConfig()
    if isinstance(signal, Waveform):
        data = np.fft.rfft(_frame(signal.samples, cfg), axis=-1)
        return Spectrogram(data, signal.sample_rate, cfg, signal.num_samples)
    data = np.stack([np.fft.rfft(_frame(ch, cfg), axis=-1) for ch in signal.data])
    return MultichannelSpectrogram(
        data, signal.sample_rate, cfg, signal.num_samples, signal.layout
    )


def _overlap_add(frames, cfg, length):
    num_frames = frames.shape[0]
    taper = cfg.taper
    padded_length = (num_frames - 1) * cfg.hop_length + cfg.window_length
    total = np.zeros(padded_length)
    envelope = np.zeros(padded_length)
    product = taper * taper
    synthesized = frames * taper
    for t in range(num_frames):
        start = t * cfg.hop_length
        total[start:start + cfg.window_length] += synthesized[t]
        envelope[start:start + cfg.window_length] += product
    total /= np.maximum(envelope, _ENVELOPE_FLOOR)
    out = total[cfg.pad_left:cfg.pad_left + length]
    if out.shape[0] < length:  # caller asked for more than was framed
        out = np.pad(out, (0, length - out.shape[0]))
    return out


def istft(spec, length=None):
    """Inverse STFT by envelope-normalized overlap-add.

    Parameters
    ----------
    spec : Spectrogram or MultichannelSpectrogram
    length : int, optional
        Output length in samples; defaults to the length of the signal
        the spectrogram was computed from.
    """
    cfg = spec.config
    if length is None:
        length = spec.num_samples
    if isinstance(spec, Spectrogram):
        frames = np.fft.irfft(spec.data, n=cfg.window_length, axis=-1)
        return Waveform(_overlap_add(frames, cfg, length), spec.sample_rate)
    channels = []
    for m in range(spec.num_channels):
        frames = np.fft.irfft(spec.data[m], n=cfg.window_length, axis=-1)
        channels.append(_overlap_add(frames, cfg, length))
    return MultichannelWaveform(np.stack(channels), spec.sample_rate, spec.layout)
