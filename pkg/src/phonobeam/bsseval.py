"""Projection-based error decomposition and the SDR/SIR/SAR ratios.

An estimate is split as s_target + e_interf + e_artif, where s_target
is its least-squares projection onto time shifts 0..L-1 of the speech
reference and e_interf extends the projection to the joint span of both
references. The normal equations have block-Toeplitz structure, so the
Gram matrix is assembled from FFT correlations; a relative diagonal
loading of 1e-10 keeps near-collinear shifted references solvable.

Segment scoring restricts the energies of the one full-utterance
decomposition to a sample window; it never re-projects per segment,
which would be ill-posed at phoneme durations.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len
from scipy.linalg import solve, toeplitz

from .audio import Waveform

DEFAULT_FILTER_LENGTH = 512
METRIC_CAP_DB = 100.0
GRAM_LOADING = 1e-10


@dataclass(frozen=True)
class Decomposition:
    """Error split of one estimate, all terms of length n_samples + L - 1.

    The components sum back to the (zero-padded) estimate exactly; the
    tail beyond n_samples is the projection filters' ring-out.
    """

    s_target: np.ndarray
    e_interf: np.ndarray
    e_artif: np.ndarray
    filter_length: int
    n_samples: int

    def __post_init__(self):
        for name in ("s_target", "e_interf", "e_artif"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        expected = self.n_samples + self.filter_length - 1
        if not (
            self.s_target.shape == self.e_interf.shape == self.e_artif.shape
            == (expected,)
        ):
            raise ValueError(
                f"component lengths must equal n_samples + filter_length - 1 "
                f"= {expected}"
            )


@dataclass(frozen=True)
class MetricTriple:
    """SDR/SIR/SAR in dB, each capped to [-100, +100]."""

    sdr_db: float
    sir_db: float
    sar_db: float


def _samples(signal):
    if isinstance(signal, Waveform):
        return signal.samples
    return np.asarray(signal, dtype=np.float64)


def _correlations(a, b, nfft):
    """Full cross-correlation c(k) = sum_v a[v] b[v+k] via one product.

    Index k wraps modulo nfft, so negative lags live at the top end.
    """
    return np.fft.irfft(np.fft.rfft(a, nfft).conj() * np.fft.rfft(b, nfft), nfft)


def _toeplitz_block(corr, L, nfft):
    # G[i, j] = c(i - j); first column walks positive lags, first row negative
    column = corr[np.arange(L) % nfft]
    row = corr[(-np.arange(L)) % nfft]
    return toeplitz(column, row)


def decompose(estimate, speech_ref, noise_ref, filter_length=DEFAULT_FILTER_LENGTH):
    """Project an estimate onto shifted copies of the two references.

    Parameters
    ----------
    estimate, speech_ref, noise_ref : Waveform or 1-D array
        Equal-length signals.
    filter_length : int
        Number of allowed shifts L (the distortion filter length).

    Returns
    -------
    Decomposition
    """
    est = _samples(estimate)
    s = _samples(speech_ref)
    nz = _samples(noise_ref)
    if not est.shape == s.shape == nz.shape:
        raise ValueError(
            f"signal lengths differ: estimate {est.shape[0]}, speech "
            f"{s.shape[0]}, noise {nz.shape[0]}"
        )
    if filter_length < 1:
        raise ValueError("filter_length must be at least 1")
    n = est.shape[0]
    if n == 0:
        raise ValueError("empty signals")
    L = filter_length

    nfft = next_fast_len(n + L)
    c_ss = _correlations(s, s, nfft)
    c_nn = _correlations(nz, nz, nfft)
    if c_ss[0] <= 0.0 or c_nn[0] <= 0.0:
        raise ValueError("references must both have nonzero energy")
    c_sn = _correlations(s, nz, nfft)
    d_s = _correlations(s, est, nfft)[:L]
    d_n = _correlations(nz, est, nfft)[:L]

    G_ss = _toeplitz_block(c_ss, L, nfft)
    G_nn = _toeplitz_block(c_nn, L, nfft)
    G_sn = _toeplitz_block(c_sn, L, nfft)

    loading = GRAM_LOADING * max(c_ss[0], c_nn[0])
    gram = np.block([[G_ss, G_sn], [G_sn.T, G_nn]])
    gram[np.diag_indices_from(gram)] += loading
    joint_coeffs = solve(gram, np.concatenate([d_s, d_n]), assume_a="pos")

    speech_gram = G_ss + (GRAM_LOADING * c_ss[0]) * np.eye(L)
    speech_coeffs = solve(speech_gram, d_s, assume_a="pos")

    padded = np.zeros(n + L - 1)
    padded[:n] = est
    s_target = np.convolve(s, speech_coeffs)
    joint = np.convolve(s, joint_coeffs[:L]) + np.convolve(nz, joint_coeffs[L:])
    e_interf = joint - s_target
    e_artif = padded - joint
    return Decomposition(s_target, e_interf, e_artif, L, n)


def _ratio_db(numerator, denominator):
    # zero target energy dominates: report the floor even if the
    # denominator is zero too
    if numerator <= 0.0:
        return -METRIC_CAP_DB
    if denominator <= 0.0:
        return METRIC_CAP_DB
    value = 10.0 * np.log10(numerator / denominator)
    return float(np.clip(value, -METRIC_CAP_DB, METRIC_CAP_DB))


def _metrics_from_arrays(s_target, e_interf, e_artif):
    target_energy = float(s_target @ s_target)
    distortion = e_interf + e_artif
    sdr = _ratio_db(target_energy, float(distortion @ distortion))
    sir = _ratio_db(target_energy, float(e_interf @ e_interf))
    wanted = s_target + e_interf
    sar = _ratio_db(float(wanted @ wanted), float(e_artif @ e_artif))
    return MetricTriple(sdr, sir, sar)


def metrics_from_decomposition(d):
    """SDR, SIR, SAR of the whole decomposition."""
    return _metrics_from_arrays(d.s_target, d.e_interf, d.e_artif)


def segment_metrics(d, start, end):
    """Metrics over the sample window [start, end) of the estimate.

    Component energies are restricted to the window; a window reaching
    n_samples also takes the projection tail, so the whole-signal
    window reproduces metrics_from_decomposition exactly.
    """
    if not 0 <= start < end <= d.n_samples:
        raise ValueError(
            f"segment [{start}, {end}) out of range for {d.n_samples} samples"
        )
    stop = d.s_target.shape[0] if end >= d.n_samples else end
    return _metrics_from_arrays(
        d.s_target[start:stop], d.e_interf[start:stop], d.e_artif[start:stop]
    )


def input_decomposition(scene, ear, filter_length=DEFAULT_FILTER_LENGTH):
    """Decompose the unprocessed reference-channel mixture.

    The mixture stands in for the estimate, so the resulting metrics
    describe the scene before any enhancement. The reference channel is
    the front microphone of the requested ear.
    """
    reference = {"L": "L1", "R": "R1"}[ear]
    return decompose(
        scene.mixture.channel(reference),
        scene.speech_image.channel(reference),
        scene.noise_image.channel(reference),
        filter_length,
    )


def input_metrics(scene, ear, filter_length=DEFAULT_FILTER_LENGTH):
    """Pre-enhancement SDR/SIR/SAR at one ear's reference microphone.

    The mixture lies in the joint span of the references, so SAR_in
    sits at the cap and SDR_in tracks SIR_in.
    """
    return metrics_from_decomposition(input_decomposition(scene, ear, filter_length))
