"""Mask-driven covariance estimation and the three spatial filters.

Covariances follow the mask-weighted average R(f) = (1/T) sum_t
m(t,f) X(t,f) X(t,f)^H. All filters are computed once per utterance
(one weight vector per frequency) from those whole-utterance averages.

Inversions use light trace-relative diagonal loading; the loaded solve
is then polished with two iterative-refinement steps against the
unloaded system, so solutions satisfy the original normal equations to
near machine precision whenever the unloaded matrix is solvable.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from ._kernels import GevdError
from .audio import MultichannelSpectrogram, Spectrogram, istft, stft
from .scene import BINAURAL_LAYOUT

logger = logging.getLogger(__name__)

ALGORITHMS = ("mvdr", "mwf", "gevd_mwf")

# Stack orders per ear of interest: own front microphone first, which
# makes index 0 the reference channel of every stack.
EAR_STACKS = {
    "L": ("L1", "L2", "R1", "R2"),
    "R": ("R1", "R2", "L1", "L2"),
}

LOADING_RELATIVE = 1e-6
LOADING_ABSOLUTE = 1e-12
MASK_FLOOR = 1e-12


@dataclass(frozen=True)
class Mask:
    """Real (frame, frequency) weights in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"expected (frames, frequencies), got shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError(
                f"mask values outside [0, 1]: min {values.min()}, max {values.max()}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def complement(self):
        return Mask(1.0 - self.values)


@dataclass(frozen=True)
class CovarianceField:
    """Per-frequency M x M Hermitian matrices, shape (F, M, M)."""

    matrices: np.ndarray
    num_frames: int

    def __post_init__(self):
        matrices = np.array(self.matrices, dtype=np.complex128)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise ValueError(f"expected (F, M, M), got shape {matrices.shape}")
        matrices.setflags(write=False)
        object.__setattr__(self, "matrices", matrices)

    @property
    def num_channels(self):
        return self.matrices.shape[1]

    @property
    def num_frequencies(self):
        return self.matrices.shape[0]

    def validate(self, hermitian_tol=1e-12, psd_tol=1e-10):
        """Check Hermitian symmetry and positive semidefiniteness."""
        for f, matrix in enumerate(self.matrices):
            scale = np.linalg.norm(matrix)
            asym = np.linalg.norm(matrix - matrix.conj().T)
            if asym > hermitian_tol * max(scale, 1e-300):
                raise ValueError(f"matrix at frequency {f} is not Hermitian ({asym:.2e})")
            trace = matrix.trace().real
            smallest = np.linalg.eigvalsh(matrix)[0]
            if smallest < -psd_tol * max(trace, 1e-300):
                raise ValueError(
                    f"matrix at frequency {f} has eigenvalue {smallest:.2e} "
                    f"below the PSD tolerance"
                )


@dataclass(frozen=True)
class BeamformerWeights:
    """Per-frequency complex weight vectors, shape (F, M)."""

    weights: np.ndarray
    reference_channel: int
    algorithm: str
    steering: Optional[np.ndarray] = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.complex128)
        if weights.ndim != 2:
            raise ValueError(f"expected (F, M), got shape {weights.shape}")
        if not np.isfinite(weights.view(np.float64)).all():
            raise ValueError("non-finite beamformer weights")
        if not 0 <= self.reference_channel < weights.shape[1]:
            raise ValueError(f"reference channel {self.reference_channel} out of range")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        if self.steering is not None:
            steering = np.array(self.steering, dtype=np.complex128)
            steering.setflags(write=False)
            object.__setattr__(self, "steering", steering)


def oracle_mask(speech_ref, noise_ref, floor=MASK_FLOOR):
    """Ideal ratio mask from the true image spectrograms.

    M_S(t,f) = |S|^2 / (|S|^2 + |N|^2 + floor), computed at the stack's
    reference channel.
    """
    if speech_ref.data.shape != noise_ref.data.shape:
        raise ValueError(
            f"spectrogram shapes differ: {speech_ref.data.shape} vs "
            f"{noise_ref.data.shape}"
        )
    speech_power = np.abs(speech_ref.data) ** 2
    noise_power = np.abs(noise_ref.data) ** 2
    return Mask(speech_power / (speech_power + noise_power + floor))


def masked_covariance(X, mask):
    """Mask-weighted covariance average over all frames, per frequency."""
    if mask.values.shape != X.data.shape[1:]:
        raise ValueError(
            f"mask shape {mask.values.shape} does not match frames/frequencies "
            f"{X.data.shape[1:]}"
        )
    if X.num_frames == 0:
        raise ValueError("no frames to average")
    matrices = _kernels.weighted_covariance(X.data, mask.values)
    # enforce exact Hermitian symmetry regardless of backend rounding
    matrices = 0.5 * (matrices + matrices.conj().transpose(0, 2, 1))
    return CovarianceField(matrices, X.num_frames)


def _loaded(matrices):
    m = matrices.shape[-1]
    traces = np.einsum("fmm->f", matrices).real
    shift = LOADING_RELATIVE * traces / m + LOADING_ABSOLUTE
    return matrices + shift[:, None, None] * np.eye(m)


def _solve_vectors(matrices, vectors):
    # batched solve with a stack of right-hand vectors, not matrices
    return np.linalg.solve(matrices, vectors[:, :, None])[:, :, 0]


def _refined_solve(matrices, rhs, refinements=2):
    """Solve matrices @ w = rhs via the loaded system, then polish.

    Each refinement step solves for the residual of the *unloaded*
    system, shrinking the loading-induced bias quadratically.
    """
    loaded = _loaded(matrices)
    w = _solve_vectors(loaded, rhs)
    for _ in range(refinements):
        residual = rhs - np.einsum("fmn,fn->fm", matrices, w)
        w = w + _solve_vectors(loaded, residual)
    return w


def steering_from_covariance(R_S, reference=0):
    """Principal eigenvector of the speech covariance at each frequency.

    Unit norm, phase rotated so the reference-channel entry is real and
    non-negative. Eigenvalue ties are broken toward the eigenvector
    whose largest-magnitude entry sits at the lowest channel index. An
    all-zero matrix falls back to the reference basis vector.
    """
    F, M = R_S.num_frequencies, R_S.num_channels
    steering = np.zeros((F, M), dtype=np.complex128)
    fallback_count = 0
    for f, matrix in enumerate(R_S.matrices):
        if not np.any(matrix):
            steering[f, reference] = 1.0
            fallback_count += 1
            continue
        values, vectors = np.linalg.eigh(matrix)
        top = values >= values[-1] - 1e-9 * max(abs(values[-1]), 1e-300)
        candidates = vectors[:, top]
        anchor_rows = np.abs(candidates).argmax(axis=0)
        choice = int(anchor_rows.argmin())
        vector = candidates[:, choice]
        vector = vector / np.linalg.norm(vector)
        anchor = vector[reference]
        if abs(anchor) < 1e-12:
            anchor = vector[np.abs(vector).argmax()]
        vector = vector * (anchor.conjugate() / abs(anchor))
        steering[f] = vector
    if fallback_count:
        logger.warning(
            "steering fell back to the reference basis vector at %d of %d "
            "frequencies (zero speech covariance)", fallback_count, F,
        )
    return steering


def mvdr_weights(R_N, steering, reference=0):
    """Minimum variance distortionless response filter.

    W = R_N^-1 d / (d^H R_N^-1 d) per frequency, with loaded noise
    covariance; the construction gives W^H d = 1 identically.
    """
    solved = _solve_vectors(_loaded(R_N.matrices), steering)
    denominators = np.einsum("fm,fm->f", steering.conj(), solved)
    weights = solved / denominators[:, None]
    if not np.isfinite(weights.view(np.float64)).all():
        bad = np.flatnonzero(
            ~np.isfinite(weights.view(np.float64)).reshape(weights.shape[0], -1).all(axis=1)
        )
        raise ValueError(f"MVDR weights non-finite at frequencies {bad.tolist()}")
    return BeamformerWeights(weights, reference, "mvdr", steering=steering)


def mwf_weights(R_X, R_S, reference=0):
    """Multichannel Wiener filter W = R_X^-1 R_S e_ref per frequency."""
    if R_X.matrices.shape != R_S.matrices.shape:
        raise ValueError("covariance field shapes differ")
    rhs = R_S.matrices[:, :, reference]
    weights = _refined_solve(R_X.matrices, rhs)
    if not np.isfinite(weights.view(np.float64)).all():
        raise ValueError("MWF weights non-finite")
    return BeamformerWeights(weights, reference, "mwf")


def _rank_reduced_speech(R_X_matrices, loaded_noise, rank):
    """Speech covariance rebuilt from the top generalized modes.

    With eigenvectors normalized to Q^H B Q = I, the inverse factors are
    Q^-1 = Q^H B, so the reconstruction is B Q diag(max(lambda-1, 0))
    (B Q)^H over the leading `rank` modes.
    """
    values, vectors = _kernels.gevd(R_X_matrices, loaded_noise)
    gains = np.maximum(values[:, :rank] - 1.0, 0.0)
    basis = np.einsum("fmn,fnk->fmk", loaded_noise, vectors[:, :, :rank])
    return np.einsum("fmk,fk,fnk->fmn", basis, gains, basis.conj())


def gevd_mwf_weights(R_X, R_N, rank=1, reference=0):
    """Wiener filter on a rank-constrained speech covariance.

    Solves the generalized eigenproblem R_X q = lambda R_N q (noise side
    loaded), keeps the top `rank` modes with the max(lambda - 1, 0)
    clamp, and runs the Wiener solve on the rebuilt speech covariance.
    A frequency where the eigensolver fails falls back to the plain
    Wiener filter with R_S = R_X - R_N there.
    """
    if R_X.matrices.shape != R_N.matrices.shape:
        raise ValueError("covariance field shapes differ")
    if not 1 <= rank <= R_X.num_channels:
        raise ValueError(f"rank must be in [1, {R_X.num_channels}], got {rank}")
    loaded_noise = _loaded(R_N.matrices)
    failed = []
    try:
        speech = _rank_reduced_speech(R_X.matrices, loaded_noise, rank)
    except GevdError:
        # isolate the failing frequencies and keep the rest
        F, M = R_X.num_frequencies, R_X.num_channels
        speech = np.zeros((F, M, M), dtype=np.complex128)
        for f in range(F):
            try:
                speech[f] = _rank_reduced_speech(
                    R_X.matrices[f : f + 1], loaded_noise[f : f + 1], rank
                )[0]
            except GevdError:
                failed.append(f)
                speech[f] = R_X.matrices[f] - R_N.matrices[f]
    if failed:
        logger.warning(
            "generalized eigendecomposition failed at frequencies %s; "
            "fell back to the plain Wiener form there", failed,
        )
    rhs = speech[:, :, reference]
    weights = _refined_solve(R_X.matrices, rhs)
    if not np.isfinite(weights.view(np.float64)).all():
        raise ValueError("GEVD-MWF weights non-finite")
    return BeamformerWeights(weights, reference, "gevd_mwf")


def apply_weights(W, X):
    """Filter the stacked spectrogram: S_hat(t,f) = W(f)^H X(:,t,f)."""
    if W.weights.shape != (X.num_frequencies, X.num_channels):
        raise ValueError(
            f"weights shaped {W.weights.shape} cannot filter a "
            f"{X.num_channels}-channel, {X.num_frequencies}-bin spectrogram"
        )
    data = np.einsum("fm,mtf->tf", W.weights.conj(), X.data)
    return Spectrogram(data, X.sample_rate, X.config, X.num_samples)


def _weights_for(algorithm, R_X, R_S, R_N, gevd_rank):
    if algorithm == "mvdr":
        return mvdr_weights(R_N, steering_from_covariance(R_S))
    if algorithm == "mwf":
        return mwf_weights(R_X, R_S)
    if algorithm == "gevd_mwf":
        return gevd_mwf_weights(R_X, R_N, rank=gevd_rank)
    raise ValueError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")


def enhance_binaural(scene, algorithm, stft_cfg=None, gevd_rank=1):
    """Run one filter per ear and return both time-domain estimates.

    Each ear stacks the channels with its own front microphone first,
    computes the oracle mask from the true images at that reference
    channel, estimates R_S / R_N / R_X from the mixture, and applies its
    filter. Weights are constant over the utterance.

    Returns
    -------
    (left, right) : pair of Waveform, each of scene length.
    """
    if set(scene.layout) != set(BINAURAL_LAYOUT):
        raise ValueError(f"scene layout {scene.layout} is not binaural {BINAURAL_LAYOUT}")
    estimates = {}
    for ear, order in EAR_STACKS.items():
        X = stft(scene.mixture.reordered(order), stft_cfg)
        speech_ref = stft(scene.speech_image.channel(order[0]), stft_cfg)
        noise_ref = stft(scene.noise_image.channel(order[0]), stft_cfg)
        mask = oracle_mask(speech_ref, noise_ref)
        R_S = masked_covariance(X, mask)
        R_N = masked_covariance(X, mask.complement())
        R_X = masked_covariance(X, Mask(np.ones_like(mask.values)))
        weights = _weights_for(algorithm, R_X, R_S, R_N, gevd_rank)
        estimates[ear] = istft(apply_weights(weights, X))
    return estimates["L"], estimates["R"]
