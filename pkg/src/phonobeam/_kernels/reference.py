"""Pure numpy/scipy kernels.

These are the reference implementations of the two hot loops of the
toolkit: mask-weighted covariance accumulation and the per-frequency
generalized eigendecomposition. The compiled extension in ``_compiled.pyx``
implements the same contracts; either backend may be active at runtime.
"""

import numpy as np
import scipy.linalg


class GevdError(np.linalg.LinAlgError):
    """Generalized eigendecomposition failed at one frequency bin."""

    def __init__(self, freq_index, detail=""):
        self.freq_index = int(freq_index)
        msg = f"generalized eigendecomposition failed at frequency bin {freq_index}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def weighted_covariance(stack, weights):
    """Accumulate per-frequency weighted covariance matrices.

    Parameters
    ----------
    stack : np.ndarray
        Complex spectrogram stack, shape (channels, frames, freqs).
    weights : np.ndarray
        Real frame weights, shape (frames, freqs).

    Returns
    -------
    np.ndarray
        Shape (freqs, channels, channels); entry (f, m, n) equals
        ``1/T * sum_t weights[t, f] * stack[m, t, f] * conj(stack[n, t, f])``.
    """
    num_frames = stack.shape[1]
    out = np.einsum("tf,mtf,ntf->fmn", weights, stack, stack.conj(), optimize=True)
    out /= num_frames
    return out


def gevd(a, b):
    """Solve ``a q = lam * b q`` independently at every frequency.

    Parameters
    ----------
    a, b : np.ndarray
        Hermitian matrices, shape (freqs, M, M); ``b`` positive definite.

    Returns
    -------
    (np.ndarray, np.ndarray)
        Eigenvalues (freqs, M) in descending order and eigenvectors
        (freqs, M, M) as columns, normalized so ``Q^H b Q = I``.

    Raises
    ------
    GevdError
        If the solver fails at some frequency (carries ``freq_index``).
    """
    num_freqs, num_ch = a.shape[0], a.shape[1]
    vals = np.empty((num_freqs, num_ch))
    vecs = np.empty((num_freqs, num_ch, num_ch), dtype=np.complex128)
    for f in range(num_freqs):
        try:
            w, v = scipy.linalg.eigh(a[f], b[f])
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise GevdError(f, str(exc)) from exc
        vals[f] = w[::-1]
        vecs[f] = v[:, ::-1]
    return vals, vecs
