# Compiled fast paths for the mask-weighted covariance accumulation and the
# per-frequency generalized eigendecomposition. Same contracts as
# phonobeam._kernels.reference; see that module for the documented API.

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_lapack cimport zhegvd

from phonobeam._kernels.reference import GevdError

cnp.import_array()


def weighted_covariance(stack, weights):
    # const views: containers hand us read-only arrays
    cdef const double complex[:, :, ::1] x = np.ascontiguousarray(stack, dtype=np.complex128)
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t num_ch = x.shape[0]
    cdef Py_ssize_t num_frames = x.shape[1]
    cdef Py_ssize_t num_freqs = x.shape[2]
    if w.shape[0] != num_frames or w.shape[1] != num_freqs:
        raise ValueError("weights shape does not match the spectrogram stack")

    # Accumulate the upper triangle with frequency innermost (contiguous).
    acc_arr = np.zeros((num_ch, num_ch, num_freqs), dtype=np.complex128)
    cdef double complex[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t t, m, n, f
    with nogil:
        for t in range(num_frames):
            for m in range(num_ch):
                for n in range(m, num_ch):
                    for f in range(num_freqs):
                        acc[m, n, f] = acc[m, n, f] + (
                            w[t, f] * x[m, t, f] * x[n, t, f].conjugate()
                        )

    out_arr = np.empty((num_freqs, num_ch, num_ch), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef double inv_frames = 1.0 / num_frames
    with nogil:
        for m in range(num_ch):
            for n in range(m, num_ch):
                for f in range(num_freqs):
                    out[f, m, n] = acc[m, n, f] * inv_frames
                    if n != m:
                        out[f, n, m] = out[f, m, n].conjugate()
    return out_arr


def gevd(a, b):
    cdef const double complex[:, :, ::1] a_v = np.ascontiguousarray(
        a, dtype=np.complex128)
    cdef const double complex[:, :, ::1] b_v = np.ascontiguousarray(
        b, dtype=np.complex128)
    cdef int num_freqs = a_v.shape[0]
    cdef int n = a_v.shape[1]
    if a_v.shape[2] != n or b_v.shape[1] != n or b_v.shape[2] != n:
        raise ValueError("covariance fields must be square and equally sized")
    if b_v.shape[0] != num_freqs:
        raise ValueError("covariance fields must cover the same frequencies")

    vals_arr = np.empty((num_freqs, n), dtype=np.float64)
    vecs_arr = np.empty((num_freqs, n, n), dtype=np.complex128)
    cdef double[:, ::1] vals = vals_arr
    cdef double complex[:, :, ::1] vecs = vecs_arr

    # LAPACK zhegvd workspace minima for jobz='V'.
    cdef int lwork = 2 * n + n * n
    cdef int lrwork = 1 + 5 * n + 2 * n * n
    cdef int liwork = 3 + 5 * n
    cdef double complex[::1] af = np.empty(n * n, dtype=np.complex128)
    cdef double complex[::1] bf = np.empty(n * n, dtype=np.complex128)
    cdef double complex[::1] work = np.empty(lwork, dtype=np.complex128)
    cdef double[::1] w = np.empty(n, dtype=np.float64)
    cdef double[::1] rwork = np.empty(lrwork, dtype=np.float64)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)

    cdef int itype = 1
    cdef char jobz = b"V"
    cdef char uplo = b"L"
    cdef int info = 0
    cdef int f, i, j, failed_at = -1
    with nogil:
        for f in range(num_freqs):
            # Column-major copies for LAPACK.
            for j in range(n):
                for i in range(n):
                    af[i + j * n] = a_v[f, i, j]
                    bf[i + j * n] = b_v[f, i, j]
            zhegvd(&itype, &jobz, &uplo, &n, &af[0], &n, &bf[0], &n, &w[0],
                   &work[0], &lwork, &rwork[0], &lrwork, &iwork[0], &liwork,
                   &info)
            if info != 0:
                failed_at = f
                break
            for j in range(n):
                vals[f, j] = w[n - 1 - j]
                for i in range(n):
                    vecs[f, i, j] = af[i + (n - 1 - j) * n]
    if failed_at >= 0:
        raise GevdError(failed_at, f"LAPACK zhegvd info={info}")
    return vals_arr, vecs_arr
