# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM sequence kernels (hot path).

Same contract as ``_kernels_py``: gate layout (input, forget, candidate,
output) along the 4H axis; float64 throughout. Matrix products go through
BLAS; only the per-step recurrence and gate nonlinearities are hand loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    return 1.0 / (1.0 + exp(-z))


cdef inline void _rowmajor_matvec_acc(double[:, ::1] A, double[::1] x,
                                      double[::1] y) nogil:
    # y += A @ x for C-ordered A, via BLAS on the Fortran-order transpose
    cdef int m = <int> A.shape[0]
    cdef int n = <int> A.shape[1]
    cdef double one = 1.0
    cdef int inc = 1
    dgemv("T", &n, &m, &one, &A[0, 0], &n, &x[0], &inc, &one, &y[0], &inc)


cdef inline void _rowmajor_matvec_t(double[:, ::1] A, double[::1] x,
                                    double[::1] y) nogil:
    # y = A.T @ x for C-ordered A
    cdef int m = <int> A.shape[0]
    cdef int n = <int> A.shape[1]
    cdef double one = 1.0
    cdef double zero = 0.0
    cdef int inc = 1
    dgemv("N", &n, &m, &one, &A[0, 0], &n, &x[0], &inc, &zero, &y[0], &inc)


def lstm_forward(double[:, ::1] Wx, double[:, ::1] Wh, double[::1] b,
                 double[:, ::1] Wo, double[::1] bo,
                 double[:, ::1] X, double[::1] h0, double[::1] c0):
    cdef Py_ssize_t T = X.shape[0]
    cdef Py_ssize_t H = Wh.shape[1]

    # input contributions for the whole sequence in one BLAS call
    Z_arr = np.asarray(X) @ np.asarray(Wx).T + np.asarray(b)

    I_arr = np.empty((T, H))
    F_arr = np.empty((T, H))
    G_arr = np.empty((T, H))
    O_arr = np.empty((T, H))
    C_arr = np.empty((T, H))
    Hs_arr = np.empty((T, H))
    TC_arr = np.empty((T, H))

    cdef double[:, ::1] Z = Z_arr
    cdef double[:, ::1] I = I_arr
    cdef double[:, ::1] F = F_arr
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] O = O_arr
    cdef double[:, ::1] C = C_arr
    cdef double[:, ::1] Hs = Hs_arr
    cdef double[:, ::1] TC = TC_arr

    h_buf = np.asarray(h0).copy()
    c_buf = np.asarray(c0).copy()
    cdef double[::1] h = h_buf
    cdef double[::1] c = c_buf

    cdef Py_ssize_t t, j
    with nogil:
        for t in range(T):
            _rowmajor_matvec_acc(Wh, h, Z[t])
            for j in range(H):
                I[t, j] = _sigmoid(Z[t, j])
                F[t, j] = _sigmoid(Z[t, H + j])
                G[t, j] = tanh(Z[t, 2 * H + j])
                O[t, j] = _sigmoid(Z[t, 3 * H + j])
                c[j] = F[t, j] * c[j] + I[t, j] * G[t, j]
                C[t, j] = c[j]
                TC[t, j] = tanh(c[j])
                h[j] = O[t, j] * TC[t, j]
                Hs[t, j] = h[j]

    Y_arr = Hs_arr @ np.asarray(Wo).T + np.asarray(bo)
    cache = {"I": I_arr, "F": F_arr, "G": G_arr, "O": O_arr, "C": C_arr,
             "Hs": Hs_arr, "TC": TC_arr,
             "h0": np.asarray(h0).copy(), "c0": np.asarray(c0).copy()}
    return Y_arr, cache


def lstm_backward(double[:, ::1] Wx, double[:, ::1] Wh, double[:, ::1] Wo,
                  double[:, ::1] X, cache, double[:, ::1] dY):
    cdef double[:, ::1] I = cache["I"]
    cdef double[:, ::1] F = cache["F"]
    cdef double[:, ::1] G = cache["G"]
    cdef double[:, ::1] O = cache["O"]
    cdef double[:, ::1] C = cache["C"]
    cdef double[:, ::1] TC = cache["TC"]
    Hs_arr = cache["Hs"]
    cdef double[::1] c0 = cache["c0"]

    cdef Py_ssize_t T = Hs_arr.shape[0]
    cdef Py_ssize_t H = Hs_arr.shape[1]

    dY_arr = np.asarray(dY)
    dWo_arr = dY_arr.T @ Hs_arr
    dbo_arr = dY_arr.sum(axis=0)
    dHs_arr = dY_arr @ np.asarray(Wo)
    dZ_arr = np.empty((T, 4 * H))

    cdef double[:, ::1] dHs = dHs_arr
    cdef double[:, ::1] dZ = dZ_arr

    dh_next_buf = np.zeros(H)
    dc_next_buf = np.zeros(H)
    cdef double[::1] dh_next = dh_next_buf
    cdef double[::1] dc_next = dc_next_buf

    cdef Py_ssize_t t, j
    cdef double dh, dc, cprev

    with nogil:
        for t in range(T - 1, -1, -1):
            for j in range(H):
                dh = dHs[t, j] + dh_next[j]
                cprev = C[t - 1, j] if t > 0 else c0[j]
                dc = dh * O[t, j] * (1.0 - TC[t, j] * TC[t, j]) + dc_next[j]
                dZ[t, j] = dc * G[t, j] * I[t, j] * (1.0 - I[t, j])
                dZ[t, H + j] = dc * cprev * F[t, j] * (1.0 - F[t, j])
                dZ[t, 2 * H + j] = dc * I[t, j] * (1.0 - G[t, j] * G[t, j])
                dZ[t, 3 * H + j] = (dh * TC[t, j] * O[t, j]
                                    * (1.0 - O[t, j]))
                dc_next[j] = dc * F[t, j]
            _rowmajor_matvec_t(Wh, dZ[t], dh_next)

    Hprev = np.vstack([np.asarray(cache["h0"])[None, :], Hs_arr[:-1]])
    dWx_arr = dZ_arr.T @ np.asarray(X)
    dWh_arr = dZ_arr.T @ Hprev
    db_arr = dZ_arr.sum(axis=0)

    return {"Wx": dWx_arr, "Wh": dWh_arr, "b": db_arr,
            "Wo": dWo_arr, "bo": dbo_arr}
