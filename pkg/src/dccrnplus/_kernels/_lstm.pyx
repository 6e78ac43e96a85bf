# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrence (forward and BPTT) for float32/float64.

Same contract as ``fallback.py``.  The per-step matrix products go through
the BLAS shipped with scipy.  The gate updates are small C loops over one
batch row; the nonlinearities are built on a branch-free polynomial exp so
the compiler can vectorize those loops (libm's scalar tanh was the
bottleneck).  Sigmoid and tanh from that exp carry an absolute error of a
few ulp of 1.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    #include <string.h>

    /* exp(x) = 2^n * e^r, |r| <= ln2/2, Taylor polynomial for e^r */
    static inline double dccrn_exp_d(double x) {
        x = x < -708.0 ? -708.0 : (x > 708.0 ? 708.0 : x);
        /* round to nearest with the 1.5*2^52 shift; n also sits in the low bits of kd */
        double kd = x * 1.4426950408889634 + 6755399441055744.0;
        double n = kd - 6755399441055744.0;
        double r = x - n * 0.6931471803691238 - n * 1.9082149292705877e-10;
        double p = 1.0 / 479001600.0;
        p = p * r + 1.0 / 39916800.0;
        p = p * r + 1.0 / 3628800.0;
        p = p * r + 1.0 / 362880.0;
        p = p * r + 1.0 / 40320.0;
        p = p * r + 1.0 / 5040.0;
        p = p * r + 1.0 / 720.0;
        p = p * r + 1.0 / 120.0;
        p = p * r + 1.0 / 24.0;
        p = p * r + 1.0 / 6.0;
        p = p * r + 0.5;
        p = p * r + 1.0;
        p = p * r + 1.0;
        int64_t bits;
        memcpy(&bits, &kd, sizeof bits);
        bits = (bits - INT64_C(0x4338000000000000) + 1023) << 52;
        double scale;
        memcpy(&scale, &bits, sizeof scale);
        return p * scale;
    }

    static inline float dccrn_exp_f(float x) {
        x = x < -87.0f ? -87.0f : (x > 87.0f ? 87.0f : x);
        float kd = x * 1.44269504f + 12582912.0f;
        float n = kd - 12582912.0f;
        float r = x - n * 0.693359375f - n * -2.12194440e-4f;
        float p = 1.0f / 40320.0f;
        p = p * r + 1.0f / 5040.0f;
        p = p * r + 1.0f / 720.0f;
        p = p * r + 1.0f / 120.0f;
        p = p * r + 1.0f / 24.0f;
        p = p * r + 1.0f / 6.0f;
        p = p * r + 0.5f;
        p = p * r + 1.0f;
        p = p * r + 1.0f;
        int32_t bits;
        memcpy(&bits, &kd, sizeof bits);
        bits = (bits - 0x4b400000 + 127) << 23;
        float scale;
        memcpy(&scale, &bits, sizeof scale);
        return p * scale;
    }

    #define DCCRN_DEFINE(T, SUF)                                                           \
    static inline T dccrn_sig_##SUF(T v) { return (T)1 / ((T)1 + dccrn_exp_##SUF(-v)); }    \
    static inline T dccrn_tanh_##SUF(T v) { return (T)2 * dccrn_sig_##SUF((T)2 * v) - (T)1; } \
    /* one batch row: activate the four gate blocks in place, advance c and h */          \
    static void dccrn_cell_##SUF(T *restrict g, const T *restrict cprev, T *restrict c,     \
                                 T *restrict h, Py_ssize_t H) {                             \
        T *gi = g, *gf = g + H, *gg = g + 2 * H, *go = g + 3 * H;                           \
        for (Py_ssize_t j = 0; j < H; j++) {                                                \
            T iv = dccrn_sig_##SUF(gi[j]);                                                  \
            T fv = dccrn_sig_##SUF(gf[j]);                                                  \
            T gv = dccrn_tanh_##SUF(gg[j]);                                                 \
            T ov = dccrn_sig_##SUF(go[j]);                                                  \
            T cv = fv * cprev[j] + iv * gv;                                                 \
            gi[j] = iv; gf[j] = fv; gg[j] = gv; go[j] = ov;                                 \
            c[j] = cv;                                                                      \
            h[j] = ov * dccrn_tanh_##SUF(cv);                                               \
        }                                                                                   \
    }                                                                                       \
    /* one batch row of BPTT: gate-preactivation grads, carry dc to the previous step */  \
    static void dccrn_cell_back_##SUF(const T *restrict g, const T *restrict c,             \
                                      const T *restrict cprev, const T *restrict dh,        \
                                      const T *restrict dh_next, T *restrict dc_next,       \
                                      T *restrict dx, Py_ssize_t H) {                       \
        const T *gi = g, *gf = g + H, *gg = g + 2 * H, *go = g + 3 * H;                     \
        for (Py_ssize_t j = 0; j < H; j++) {                                                \
            T iv = gi[j], fv = gf[j], gv = gg[j], ov = go[j];                               \
            T tc = dccrn_tanh_##SUF(c[j]);                                                  \
            T dht = dh[j] + dh_next[j];                                                     \
            T dct = dc_next[j] + dht * ov * ((T)1 - tc * tc);                               \
            dx[j] = dct * gv * iv * ((T)1 - iv);                                            \
            dx[H + j] = dct * cprev[j] * fv * ((T)1 - fv);                                  \
            dx[2 * H + j] = dct * iv * ((T)1 - gv * gv);                                    \
            dx[3 * H + j] = dht * tc * ov * ((T)1 - ov);                                    \
            dc_next[j] = dct * fv;                                                          \
        }                                                                                   \
    }

    DCCRN_DEFINE(float, f)
    DCCRN_DEFINE(double, d)
    """
    void dccrn_cell_f(float *g, const float *cprev, float *c, float *h, Py_ssize_t H) nogil
    void dccrn_cell_d(double *g, const double *cprev, double *c, double *h, Py_ssize_t H) nogil
    void dccrn_cell_back_f(const float *g, const float *c, const float *cprev, const float *dh,
                           const float *dh_next, float *dc_next, float *dx, Py_ssize_t H) nogil
    void dccrn_cell_back_d(const double *g, const double *c, const double *cprev, const double *dh,
                           const double *dh_next, double *dc_next, double *dx, Py_ssize_t H) nogil


cdef inline void _gemm(char *ta, char *tb, int m, int n, int k, floating *a, int lda,
                       floating *b, int ldb, floating beta, floating *c, int ldc) noexcept nogil:
    cdef float one_f = 1.0
    cdef double one_d = 1.0
    cdef float beta_f
    cdef double beta_d
    if floating is float:
        beta_f = beta
        sgemm(ta, tb, &m, &n, &k, &one_f, a, &lda, b, &ldb, &beta_f, c, &ldc)
    else:
        beta_d = beta
        dgemm(ta, tb, &m, &n, &k, &one_d, a, &lda, b, &ldb, &beta_d, c, &ldc)


def lstm_forward(floating[:, :, ::1] xw, floating[:, ::1] w_hh,
                 floating[:, ::1] h0, floating[:, ::1] c0):
    cdef Py_ssize_t t_len = xw.shape[0], b = xw.shape[1], four_h = xw.shape[2]
    cdef Py_ssize_t hidden = four_h // 4
    dtype = np.float32 if floating is float else np.float64
    h_arr = np.empty((t_len, b, hidden), dtype)
    c_arr = np.empty((t_len, b, hidden), dtype)
    g_arr = np.array(xw, dtype=dtype, copy=True)
    cdef floating[:, :, ::1] h = h_arr
    cdef floating[:, :, ::1] c = c_arr
    cdef floating[:, :, ::1] gates = g_arr
    cdef Py_ssize_t t, n
    cdef floating *hp
    cdef floating *cp
    if t_len == 0:
        return h_arr, c_arr, g_arr
    with nogil:
        for t in range(t_len):
            hp = &h0[0, 0] if t == 0 else &h[t - 1, 0, 0]
            cp = &c0[0, 0] if t == 0 else &c[t - 1, 0, 0]
            # gates[t] (B x 4H, row-major) += h_prev (B x H) @ w_hh (H x 4H)
            _gemm("N", "N", <int>four_h, <int>b, <int>hidden, &w_hh[0, 0], <int>four_h,
                  hp, <int>hidden, <floating>1.0, &gates[t, 0, 0], <int>four_h)
            for n in range(b):
                if floating is float:
                    dccrn_cell_f(&gates[t, n, 0], cp + n * hidden, &c[t, n, 0], &h[t, n, 0], hidden)
                else:
                    dccrn_cell_d(&gates[t, n, 0], cp + n * hidden, &c[t, n, 0], &h[t, n, 0], hidden)
    return h_arr, c_arr, g_arr


def lstm_backward(floating[:, :, ::1] dh, floating[:, :, ::1] gates, floating[:, :, ::1] c,
                  floating[:, ::1] c0, floating[:, ::1] w_hh):
    cdef Py_ssize_t t_len = dh.shape[0], b = dh.shape[1], hidden = dh.shape[2]
    cdef Py_ssize_t four_h = 4 * hidden
    dtype = np.float32 if floating is float else np.float64
    dxw_arr = np.empty((t_len, b, four_h), dtype)
    dh_next_arr = np.zeros((b, hidden), dtype)
    dc_next_arr = np.zeros((b, hidden), dtype)
    cdef floating[:, :, ::1] dxw = dxw_arr
    cdef floating[:, ::1] dh_next = dh_next_arr
    cdef floating[:, ::1] dc_next = dc_next_arr
    cdef Py_ssize_t t, n
    cdef floating *cprev
    if t_len == 0:
        return dxw_arr, dh_next_arr, dc_next_arr
    with nogil:
        for t in range(t_len - 1, -1, -1):
            for n in range(b):
                cprev = &c[t - 1, n, 0] if t > 0 else &c0[n, 0]
                if floating is float:
                    dccrn_cell_back_f(&gates[t, n, 0], &c[t, n, 0], cprev, &dh[t, n, 0],
                                      &dh_next[n, 0], &dc_next[n, 0], &dxw[t, n, 0], hidden)
                else:
                    dccrn_cell_back_d(&gates[t, n, 0], &c[t, n, 0], cprev, &dh[t, n, 0],
                                      &dh_next[n, 0], &dc_next[n, 0], &dxw[t, n, 0], hidden)
            # dh_next (B x H) = dxw[t] (B x 4H) @ w_hh.T (4H x H)
            _gemm("T", "N", <int>hidden, <int>b, <int>four_h, &w_hh[0, 0], <int>four_h,
                  &dxw[t, 0, 0], <int>four_h, <floating>0.0, &dh_next[0, 0], <int>hidden)
    return dxw_arr, dh_next_arr, dc_next_arr
