# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled quadrature-point kernel.

Same arithmetic as ``element.qp_core_numpy`` but carried out point by point
with fixed-size second-order jets (value, 14 first and 14x14 second
derivatives) stored in flat C arrays.  Jet operations take the number of
active leading seeds ``n`` and fill only the upper triangle of the Hessian;
quantities of F alone use n = 9.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.string cimport memset

cnp.import_array()

cdef enum:
    D = 14
    SZ = 211  # 1 + D + D * D


cdef inline void j_const(double* a, double c) noexcept nogil:
    memset(a, 0, SZ * sizeof(double))
    a[0] = c


cdef inline void j_var(double* a, double c, int k) noexcept nogil:
    j_const(a, c)
    a[1 + k] = 1.0


cdef inline void j_axpy(double s, double* a, double* out, int n) noexcept nogil:
    # out += s * a
    cdef int i, j
    cdef double* ah = a + 1 + D
    cdef double* oh = out + 1 + D
    out[0] += s * a[0]
    for i in range(n):
        out[1 + i] += s * a[1 + i]
        for j in range(i, n):
            oh[i * D + j] += s * ah[i * D + j]


cdef inline void j_mul(double* a, double* b, double* out, int n) noexcept nogil:
    cdef int i, j
    cdef double av = a[0], bv = b[0]
    cdef double* ag = a + 1
    cdef double* bg = b + 1
    cdef double* ah = a + 1 + D
    cdef double* bh = b + 1 + D
    cdef double* oh = out + 1 + D
    for i in range(n):
        for j in range(i, n):
            oh[i * D + j] = av * bh[i * D + j] + bv * ah[i * D + j] + ag[i] * bg[j] + bg[i] * ag[j]
    for i in range(n):
        out[1 + i] = av * bg[i] + bv * ag[i]
    out[0] = av * bv


cdef inline void j_chain(double* a, double f0, double f1, double f2, double* out, int n) noexcept nogil:
    # out = g(a) with g, g', g'' given at a's value
    cdef int i, j
    cdef double* ag = a + 1
    cdef double* ah = a + 1 + D
    cdef double* oh = out + 1 + D
    for i in range(n):
        for j in range(i, n):
            oh[i * D + j] = f1 * ah[i * D + j] + f2 * ag[i] * ag[j]
    for i in range(n):
        out[1 + i] = f1 * ag[i]
    out[0] = f0


cdef inline void j_mul_acc(double s, double* a, double* b, double* out, double* tmp, int n) noexcept nogil:
    # out += s * a * b
    j_mul(a, b, tmp, n)
    j_axpy(s, tmp, out, n)


def qp_core(double[:, ::1] F9, double[::1] phi, double[:, ::1] gphi, double[::1] kappa,
            double[::1] Wv, double[:, ::1] Wg, double[:, :, ::1] Wh,
            double[::1] f, double[::1] f1, double[::1] f2,
            double c_d, double beta_d, double coef):
    cdef Py_ssize_t n = F9.shape[0]
    grad = np.empty((n, D))
    hess = np.empty((n, D, D))
    qv = np.empty(n)
    dq = np.empty((n, D))
    cdef double[:, ::1] g_out = grad
    cdef double[:, :, ::1] h_out = hess
    cdef double[::1] q_out = qv
    cdef double[:, ::1] dq_out = dq

    cdef double Fj[9 * SZ]
    cdef double Cj[6 * SZ]  # C00 C11 C22 C01 C02 C12
    cdef double Kj[6 * SZ]  # cofactor, same ordering
    cdef double I1[SZ]
    cdef double I2[SZ]
    cdef double I3[SZ]
    cdef double Jj[SZ]
    cdef double W[SZ]
    cdef double psi[SZ]
    cdef double tmp[SZ]
    cdef double t2[SZ]
    cdef double t3[SZ]
    cdef double t4[SZ]
    cdef double gj[3 * SZ]
    cdef double* u[3]
    cdef double* ph
    cdef int ci[6]
    cdef int cj[6]
    cdef int sym[9]
    cdef Py_ssize_t p
    cdef int a, b, i, j, k
    cdef double det, inv, s, fv, r
    ci[:] = [0, 1, 2, 0, 0, 1]
    cj[:] = [0, 1, 2, 1, 2, 2]
    sym[:] = [0, 3, 4, 3, 1, 5, 4, 5, 2]

    with nogil:
        for p in range(n):
            for a in range(9):
                j_var(Fj + a * SZ, F9[p, a], a)
            for a in range(3):
                j_var(gj + a * SZ, gphi[p, a], 10 + a)

            # C_ij = sum_k F_ki F_kj
            for a in range(6):
                i = ci[a]
                j = cj[a]
                j_const(Cj + a * SZ, 0.0)
                for k in range(3):
                    j_mul_acc(1.0, Fj + (3 * k + i) * SZ, Fj + (3 * k + j) * SZ, Cj + a * SZ, tmp, 9)
            # cofactor of the symmetric C
            # K00 = C11 C22 - C12^2, K11 = C00 C22 - C02^2, K22 = C00 C11 - C01^2
            # K01 = C02 C12 - C01 C22, K02 = C01 C12 - C02 C11, K12 = C01 C02 - C00 C12
            for a in range(6):
                j_const(Kj + a * SZ, 0.0)
            j_mul(Cj + 1 * SZ, Cj + 2 * SZ, Kj + 0 * SZ, 9)
            j_mul_acc(-1.0, Cj + 5 * SZ, Cj + 5 * SZ, Kj + 0 * SZ, tmp, 9)
            j_mul(Cj + 0 * SZ, Cj + 2 * SZ, Kj + 1 * SZ, 9)
            j_mul_acc(-1.0, Cj + 4 * SZ, Cj + 4 * SZ, Kj + 1 * SZ, tmp, 9)
            j_mul(Cj + 0 * SZ, Cj + 1 * SZ, Kj + 2 * SZ, 9)
            j_mul_acc(-1.0, Cj + 3 * SZ, Cj + 3 * SZ, Kj + 2 * SZ, tmp, 9)
            j_mul(Cj + 4 * SZ, Cj + 5 * SZ, Kj + 3 * SZ, 9)
            j_mul_acc(-1.0, Cj + 3 * SZ, Cj + 2 * SZ, Kj + 3 * SZ, tmp, 9)
            j_mul(Cj + 3 * SZ, Cj + 5 * SZ, Kj + 4 * SZ, 9)
            j_mul_acc(-1.0, Cj + 4 * SZ, Cj + 1 * SZ, Kj + 4 * SZ, tmp, 9)
            j_mul(Cj + 3 * SZ, Cj + 4 * SZ, Kj + 5 * SZ, 9)
            j_mul_acc(-1.0, Cj + 0 * SZ, Cj + 5 * SZ, Kj + 5 * SZ, tmp, 9)

            j_const(I1, 0.0)
            j_const(I2, 0.0)
            j_const(I3, 0.0)
            j_const(Jj, 0.0)
            for a in range(3):
                j_axpy(1.0, Cj + a * SZ, I1, 9)
                j_axpy(1.0, Kj + a * SZ, I2, 9)
                j_mul_acc(1.0, Cj + sym[a] * SZ, Kj + sym[a] * SZ, I3, tmp, 9)
            det = sqrt(I3[0])
            j_chain(I3, det, 0.5 / det, -0.25 / (det * det * det), Jj, 9)

            # compose the elastic potential onto (I1, I2, J)
            u[0] = I1
            u[1] = I2
            u[2] = Jj
            j_const(W, Wv[p])
            for a in range(3):
                j_axpy(Wg[p, a], u[a], W, 9)
                for b in range(3):
                    s = Wh[p, a, b]
                    for i in range(9):
                        for j in range(i, 9):
                            W[1 + D + i * D + j] += s * u[a][1 + i] * u[b][1 + j]
            W[0] = Wv[p]  # the axpy calls above also accumulated values

            # f(kappa) W(F), kappa being seed 13
            fv = f[p]
            j_const(psi, 0.0)
            j_axpy(fv, W, psi, 9)
            ph = psi + 1 + D
            psi[1 + 13] = f1[p] * W[0]
            for i in range(9):
                ph[i * D + 13] = f1[p] * W[1 + i]
            ph[13 * D + 13] = f2[p] * W[0]

            if c_d != 0.0:
                # 0.5 c_d g . cof(C) . g / I3 over seeds 0..12
                j_const(t2, 0.0)
                for a in range(3):
                    for b in range(3):
                        j_mul(gj + a * SZ, gj + b * SZ, t3, 13)
                        j_mul_acc(1.0, Kj + sym[3 * a + b] * SZ, t3, t2, t4, 13)
                inv = 1.0 / I3[0]
                j_const(t3, 0.0)
                j_chain(I3, inv, -inv * inv, 2.0 * inv * inv * inv, t3, 9)
                j_mul_acc(0.5 * c_d, t2, t3, psi, t4, 13)
            if beta_d != 0.0:
                r = phi[p] - kappa[p]
                psi[0] += 0.5 * beta_d * r * r
                psi[1 + 9] += beta_d * r
                psi[1 + 13] -= beta_d * r
                ph[9 * D + 9] += beta_d
                ph[9 * D + 13] -= beta_d
                ph[13 * D + 13] += beta_d

            for i in range(D):
                g_out[p, i] = psi[1 + i]
                for j in range(i, D):
                    h_out[p, i, j] = ph[i * D + j]
                    h_out[p, j, i] = ph[i * D + j]

            if coef != 0.0:
                # q = W + coef (phi - kappa) / f, first order only
                s = phi[p] - kappa[p]
                q_out[p] = W[0] + coef * s / fv
                for i in range(D):
                    dq_out[p, i] = W[1 + i]
                dq_out[p, 9] += coef / fv
                dq_out[p, 13] += coef * (-1.0 / fv - s * f1[p] / (fv * fv))
            else:
                q_out[p] = W[0]
                for i in range(D):
                    dq_out[p, i] = W[1 + i]
    return grad, hess, qv, dq
