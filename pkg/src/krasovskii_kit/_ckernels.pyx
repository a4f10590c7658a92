# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled hot kernels: cyclic Jacobi eigensolver, Hermite dense-output
evaluation, segment norms, and the RK4 stepping fast path for linear models
with pointwise delays.  Mirrors the `_pykernels` API."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, fmod, isfinite, sin, sqrt

cnp.import_array()

DEF JACOBI_MAX_SWEEPS = 100
DEF JACOBI_REL_TOL = 1e-12


def jacobi_eigh(double[:, ::1] S):
    """Cyclic Jacobi eigendecomposition; eigenvalues ascending."""
    cdef Py_ssize_t d = S.shape[0]
    A_arr = np.array(S, dtype=np.float64)
    V_arr = np.eye(d)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t p, q, i, sweep
    cdef double norm_f = 0.0, off_sq, apq, diff, theta, t, c, s, tol
    cdef double aip, aiq, vip, viq, app, aqq
    if d == 1:
        return np.diag(A_arr).copy(), V_arr
    for p in range(d):
        for q in range(d):
            norm_f += A[p, q] * A[p, q]
    norm_f = sqrt(norm_f)
    tol = JACOBI_REL_TOL * norm_f
    for sweep in range(JACOBI_MAX_SWEEPS):
        off_sq = 0.0
        for p in range(d - 1):
            for q in range(p + 1, d):
                off_sq += 2.0 * A[p, q] * A[p, q]
        if sqrt(off_sq) <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if fabs(apq) < 1e-36 * fabs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 if theta >= 0 else -1.0
                    t = t / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                app = A[p, p]
                aqq = A[q, q]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for i in range(d):
                    if i == p or i == q:
                        continue
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip - s * aiq
                    A[i, q] = s * aip + c * aiq
                    A[p, i] = A[i, p]
                    A[q, i] = A[i, q]
                for i in range(d):
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip - s * viq
                    V[i, q] = s * vip + c * viq
    w = np.diag(A_arr).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V_arr[:, order]


cdef inline Py_ssize_t _locate(const double[::1] knots, double t,
                               Py_ssize_t hi_seg) noexcept nogil:
    """Index of the segment containing t among segments 0..hi_seg."""
    cdef Py_ssize_t lo = 0, hi = hi_seg, mid
    if t <= knots[0]:
        return 0
    if t >= knots[hi_seg + 1]:
        return hi_seg
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if knots[mid] <= t:
            lo = mid
        else:
            hi = mid - 1
    return lo


cdef inline void _hermite_point(const double[::1] knots,
                                const double[:, ::1] Y,
                                const double[:, ::1] D,
                                double t, Py_ssize_t seg, bint want_der,
                                double* val, double* der) noexcept nogil:
    cdef double t0 = knots[seg]
    cdef double w = knots[seg + 1] - t0
    cdef double th = (t - t0) / w
    cdef double t2 = th * th
    cdef double t3 = t2 * th
    cdef double h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    cdef double h01 = -2.0 * t3 + 3.0 * t2
    cdef double h10 = t3 - 2.0 * t2 + th
    cdef double h11 = t3 - t2
    cdef double g00, g10, g11
    cdef Py_ssize_t j, n = Y.shape[1]
    for j in range(n):
        val[j] = (h00 * Y[seg, j] + h01 * Y[seg + 1, j]
                  + w * (h10 * D[seg, j] + h11 * D[seg + 1, j]))
    if want_der:
        g00 = (6.0 * t2 - 6.0 * th) / w
        g10 = 3.0 * t2 - 4.0 * th + 1.0
        g11 = 3.0 * t2 - 2.0 * th
        for j in range(n):
            der[j] = (g00 * Y[seg, j] - g00 * Y[seg + 1, j]
                      + g10 * D[seg, j] + g11 * D[seg + 1, j])


def hermite_eval(double[::1] knots, double[:, ::1] Y, double[:, ::1] D,
                 double[::1] tq, bint want_der=False):
    """Evaluate piecewise cubic-Hermite data at query times (clamped)."""
    cdef Py_ssize_t m = tq.shape[0], n = Y.shape[1]
    cdef Py_ssize_t hi_seg = knots.shape[0] - 2
    vals_arr = np.empty((m, n))
    cdef double[:, ::1] vals = vals_arr
    ders_arr = np.empty((m, n)) if want_der else None
    cdef double[:, ::1] ders = vals  # placeholder view
    if want_der:
        ders = ders_arr
    cdef Py_ssize_t i, seg
    cdef double t, lo = knots[0], hi = knots[knots.shape[0] - 1]
    for i in range(m):
        t = tq[i]
        if t < lo:
            t = lo
        elif t > hi:
            t = hi
        seg = _locate(knots, t, hi_seg)
        _hermite_point(knots, Y, D, t, seg, want_der,
                       &vals[i, 0], &ders[i, 0])
    return vals_arr, ders_arr


DEF SUP_SAMPLES = 9


def sup_norm_hermite(double[::1] knots, double[:, ::1] Y, double[:, ::1] D,
                     double a, double b):
    """sup of ||x(s)|| on [a, b]: per-segment sampling + parabolic polish."""
    cdef Py_ssize_t K = knots.shape[0] - 1, n = Y.shape[1]
    cdef double lo = knots[0], hi = knots[K]
    if a < lo:
        a = lo
    if b > hi:
        b = hi
    if b < a:
        raise ValueError("empty range for sup-norm")
    buf_arr = np.empty(n)
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t i0 = _locate(knots, a, K - 1)
    cdef Py_ssize_t i1 = _locate(knots, b, K - 1)
    cdef Py_ssize_t seg, j, r, jbest
    cdef double best = 0.0, s0, s1, dt, t, qv, qm, q0, qp, den, tstar
    cdef double q[SUP_SAMPLES]
    for seg in range(i0, i1 + 1):
        s0 = knots[seg] if knots[seg] > a else a
        s1 = knots[seg + 1] if knots[seg + 1] < b else b
        if s1 < s0:
            continue
        dt = (s1 - s0) / (SUP_SAMPLES - 1)
        jbest = 0
        for r in range(SUP_SAMPLES):
            t = s0 + dt * r
            _hermite_point(knots, Y, D, t, seg, False, &buf[0], &buf[0])
            qv = 0.0
            for j in range(n):
                qv += buf[j] * buf[j]
            q[r] = qv
            if qv > q[jbest]:
                jbest = r
            if qv > best:
                best = qv
        if jbest == 0 or jbest == SUP_SAMPLES - 1 or dt == 0.0:
            continue
        qm = q[jbest - 1]
        q0 = q[jbest]
        qp = q[jbest + 1]
        den = qm - 2.0 * q0 + qp
        if den >= 0.0:
            continue
        tstar = s0 + dt * jbest + 0.5 * dt * (qm - qp) / den
        if tstar < s0 or tstar > s1:
            continue
        _hermite_point(knots, Y, D, tstar, seg, False, &buf[0], &buf[0])
        qv = 0.0
        for j in range(n):
            qv += buf[j] * buf[j]
        if qv > best:
            best = qv
    return sqrt(best)


def dsq_hermite(double[::1] knots, double[:, ::1] Y, double[:, ::1] D,
                double a, double b):
    """Integral of ||dx/ds||^2 on [a, b] (3-point Gauss per segment, exact)."""
    cdef Py_ssize_t K = knots.shape[0] - 1, n = Y.shape[1]
    cdef double lo = knots[0], hi = knots[K]
    cdef double gx[3]
    cdef double gw[3]
    gx[0] = 0.5 - sqrt(15.0) / 10.0
    gx[1] = 0.5
    gx[2] = 0.5 + sqrt(15.0) / 10.0
    gw[0] = 5.0 / 18.0
    gw[1] = 8.0 / 18.0
    gw[2] = 5.0 / 18.0
    if a < lo:
        a = lo
    if b > hi:
        b = hi
    if b <= a:
        return 0.0
    val_arr = np.empty(n)
    der_arr = np.empty(n)
    cdef double[::1] val = val_arr
    cdef double[::1] der = der_arr
    cdef Py_ssize_t i0 = _locate(knots, a, K - 1)
    cdef Py_ssize_t i1 = _locate(knots, b, K - 1)
    cdef Py_ssize_t seg, g, j
    cdef double total = 0.0, s0, s1, acc, qv, t
    for seg in range(i0, i1 + 1):
        s0 = knots[seg] if knots[seg] > a else a
        s1 = knots[seg + 1] if knots[seg + 1] < b else b
        if s1 <= s0:
            continue
        acc = 0.0
        for g in range(3):
            t = s0 + (s1 - s0) * gx[g]
            _hermite_point(knots, Y, D, t, seg, True, &val[0], &der[0])
            qv = 0.0
            for j in range(n):
                qv += der[j] * der[j]
            acc += gw[g] * qv
        total += acc * (s1 - s0)
    return total


# ---------------------------------------------------------------------------
# RK4 stepping fast path

cdef inline double _delay_eval(long kind, const double[:, ::1] par,
                               Py_ssize_t row, double t) noexcept nogil:
    cdef double frac
    if kind == 0:
        return par[row, 0]
    if kind == 1:
        return par[row, 0] + par[row, 1] * sin(par[row, 2] * t + par[row, 3])
    frac = fmod((t - par[row, 3]) / par[row, 2], 1.0)
    if frac < 0.0:
        frac += 1.0
    return par[row, 0] + (par[row, 1] - par[row, 0]) * frac


cdef inline void _hist_point(int kind, const double[::1] hk,
                             const double[:, ::1] hv,
                             const double[:, ::1] hd,
                             double tau, double* out) noexcept nogil:
    cdef Py_ssize_t K = hk.shape[0] - 1, n = hv.shape[1]
    cdef Py_ssize_t seg, j
    cdef double w, th
    if tau < hk[0]:
        tau = hk[0]
    elif tau > hk[K]:
        tau = hk[K]
    seg = _locate(hk, tau, K - 1)
    if kind == 1:
        w = hk[seg + 1] - hk[seg]
        th = (tau - hk[seg]) / w
        for j in range(n):
            out[j] = (1.0 - th) * hv[seg, j] + th * hv[seg + 1, j]
    else:
        _hermite_point(hk, hv, hd, tau, seg, False, out, out)


def integrate_linear(double[:, ::1] A, double[:, :, ::1] B, long[::1] bidx,
                     long[::1] dkind, double[:, ::1] dparam, int hist_kind,
                     double[::1] hknots, double[:, ::1] hvals,
                     double[:, ::1] hders, double[::1] knots, double blow_up,
                     int overlap_iters, int g_kind, double g_param,
                     double[:, ::1] Y, double[:, ::1] F):
    """Fast path for A x(t) + sum_i B_i x(t - h_i(t)) [+ cubic g].

    Fills Y, F with knot states/derivatives; returns (status, last_knot)
    with status 0 = complete, 1 = blew up.
    """
    cdef Py_ssize_t n = A.shape[0], p = B.shape[0]
    cdef Py_ssize_t K = knots.shape[0] - 1
    scratch = np.zeros((8, n))
    cdef double[:, ::1] sc = scratch
    cdef Py_ssize_t k, it, j
    cdef double t0, t1, h, nrm
    cdef bint ov
    cdef int status = 0
    cdef Py_ssize_t last = K

    # history value at time 0
    _hist_point(hist_kind, hknots, hvals, hders, 0.0, &sc[7, 0])
    for j in range(n):
        Y[0, j] = sc[7, j]
    with nogil:
        _rhs(0.0, &Y[0, 0], 0, &Y[0, 0], &sc[6, 0], A, B, bidx, dkind,
             dparam, hist_kind, hknots, hvals, hders, knots, Y, F,
             g_kind, g_param, &F[0, 0], &sc[7, 0])
        for k in range(K):
            t0 = knots[k]
            t1 = knots[k + 1]
            h = t1 - t0
            # provisional endpoint: Euler predictor
            for j in range(n):
                sc[4, j] = Y[k, j] + h * F[k, j]   # xe
                sc[5, j] = F[k, j]                 # fe
            for it in range(overlap_iters):
                ov = False
                ov |= _rhs(t0, &Y[k, 0], k, &sc[4, 0], &sc[5, 0], A, B,
                           bidx, dkind, dparam, hist_kind, hknots, hvals,
                           hders, knots, Y, F, g_kind, g_param, &sc[0, 0],
                           &sc[7, 0])
                for j in range(n):
                    sc[6, j] = Y[k, j] + 0.5 * h * sc[0, j]
                ov |= _rhs(t0 + 0.5 * h, &sc[6, 0], k, &sc[4, 0], &sc[5, 0],
                           A, B, bidx, dkind, dparam, hist_kind, hknots,
                           hvals, hders, knots, Y, F, g_kind, g_param,
                           &sc[1, 0], &sc[7, 0])
                for j in range(n):
                    sc[6, j] = Y[k, j] + 0.5 * h * sc[1, j]
                ov |= _rhs(t0 + 0.5 * h, &sc[6, 0], k, &sc[4, 0], &sc[5, 0],
                           A, B, bidx, dkind, dparam, hist_kind, hknots,
                           hvals, hders, knots, Y, F, g_kind, g_param,
                           &sc[2, 0], &sc[7, 0])
                for j in range(n):
                    sc[6, j] = Y[k, j] + h * sc[2, j]
                ov |= _rhs(t1, &sc[6, 0], k, &sc[4, 0], &sc[5, 0], A, B,
                           bidx, dkind, dparam, hist_kind, hknots, hvals,
                           hders, knots, Y, F, g_kind, g_param, &sc[3, 0],
                           &sc[7, 0])
                for j in range(n):
                    sc[6, j] = Y[k, j] + (h / 6.0) * (sc[0, j] + 2.0 * sc[1, j]
                                                      + 2.0 * sc[2, j]
                                                      + sc[3, j])
                ov |= _rhs(t1, &sc[6, 0], k, &sc[6, 0], &sc[5, 0], A, B,
                           bidx, dkind, dparam, hist_kind, hknots, hvals,
                           hders, knots, Y, F, g_kind, g_param, &sc[0, 0],
                           &sc[7, 0])
                for j in range(n):
                    sc[4, j] = sc[6, j]
                    sc[5, j] = sc[0, j]
                if not ov:
                    break
            nrm = 0.0
            for j in range(n):
                nrm += sc[4, j] * sc[4, j]
            if not isfinite(nrm):
                status = 1
                last = k
                break
            for j in range(n):
                Y[k + 1, j] = sc[4, j]
                F[k + 1, j] = sc[5, j]
            if sqrt(nrm) > blow_up:
                status = 1
                last = k + 1
                break
    return status, last


cdef bint _lookup(double tau, Py_ssize_t k, const double* xe,
                  const double* fe, int hist_kind, const double[::1] hknots,
                  const double[:, ::1] hvals, const double[:, ::1] hders,
                  const double[::1] knots, const double[:, ::1] Y,
                  const double[:, ::1] F, double* out) noexcept nogil:
    cdef Py_ssize_t n = Y.shape[1], seg, j
    cdef double t0, t1, th, t2, t3, w, h00, h01, h10, h11
    if tau <= 0.0:
        _hist_point(hist_kind, hknots, hvals, hders, tau, out)
        return False
    t0 = knots[k]
    if tau <= t0:
        seg = _locate(knots, tau, k - 1)
        _hermite_point(knots, Y, F, tau, seg, False, out, out)
        return False
    t1 = knots[k + 1]
    th = (tau - t0) / (t1 - t0)
    if th > 1.0:
        th = 1.0
    w = t1 - t0
    t2 = th * th
    t3 = t2 * th
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h01 = -2.0 * t3 + 3.0 * t2
    h10 = t3 - 2.0 * t2 + th
    h11 = t3 - t2
    for j in range(n):
        out[j] = (h00 * Y[k, j] + h01 * xe[j]
                  + w * (h10 * F[k, j] + h11 * fe[j]))
    return True


cdef bint _rhs(double s, const double* xcur, Py_ssize_t k, const double* xe,
               const double* fe, const double[:, ::1] A,
               const double[:, :, ::1] B, const long[::1] bidx,
               const long[::1] dkind, const double[:, ::1] dparam,
               int hist_kind, const double[::1] hknots,
               const double[:, ::1] hvals, const double[:, ::1] hders,
               const double[::1] knots, const double[:, ::1] Y,
               const double[:, ::1] F, int g_kind, double g_param,
               double* out, double* xd) noexcept nogil:
    cdef Py_ssize_t n = A.shape[0], p = B.shape[0]
    cdef Py_ssize_t i, j, c
    cdef bint ov = False
    cdef double d, acc, nrm2
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * xcur[j]
        out[i] = acc
    for c in range(p):
        d = _delay_eval(dkind[bidx[c]], dparam, bidx[c], s)
        ov |= _lookup(s - d, k, xe, fe, hist_kind, hknots, hvals, hders,
                      knots, Y, F, xd)
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += B[c, i, j] * xd[j]
            out[i] += acc
    if g_kind == 1:
        nrm2 = 0.0
        for j in range(n):
            nrm2 += xcur[j] * xcur[j]
        for j in range(n):
            out[j] += g_param * nrm2 * xcur[j]
    return ov
