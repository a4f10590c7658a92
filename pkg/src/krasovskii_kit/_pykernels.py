"""Pure-Python (numpy) implementations of the hot kernels.

Mirrors the API of the compiled `_ckernels` module; one of the two is
selected at import time by `_backend`.
"""
import numpy as np

JACOBI_MAX_SWEEPS = 100
JACOBI_REL_TOL = 1e-12


def jacobi_eigh(S):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (w, V) with eigenvalues `w` ascending and eigenvectors as the
    columns of `V`.  Convergence: off-diagonal Frobenius mass below
    1e-12 * ||S||_F, capped at 100 sweeps.
    """
    A = np.array(S, dtype=float)
    d = A.shape[0]
    V = np.eye(d)
    if d == 1:
        return A[0].copy(), V
    norm_f = np.sqrt((A * A).sum())
    tol = JACOBI_REL_TOL * norm_f
    for _ in range(JACOBI_MAX_SWEEPS):
        off_sq = 2.0 * (np.tril(A, -1) ** 2).sum()
        if np.sqrt(off_sq) <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-36 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 if theta >= 0 else -1.0
                    t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                app, aqq = A[p, p], A[q, q]
                A[p, p] = app - t * apq
                A[q, q] = aqq + t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                rows = np.ones(d, dtype=bool)
                rows[p] = rows[q] = False
                aip = A[rows, p].copy()
                aiq = A[rows, q].copy()
                A[rows, p] = c * aip - s * aiq
                A[rows, q] = s * aip + c * aiq
                A[p, rows] = A[rows, p]
                A[q, rows] = A[rows, q]
                vip = V[:, p].copy()
                viq = V[:, q].copy()
                V[:, p] = c * vip - s * viq
                V[:, q] = s * vip + c * viq
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _locate(knots, tq):
    idx = np.searchsorted(knots, tq, side="right") - 1
    return np.clip(idx, 0, len(knots) - 2)


def hermite_eval(knots, Y, D, tq, want_der=False):
    """Evaluate piecewise cubic-Hermite data at query times.

    knots: (K+1,) ascending; Y, D: (K+1, n) endpoint values/derivatives.
    Queries are clamped to [knots[0], knots[-1]].
    """
    tq = np.atleast_1d(np.asarray(tq, dtype=float))
    tq = np.clip(tq, knots[0], knots[-1])
    i = _locate(knots, tq)
    t0 = knots[i]
    w = knots[i + 1] - t0
    th = (tq - t0) / w
    t2 = th * th
    t3 = t2 * th
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h01 = -2.0 * t3 + 3.0 * t2
    h10 = t3 - 2.0 * t2 + th
    h11 = t3 - t2
    y0, y1 = Y[i], Y[i + 1]
    m0, m1 = D[i], D[i + 1]
    wc = w[:, None]
    vals = (h00[:, None] * y0 + h01[:, None] * y1
            + wc * (h10[:, None] * m0 + h11[:, None] * m1))
    if not want_der:
        return vals, None
    g00 = (6.0 * t2 - 6.0 * th) / w
    g01 = -g00
    g10 = 3.0 * t2 - 4.0 * th + 1.0
    g11 = 3.0 * t2 - 2.0 * th
    ders = (g00[:, None] * y0 + g01[:, None] * y1
            + g10[:, None] * m0 + g11[:, None] * m1)
    return vals, ders


_SUP_SAMPLES = 9


def sup_norm_hermite(knots, Y, D, a, b):
    """sup of ||x(s)|| over [a, b] for Hermite segment data.

    Samples each overlapped segment and applies one parabolic refinement
    around every interior sample maximum.
    """
    a = max(a, knots[0])
    b = min(b, knots[-1])
    if b < a:
        raise ValueError("empty range for sup-norm")
    if b == a:
        v, _ = hermite_eval(knots, Y, D, np.array([a]))
        return float(np.sqrt((v[0] * v[0]).sum()))
    i0 = int(_locate(knots, np.array([a]))[0])
    i1 = int(_locate(knots, np.array([b * (1 - 1e-16) if b > 0 else b]))[0])
    i1 = max(i1, i0)
    segs = np.arange(i0, i1 + 1)
    lo = np.maximum(knots[segs], a)
    hi = np.minimum(knots[segs + 1], b)
    frac = np.linspace(0.0, 1.0, _SUP_SAMPLES)
    ts = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    vals, _ = hermite_eval(knots, Y, D, ts.ravel())
    q = (vals * vals).sum(axis=1).reshape(len(segs), _SUP_SAMPLES)
    best = float(q.max())
    # parabolic polish per segment around the interior argmax
    for r in range(len(segs)):
        j = int(np.argmax(q[r]))
        if j == 0 or j == _SUP_SAMPLES - 1:
            continue
        qm, q0, qp = q[r, j - 1], q[r, j], q[r, j + 1]
        den = qm - 2.0 * q0 + qp
        if den >= 0.0:
            continue
        dt = (ts[r, 1] - ts[r, 0])
        tstar = ts[r, j] + 0.5 * dt * (qm - qp) / den
        if lo[r] <= tstar <= hi[r]:
            v, _ = hermite_eval(knots, Y, D, np.array([tstar]))
            best = max(best, float((v[0] * v[0]).sum()))
    return float(np.sqrt(best))


# Gauss-Legendre 3-point rule on [0, 1]: exact for degree <= 5, which covers
# the quartic ||dx/ds||^2 of a cubic segment and the quintic weighted form.
_GL3_X = np.array([0.5 - np.sqrt(15.0) / 10.0, 0.5, 0.5 + np.sqrt(15.0) / 10.0])
_GL3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def dsq_hermite(knots, Y, D, a, b):
    """Integral of ||dx/ds||^2 over [a, b] for Hermite segment data (exact)."""
    a = max(a, knots[0])
    b = min(b, knots[-1])
    if b <= a:
        return 0.0
    i0 = int(_locate(knots, np.array([a]))[0])
    i1 = int(_locate(knots, np.array([b * (1 - 1e-16) if b > 0 else b]))[0])
    i1 = max(i1, i0)
    segs = np.arange(i0, i1 + 1)
    lo = np.maximum(knots[segs], a)
    hi = np.minimum(knots[segs + 1], b)
    ts = lo[:, None] + (hi - lo)[:, None] * _GL3_X[None, :]
    _, ders = hermite_eval(knots, Y, D, ts.ravel(), want_der=True)
    q = (ders * ders).sum(axis=1).reshape(len(segs), 3)
    return float(((q * _GL3_W[None, :]).sum(axis=1) * (hi - lo)).sum())
