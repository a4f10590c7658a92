"""Energy-functional evaluation along trajectories and dissipation checks.

The functional is the quadratic-plus-double-integral form
V(t) = x(t)' P1 x(t) + double integral of xdot' Q xdot over the sliding
window, evaluated through the order-swapped single integral with weight
(s - (t - h_M)).  Upper right Dini derivatives are approximated by a
shrinking-step forward-difference maximum; every verdict carries its
tolerance explicitly, since the true limsup is not computable from samples.
"""
from dataclasses import dataclass

import numpy as np

from .histories import NotInWError, PowerComparison, w_norm
from .numerics import SymMatrix, sym_eig, weighted_quadrature

__all__ = ["LkfTrace", "DissipationVerdict", "SandwichVerdict", "lkf_value",
           "lkf_value_nested", "dini_upper_estimate", "dissipation_check",
           "sandwich_check", "lkf_trace_to_csv"]

LKF_PANELS = 64
DEFAULT_SAMPLES = 200


def _mat(x):
    return x.entries if isinstance(x, SymMatrix) else np.asarray(x, dtype=float)


def _require_v_defined(traj, t):
    if t < traj.h_M and not traj.history.in_w:
        raise NotInWError("V undefined: history not in W")


def lkf_value(traj, t, p1, q, panels=LKF_PANELS):
    """V(t) along the trajectory.

    Uses the order-swapped identity: the nested double integral over the
    window equals int_{t-h_M}^t (s - (t - h_M)) xdot(s)' Q xdot(s) ds.
    For t < h_M the integral reaches into the initial history, which must
    then be W-representable.
    """
    _require_v_defined(traj, t)
    p1 = _mat(p1)
    q = _mat(q)
    x = traj.state(t)
    lo = t - traj.h_M

    def energy(ss):
        d = traj.derivatives(ss)
        return np.einsum("mi,ij,mj->m", d, q, d)

    integral = weighted_quadrature(energy, lo, t, weight=lambda s: s - lo,
                                   panels=panels)
    return float(x @ p1 @ x + integral)


def lkf_value_nested(traj, t, p1, q, panels=LKF_PANELS):
    """Independent nested-double-quadrature evaluation of V(t) (oracle)."""
    _require_v_defined(traj, t)
    p1 = _mat(p1)
    q = _mat(q)
    x = traj.state(t)

    def energy(ss):
        d = traj.derivatives(ss)
        return np.einsum("mi,ij,mj->m", d, q, d)

    def inner(thetas):
        return np.array([
            weighted_quadrature(energy, t + th, t, panels=panels)
            for th in thetas])

    integral = weighted_quadrature(inner, -traj.h_M, 0.0, panels=panels)
    return float(x @ p1 @ x + integral)


def dini_upper_estimate(times, values, index, steps):
    """Upper-biased estimate of the Dini upper right derivative.

    Maximum of forward differences over the shrinking step sequence; the
    samples at t + step must exist on the grid.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t0 = times[index]
    v0 = values[index]
    best = -np.inf
    scale = 1.0 + abs(times[-1])
    for step in steps:
        target = t0 + step
        j = int(np.searchsorted(times, target))
        cands = [jj for jj in (j - 1, j, j + 1) if 0 <= jj < len(times)]
        j = min(cands, key=lambda jj: abs(times[jj] - target))
        if abs(times[j] - target) > 1e-9 * scale or j <= index:
            raise ValueError("insufficient forward samples for Dini estimate")
        best = max(best, (values[j] - v0) / (times[j] - t0))
    return float(best)


@dataclass(frozen=True)
class LkfTrace:
    times: np.ndarray
    v: np.ndarray
    dini: np.ndarray
    residual: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.v) == len(self.dini)
                == len(self.residual)):
            raise ValueError("trace columns must have equal length")


@dataclass(frozen=True)
class DissipationVerdict:
    passed: bool
    kind: str  # "pass" | "dissipation" | "sandwich"
    max_residual: float
    tolerance: float


@dataclass(frozen=True)
class SandwichVerdict:
    passed: bool
    max_lower_violation: float
    max_upper_violation: float
    tolerance: float


def dissipation_check(traj, cert, omega3=None, mode="pointwise", k3=None,
                      samples=DEFAULT_SAMPLES, panels=LKF_PANELS):
    """Sample V, estimate thinned Dini derivatives, and check decay.

    mode "pointwise" tests D+V <= -omega3(||x||); mode "exponential" tests
    D+V <= -k3 V.  Pass tolerance is 1e-6 + 1e-3 * max V, which absorbs the
    quadrature and differencing error.  A positive-definiteness or lower
    sandwich failure is reported as the distinct kind "sandwich".
    """
    if mode == "pointwise":
        if omega3 is None:
            raise ValueError("pointwise mode requires omega3")
    elif mode == "exponential":
        if k3 is None or k3 <= 0:
            raise ValueError("exponential mode requires k3 > 0")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _require_v_defined(traj, 0.0)
    total = samples + 4
    ts = np.linspace(0.0, traj.T, total)
    u = ts[1] - ts[0]
    vs = np.array([lkf_value(traj, t, cert.p1, cert.q, panels) for t in ts])
    xnorms = np.sqrt((traj.states(ts) ** 2).sum(axis=1))
    dini = np.array([
        dini_upper_estimate(ts, vs, i, (4.0 * u, 2.0 * u, u))
        for i in range(samples)])
    if mode == "pointwise":
        residual = dini + np.asarray(omega3(xnorms[:samples]), dtype=float)
    else:
        residual = dini + k3 * vs[:samples]
    trace = LkfTrace(ts[:samples], vs[:samples], dini, residual)
    tol = 1e-6 + 1e-3 * float(vs.max(initial=0.0))
    lam_p1 = sym_eig(cert.p1).lambda_min
    lam_q = sym_eig(cert.q).lambda_min
    sandwich_bad = (lam_p1 <= 0.0 or lam_q <= 0.0
                    or bool((vs < lam_p1 * xnorms ** 2 - tol).any()))
    if sandwich_bad:
        return trace, DissipationVerdict(False, "sandwich",
                                         float(residual.max()), tol)
    if residual.max() > tol:
        return trace, DissipationVerdict(False, "dissipation",
                                         float(residual.max()), tol)
    return trace, DissipationVerdict(True, "pass", float(residual.max()), tol)


def sandwich_check(traj, cert, omega1=None, omega2=None,
                   samples=DEFAULT_SAMPLES, panels=LKF_PANELS, rel_tol=1e-6):
    """Check omega1(||x(t)||) <= V(t) <= omega2(||x_t||_W) for t >= h_M.

    Defaults are the eigenvalue-based quadratics: omega1 with the smallest
    eigenvalue of P1 and omega2 with max(lambda_max(P1), h_M lambda_max(Q)).
    """
    lam_p = sym_eig(cert.p1)
    lam_q = sym_eig(cert.q)
    if omega1 is None:
        omega1 = PowerComparison(lam_p.lambda_min, 2.0)
    if omega2 is None:
        omega2 = PowerComparison(max(lam_p.lambda_max,
                                     traj.h_M * lam_q.lambda_max), 2.0)
    if traj.T < traj.h_M:
        raise ValueError("trajectory too short for the sandwich check")
    ts = np.linspace(traj.h_M, traj.T, samples)
    worst_lo = -np.inf
    worst_hi = -np.inf
    for t in ts:
        v = lkf_value(traj, t, cert.p1, cert.q, panels)
        x = traj.state(t)
        lo = float(omega1(np.sqrt(x @ x)))
        hi = float(omega2(w_norm(traj.window(t))))
        tol = rel_tol * (1.0 + abs(v))
        worst_lo = max(worst_lo, lo - v - tol)
        worst_hi = max(worst_hi, v - hi - tol)
    tol = rel_tol
    return SandwichVerdict(worst_lo <= 0.0 and worst_hi <= 0.0,
                           float(worst_lo), float(worst_hi), rel_tol)


def lkf_trace_to_csv(trace, path_or_file):
    """CSV export: t, V, DiniV, residual."""
    lines = ["t,V,DiniV,residual"]
    for i in range(len(trace.times)):
        lines.append(",".join(repr(float(c)) for c in
                              (trace.times[i], trace.v[i], trace.dini[i],
                               trace.residual[i])))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
    return text
