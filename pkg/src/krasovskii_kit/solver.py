"""Forward integration of retarded differential equations.

Fixed-step classical RK4 with cubic-Hermite dense output.  Delayed-state
lookups resolve to the initial history for arguments <= 0 and to the dense
output otherwise; lookups that land inside the step being computed (delay
smaller than the step, including vanishing delay) are handled by a bounded
fixed-point iteration on the step's own Hermite segment.
"""
import io
from dataclasses import dataclass

import numpy as np

from . import _backend
from .histories import (ConstantDelay, ConstantHistory, CubicHermiteHistory,
                        HistoryFunction, NotInWError,
                        PiecewiseLinearHistory, SawtoothDelay, SinusoidDelay)
from .numerics import weighted_quadrature

__all__ = ["SystemModel", "Trajectory", "GrowthCertificate",
           "CubicNonlinearity", "ComponentwisePolynomial", "ConstantKernel",
           "PolynomialKernel", "SampledKernel", "integrate", "eval_state",
           "window", "sup_norm_on", "trajectory_to_csv"]

DISTRIBUTED_PANELS = 16
DEFAULT_BLOW_UP = 1e8
DEFAULT_OVERLAP_ITERS = 5


# ---------------------------------------------------------------------------
# distributed-delay kernels

class ConstantKernel:
    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))

    @property
    def dim(self):
        return self.matrix.shape[0]

    def eval(self, thetas):
        m = len(np.atleast_1d(thetas))
        return np.broadcast_to(self.matrix, (m,) + self.matrix.shape)


class PolynomialKernel:
    """B(theta) = sum_k C_k theta^k."""

    def __init__(self, coeff_matrices):
        self.coeffs = [np.atleast_2d(np.asarray(c, dtype=float))
                       for c in coeff_matrices]
        if not self.coeffs:
            raise ValueError("need at least one coefficient matrix")

    @property
    def dim(self):
        return self.coeffs[0].shape[0]

    def eval(self, thetas):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        out = np.zeros((len(thetas),) + self.coeffs[0].shape)
        for k, c in enumerate(self.coeffs):
            out += thetas[:, None, None] ** k * c
        return out


class SampledKernel:
    """Kernel tabulated on a theta grid, interpolated piecewise-linearly."""

    def __init__(self, thetas, matrices):
        self.thetas = np.asarray(thetas, dtype=float)
        self.mats = np.asarray(matrices, dtype=float)
        if self.thetas.ndim != 1 or len(self.thetas) < 2:
            raise ValueError("need >= 2 sample points")
        if np.any(np.diff(self.thetas) <= 0):
            raise ValueError("sample thetas must be increasing")
        if self.mats.shape[0] != len(self.thetas):
            raise ValueError("matrix count must match theta count")

    @property
    def dim(self):
        return self.mats.shape[1]

    def eval(self, thetas):
        thetas = np.clip(np.atleast_1d(np.asarray(thetas, dtype=float)),
                         self.thetas[0], self.thetas[-1])
        i = np.clip(np.searchsorted(self.thetas, thetas, side="right") - 1,
                    0, len(self.thetas) - 2)
        w = ((thetas - self.thetas[i])
             / (self.thetas[i + 1] - self.thetas[i]))[:, None, None]
        return (1.0 - w) * self.mats[i] + w * self.mats[i + 1]


# ---------------------------------------------------------------------------
# nonlinearities

@dataclass(frozen=True)
class GrowthCertificate:
    """Constants for the local growth bound ||g(x)|| <= beta ||x||^(1+gamma)
    on the ball ||x|| <= alpha."""
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0 and self.gamma > 0):
            raise ValueError("growth constants must be positive")


class CubicNonlinearity:
    """g(x) = scale * x * ||x||^2."""

    def __init__(self, scale=1.0):
        self.scale = float(scale)

    def __call__(self, x):
        return self.scale * x * float(x @ x)


class ComponentwisePolynomial:
    """g_i(x) = sum_k coeffs[k, i] * x_i^powers[k], all powers >= 2."""

    def __init__(self, powers, coeffs):
        self.powers = np.asarray(powers, dtype=int)
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if np.any(self.powers < 2):
            raise ValueError("powers must be >= 2 so that g(0) = 0")
        if self.coeffs.shape[0] != len(self.powers):
            raise ValueError("one coefficient row per power")

    def __call__(self, x):
        out = np.zeros_like(x)
        for k, p in enumerate(self.powers):
            out += self.coeffs[k] * x ** p
        return out


GROWTH_CHECK_SAMPLES = 1000


def _verify_growth(g, growth, dim):
    rng = np.random.Generator(np.random.Philox(key=0x6772_6F77))
    u = rng.normal(size=(GROWTH_CHECK_SAMPLES, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = rng.uniform(0.0, growth.alpha, size=GROWTH_CHECK_SAMPLES)
    for direction, radius in zip(u, r):
        x = radius * direction
        gx = g(x)
        bound = growth.beta * radius ** (1.0 + growth.gamma)
        if np.sqrt(gx @ gx) > bound * (1.0 + 1e-9) + 1e-300:
            raise ValueError(
                "growth certificate violated by sampling check at "
                f"||x|| = {radius:.6g}")


# ---------------------------------------------------------------------------
# system model

class SystemModel:
    """Right-hand side A x(t) + sum_i B_i x(t - h_i(t))
    + sum_i int_{-h_i(t)}^0 B_i(theta) x(t + theta) dtheta + g(x(t))."""

    def __init__(self, a, pointwise=(), distributed=(), nonlinearity=None,
                 growth=None, window=None):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("A must be square")
        if not np.all(np.isfinite(a)):
            raise ValueError("A has non-finite entries")
        n = a.shape[0]
        pw = []
        for b, idx in pointwise:
            b = np.atleast_2d(np.asarray(b, dtype=float))
            if b.shape != (n, n) or not np.all(np.isfinite(b)):
                raise ValueError("pointwise matrices must be finite n x n")
            pw.append((b, int(idx)))
        ds = []
        for ker, idx in distributed:
            if ker.dim != n:
                raise ValueError("distributed kernel dimension mismatch")
            ds.append((ker, int(idx)))
        if nonlinearity is not None:
            if growth is None:
                raise ValueError("a nonlinearity requires a growth certificate")
            g0 = nonlinearity(np.zeros(n))
            if np.sqrt(g0 @ g0) > 1e-14:
                raise ValueError("nonlinearity must vanish at the origin")
            _verify_growth(nonlinearity, growth, n)
        self.a = a
        self.n = n
        self.pointwise = tuple(pw)
        self.distributed = tuple(ds)
        self.nonlinearity = nonlinearity
        self.growth = growth
        self.window = None if window is None else float(window)

    def delay_indices(self):
        return [idx for _, idx in self.pointwise] + \
               [idx for _, idx in self.distributed]


# ---------------------------------------------------------------------------
# trajectory

class Trajectory:
    """Dense-output solution on [-h_M, T]: per-step cubic-Hermite segments."""

    def __init__(self, knots, states, derivs, history, status, dt):
        self.knots = knots
        self.Y = states
        self.F = derivs
        self.history = history
        self.status = status
        self.dt = dt
        self.h_M = history.h_M
        self.t_f = float(knots[-1]) if status == "blew-up" else None

    @property
    def n(self):
        return self.Y.shape[1]

    @property
    def T(self):
        return float(self.knots[-1])

    def _check_domain(self, ts):
        tol = 1e-9 * (1.0 + self.T)
        if np.any(ts < -self.h_M - tol) or np.any(ts > self.T + tol):
            raise ValueError(
                f"evaluation outside [-{self.h_M}, {self.T}]"
                + (" (trajectory blew up)" if self.status == "blew-up" else ""))

    def states(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        self._check_domain(ts)
        out = np.empty((len(ts), self.n))
        past = ts <= 0.0
        if past.any():
            out[past] = self.history.values(np.clip(ts[past], -self.h_M, 0.0))
        if (~past).any():
            v, _ = _backend.hermite_eval(self.knots, self.Y, self.F,
                                         np.clip(ts[~past], 0.0, self.T))
            out[~past] = v
        return out

    def state(self, t):
        return self.states(np.array([t]))[0]

    def derivatives(self, ts):
        """Trajectory derivative; reaches into the history's weak derivative
        for negative times (requires a W representation there)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        self._check_domain(ts)
        out = np.empty((len(ts), self.n))
        past = ts < 0.0
        if past.any():
            out[past] = self.history.derivatives(
                np.clip(ts[past], -self.h_M, 0.0))
        if (~past).any():
            _, d = _backend.hermite_eval(self.knots, self.Y, self.F,
                                         np.clip(ts[~past], 0.0, self.T), True)
            out[~past] = d
        return out

    def sup_norm(self, a, b):
        self._check_domain(np.array([a, b]))
        if a > b:
            raise ValueError("empty range")
        parts = []
        if a < 0.0:
            parts.append(self.history.sup_norm_range(a, min(b, 0.0)))
        if b > 0.0:
            parts.append(_backend.sup_norm_hermite(
                self.knots, self.Y, self.F, max(a, 0.0), b))
        return max(parts)

    def window(self, t):
        """The segment x(t + .) on [-h_M, 0] as a history function."""
        tol = 1e-9 * (1.0 + self.T)
        if t < -tol or t > self.T + tol:
            raise ValueError("window start outside [0, T]")
        t = min(max(t, 0.0), self.T)
        if t == 0.0:
            return self.history
        if t >= self.h_M:
            taus, vals, ders = self._segment_nodes(t - self.h_M, t)
            taus = taus - t
            taus[0] = -self.h_M
            taus[-1] = 0.0
            return CubicHermiteHistory(taus, vals, ders)
        taus, vals, ders = self._segment_nodes(0.0, t)
        taus = taus - t
        taus[-1] = 0.0
        recent = CubicHermiteHistory(taus, vals, ders)
        return WindowHistory(self.history, recent, t, self.h_M)

    def _segment_nodes(self, a, b):
        inner = self.knots[(self.knots > a + 1e-12 * self.dt)
                           & (self.knots < b - 1e-12 * self.dt)]
        pts = np.concatenate([[a], inner, [b]])
        vals, ders = _backend.hermite_eval(self.knots, self.Y, self.F, pts,
                                           True)
        return pts, vals, ders


class WindowHistory(HistoryFunction):
    """Window x(t + .) for t < h_M: reuses the original history's
    representation on [-h_M, -t] and Hermite dense output on [-t, 0]."""

    def __init__(self, base, recent, t, h_M):
        self.base = base
        self.recent = recent
        self.t = float(t)
        self.h_M = float(h_M)
        self.dim = base.dim
        self.in_w = base.in_w

    def values(self, taus):
        taus = self._clip(taus)
        out = np.empty((len(taus), self.dim))
        old = taus <= -self.t
        if old.any():
            out[old] = self.base.values(
                np.clip(taus[old] + self.t, -self.h_M, 0.0))
        if (~old).any():
            out[~old] = self.recent.values(taus[~old])
        return out

    def derivatives(self, taus):
        if not self.in_w:
            raise NotInWError("not in W")
        taus = self._clip(taus)
        out = np.empty((len(taus), self.dim))
        old = taus <= -self.t
        if old.any():
            out[old] = self.base.derivatives(
                np.clip(taus[old] + self.t, -self.h_M, 0.0))
        if (~old).any():
            out[~old] = self.recent.derivatives(taus[~old])
        return out

    def deriv_sq_integral(self, a, b):
        if not self.in_w:
            raise NotInWError("not in W")
        a = max(a, -self.h_M)
        b = min(b, 0.0)
        total = 0.0
        if a < -self.t:
            total += self.base.deriv_sq_integral(
                a + self.t, min(b, -self.t) + self.t)
        if b > -self.t:
            total += self.recent.deriv_sq_integral(max(a, -self.t), b)
        return total

    def sup_norm_range(self, a, b):
        a = max(a, -self.h_M)
        b = min(b, 0.0)
        parts = []
        if a <= -self.t:
            parts.append(self.base.sup_norm_range(
                a + self.t, min(b, -self.t) + self.t))
        if b >= -self.t:
            parts.append(self.recent.sup_norm_range(max(a, -self.t), b))
        return max(parts)


# ---------------------------------------------------------------------------
# integration

def _build_knots(T, dt):
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be > 0")
    k_full = int(np.floor(T / dt + 1e-9))
    knots = np.arange(k_full + 1, dtype=float) * dt
    if k_full == 0 or T - knots[-1] > 1e-9 * dt:
        knots = np.append(knots, T)
    else:
        knots[-1] = T
    return knots


def _fast_path_encoding(model, zeta, x0):
    """Encode the problem for the compiled stepper, or None if ineligible."""
    if _backend.integrate_linear_fast is None:
        return None
    if model.distributed:
        return None
    g_kind, g_param = 0, 0.0
    if model.nonlinearity is not None:
        if not isinstance(model.nonlinearity, CubicNonlinearity):
            return None
        g_kind, g_param = 1, model.nonlinearity.scale
    dkind, dparam = [], []
    for c in zeta.components:
        if isinstance(c, ConstantDelay):
            dkind.append(0)
            dparam.append([c.value_, 0.0, 0.0, 0.0])
        elif isinstance(c, SinusoidDelay):
            dkind.append(1)
            dparam.append([c.center, c.amplitude, c.omega, c.phase])
        elif isinstance(c, SawtoothDelay):
            dkind.append(2)
            dparam.append([c.low, c.high, c.period, c.offset])
        else:
            return None
    if isinstance(x0, ConstantHistory):
        hknots = np.array([-x0.h_M, 0.0])
        hvals = np.vstack([x0.vec, x0.vec])
        hders = np.zeros_like(hvals)
        hkind = 1
    elif isinstance(x0, CubicHermiteHistory):
        hknots, hvals, hders = x0.taus, x0.vals, x0.ders
        hkind = 2
    elif isinstance(x0, PiecewiseLinearHistory):
        hknots, hvals = x0.taus, x0.vals
        hders = np.zeros_like(hvals)
        hkind = 1
    else:
        return None
    p = len(model.pointwise)
    bmats = np.zeros((p, model.n, model.n))
    bidx = np.zeros(p, dtype=np.int64)
    for i, (b, idx) in enumerate(model.pointwise):
        bmats[i] = b
        bidx[i] = idx
    return dict(
        B=np.ascontiguousarray(bmats), bidx=bidx,
        dkind=np.asarray(dkind, dtype=np.int64),
        dparam=np.ascontiguousarray(np.asarray(dparam, dtype=float)
                                    .reshape(len(dkind), 4)),
        hkind=hkind,
        hknots=np.ascontiguousarray(hknots, dtype=float),
        hvals=np.ascontiguousarray(hvals, dtype=float),
        hders=np.ascontiguousarray(hders, dtype=float),
        g_kind=g_kind, g_param=g_param)


def integrate(model, zeta, x0, T, dt, blow_up=DEFAULT_BLOW_UP,
              overlap_iters=DEFAULT_OVERLAP_ITERS):
    """Integrate the model forward from history x0 under delay signal zeta.

    Returns a Trajectory with dense output on [0, T] (or up to the blow-up
    time).  Deterministic: identical inputs produce identical trajectories.
    """
    if x0.dim != model.n:
        raise ValueError(f"history dimension {x0.dim} != model dimension "
                         f"{model.n}")
    if abs(x0.h_M - zeta.h_M) > 1e-12 * (1.0 + abs(x0.h_M)):
        raise ValueError("history window and delay-signal window differ")
    if model.window is not None and \
            abs(model.window - x0.h_M) > 1e-12 * (1.0 + abs(x0.h_M)):
        raise ValueError("model window and history window differ")
    for idx in model.delay_indices():
        if not 0 <= idx < zeta.arity:
            raise ValueError(f"delay index {idx} out of range")
    if overlap_iters < 1:
        raise ValueError("overlap_iters must be >= 1")
    knots = _build_knots(T, dt)
    enc = _fast_path_encoding(model, zeta, x0)
    if enc is not None:
        K = len(knots) - 1
        Y = np.zeros((K + 1, model.n))
        F = np.zeros((K + 1, model.n))
        status_code, last = _backend.integrate_linear_fast(
            np.ascontiguousarray(model.a), enc["B"], enc["bidx"],
            enc["dkind"], enc["dparam"], enc["hkind"], enc["hknots"],
            enc["hvals"], enc["hders"], np.ascontiguousarray(knots),
            float(blow_up), int(overlap_iters), enc["g_kind"],
            float(enc["g_param"]), Y, F)
        status = "complete" if status_code == 0 else "blew-up"
        return Trajectory(knots[:last + 1], Y[:last + 1], F[:last + 1],
                          x0, status, dt)
    return _integrate_pure(model, zeta, x0, knots, blow_up, overlap_iters)


def _integrate_pure(model, zeta, x0, knots, blow_up, overlap_iters):
    n = model.n
    K = len(knots) - 1
    Y = np.zeros((K + 1, n))
    F = np.zeros((K + 1, n))
    Y[0] = x0.value(0.0)
    A = model.a
    g = model.nonlinearity
    h_M = x0.h_M

    def lookup(tau, k, xe, fe):
        """Delayed state at time tau while computing step k -> k+1."""
        if tau <= 0.0:
            return x0.value(max(tau, -h_M)), False
        t0 = knots[k]
        if tau <= t0:
            v, _ = _backend.hermite_eval(knots[:k + 1], Y[:k + 1], F[:k + 1],
                                         np.array([tau]))
            return v[0], False
        t1 = knots[k + 1]
        th = min((tau - t0) / (t1 - t0), 1.0)
        t2 = th * th
        t3 = t2 * th
        w = t1 - t0
        val = ((2 * t3 - 3 * t2 + 1) * Y[k] + (-2 * t3 + 3 * t2) * xe
               + w * ((t3 - 2 * t2 + th) * F[k] + (t3 - t2) * fe))
        return val, True

    def lookup_many(taus, k, xe, fe):
        out = np.empty((len(taus), n))
        ov = False
        for j, tau in enumerate(taus):
            out[j], o = lookup(float(tau), k, xe, fe)
            ov = ov or o
        return out, ov

    def rhs(s, xcur, k, xe, fe):
        ov = False
        acc = A @ xcur
        for b, di in model.pointwise:
            d = float(zeta.component_values(di, np.array([s]))[0])
            v, o = lookup(s - d, k, xe, fe)
            ov = ov or o
            acc = acc + b @ v
        for ker, di in model.distributed:
            d = float(zeta.component_values(di, np.array([s]))[0])
            if d <= 0.0:
                continue

            def integrand(thetas):
                nonlocal ov
                vals, o = lookup_many(s + thetas, k, xe, fe)
                ov = ov or o
                return np.einsum("mij,mj->mi", ker.eval(thetas), vals)

            acc = acc + weighted_quadrature(integrand, -d, 0.0,
                                            panels=DISTRIBUTED_PANELS)
        if g is not None:
            acc = acc + g(xcur)
        return acc, ov

    F[0], _ = rhs(0.0, Y[0], 0, Y[0], np.zeros(n))
    status = "complete"
    last = K
    for k in range(K):
        t0, t1 = knots[k], knots[k + 1]
        h = t1 - t0
        xk, fk = Y[k], F[k]
        xe, fe = xk + h * fk, fk
        for _ in range(overlap_iters):
            ov = False
            k1, o = rhs(t0, xk, k, xe, fe); ov |= o
            k2, o = rhs(t0 + 0.5 * h, xk + 0.5 * h * k1, k, xe, fe); ov |= o
            k3, o = rhs(t0 + 0.5 * h, xk + 0.5 * h * k2, k, xe, fe); ov |= o
            k4, o = rhs(t1, xk + h * k3, k, xe, fe); ov |= o
            x1 = xk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            f1, o = rhs(t1, x1, k, x1, fe); ov |= o
            xe, fe = x1, f1
            if not ov:
                break
        if not np.all(np.isfinite(xe)):
            status = "blew-up"
            last = k
            break
        Y[k + 1] = xe
        F[k + 1] = fe
        if np.sqrt(xe @ xe) > blow_up:
            status = "blew-up"
            last = k + 1
            break
    return Trajectory(knots[:last + 1].copy(), Y[:last + 1], F[:last + 1],
                      x0, status, knots[1] - knots[0])


# ---------------------------------------------------------------------------
# spec operations as free functions

def eval_state(traj, t):
    return traj.state(t)


def window(traj, t):
    return traj.window(t)


def sup_norm_on(traj, a, b):
    return traj.sup_norm(a, b)


def trajectory_to_csv(traj, path_or_file, stride=1):
    """CSV export: t, x_1..x_n, dx_1..dx_n at the trajectory knots."""
    n = traj.n
    header = ",".join(["t"] + [f"x_{i+1}" for i in range(n)]
                      + [f"dx_{i+1}" for i in range(n)])
    lines = [header]
    for k in range(0, len(traj.knots), stride):
        row = [repr(float(traj.knots[k]))]
        row += [repr(float(v)) for v in traj.Y[k]]
        row += [repr(float(v)) for v in traj.F[k]]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_file, (str, bytes)):
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
    elif isinstance(path_or_file, io.IOBase) or hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
    return text
