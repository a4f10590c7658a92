"""Initial-condition histories, delay signals, comparison functions, norms.

Histories are continuous maps [-h_M, 0] -> R^n.  Membership in the class of
absolutely continuous functions with square-integrable weak derivative (the
"W" class) is a property of the representation, carried by the `in_w` flag,
so "not in W" is an exact, testable condition rather than a runtime guess.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .numerics import weighted_quadrature

__all__ = [
    "NotInWError", "HistoryFunction", "ConstantHistory",
    "PiecewiseLinearHistory", "CubicHermiteHistory", "AnalyticHistory",
    "CantorApproxHistory", "DelaySignal", "ConstantDelay", "SinusoidDelay",
    "SawtoothDelay", "PiecewiseLinearPeriodicDelay", "PowerComparison",
    "ExpDecayEnvelope", "uniform_norm", "w_norm", "make_triangle_history",
    "make_rough_history", "shift_delay", "resample_piecewise_linear",
    "random_piecewise_linear",
]


class NotInWError(ValueError):
    """Raised when a W-norm or weak derivative is requested outside W."""


UNIFORM_NORM_GRID = 2048


# ---------------------------------------------------------------------------
# comparison functions

@dataclass(frozen=True)
class PowerComparison:
    """Class-K comparison function c * s**p with c, p > 0."""
    coeff: float
    power: float

    def __post_init__(self):
        if not (self.coeff > 0 and self.power > 0):
            raise ValueError("power comparison needs coeff > 0 and power > 0")

    def __call__(self, s):
        return self.coeff * np.asarray(s, dtype=float) ** self.power


@dataclass(frozen=True)
class ExpDecayEnvelope:
    """KL envelope beta(s, t) = c0 * exp(-kappa t) * s."""
    c0: float
    kappa: float

    def __post_init__(self):
        if not (self.c0 > 0 and self.kappa >= 0):
            raise ValueError("KL envelope needs c0 > 0 and kappa >= 0")

    def __call__(self, s, t):
        return self.c0 * np.exp(-self.kappa * np.asarray(t, dtype=float)) * s


# ---------------------------------------------------------------------------
# history functions

class HistoryFunction:
    """Base class: continuous map [-h_M, 0] -> R^n."""

    h_M: float
    dim: int
    in_w: bool

    def _clip(self, taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        tol = 1e-9 * (1.0 + self.h_M)
        if np.any(taus < -self.h_M - tol) or np.any(taus > tol):
            raise ValueError(f"history evaluated outside [-{self.h_M}, 0]")
        return np.clip(taus, -self.h_M, 0.0)

    def value(self, tau):
        return self.values(np.array([tau]))[0]

    def values(self, taus):
        raise NotImplementedError

    def derivative(self, tau):
        return self.derivatives(np.array([tau]))[0]

    def derivatives(self, taus):
        """Weak derivative, defined a.e.; requires a W representation."""
        raise NotInWError("not in W")

    def deriv_sq_integral(self, a, b):
        """Integral of ||d(phi)/dtau||^2 over [a, b] subset [-h_M, 0]."""
        raise NotInWError("not in W")

    def sup_norm_range(self, a, b):
        """sup ||phi|| over [a, b]: fixed 2048-point grid + parabolic polish."""
        a = max(a, -self.h_M)
        b = min(b, 0.0)
        if b < a:
            raise ValueError("empty range")
        if b == a:
            v = self.value(a)
            return float(np.sqrt(v @ v))
        ts = np.linspace(a, b, UNIFORM_NORM_GRID + 1)
        vals = self.values(ts)
        q = (vals * vals).sum(axis=1)
        best = float(q.max())
        interior = np.flatnonzero((q[1:-1] >= q[:-2]) & (q[1:-1] >= q[2:])) + 1
        dt = ts[1] - ts[0]
        for i in interior:
            den = q[i - 1] - 2.0 * q[i] + q[i + 1]
            if den >= 0.0:
                continue
            tstar = ts[i] + 0.5 * dt * (q[i - 1] - q[i + 1]) / den
            if a <= tstar <= b:
                v = self.value(tstar)
                best = max(best, float(v @ v))
        return float(np.sqrt(best))


class ConstantHistory(HistoryFunction):
    def __init__(self, vec, h_M):
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        if h_M <= 0:
            raise ValueError("h_M must be > 0")
        if not np.all(np.isfinite(vec)):
            raise ValueError("non-finite history value")
        self.vec = vec
        self.h_M = float(h_M)
        self.dim = len(vec)
        self.in_w = True

    def values(self, taus):
        taus = self._clip(taus)
        return np.broadcast_to(self.vec, (len(taus), self.dim)).copy()

    def derivatives(self, taus):
        taus = self._clip(taus)
        return np.zeros((len(taus), self.dim))

    def deriv_sq_integral(self, a, b):
        return 0.0

    def sup_norm_range(self, a, b):
        return float(np.sqrt(self.vec @ self.vec))


class PiecewiseLinearHistory(HistoryFunction):
    """Piecewise-linear nodes on [-h_M, 0]; exact norms."""

    def __init__(self, taus, vals):
        taus = np.asarray(taus, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if len(taus) < 2 or len(taus) != len(vals):
            raise ValueError("need >= 2 nodes with matching values")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("node times must be strictly increasing")
        if taus[-1] != 0.0 or taus[0] >= 0.0:
            raise ValueError("nodes must span [-h_M, 0] with last node at 0")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite node values")
        self.taus = taus
        self.vals = vals
        self.h_M = float(-taus[0])
        self.dim = vals.shape[1]
        self.in_w = True
        self._slopes = np.diff(vals, axis=0) / np.diff(taus)[:, None]

    def _segment(self, taus):
        idx = np.searchsorted(self.taus, taus, side="right") - 1
        return np.clip(idx, 0, len(self.taus) - 2)

    def values(self, taus):
        taus = self._clip(taus)
        i = self._segment(taus)
        return self.vals[i] + self._slopes[i] * (taus - self.taus[i])[:, None]

    def derivatives(self, taus):
        taus = self._clip(taus)
        return self._slopes[self._segment(taus)].copy()

    def deriv_sq_integral(self, a, b):
        a = max(a, -self.h_M)
        b = min(b, 0.0)
        if b <= a:
            return 0.0
        lo = np.maximum(self.taus[:-1], a)
        hi = np.minimum(self.taus[1:], b)
        w = np.clip(hi - lo, 0.0, None)
        return float(((self._slopes ** 2).sum(axis=1) * w).sum())

    def sup_norm_range(self, a, b):
        # ||phi||^2 is convex per segment, so the sup sits at a node or a
        # range endpoint.
        a = max(a, -self.h_M)
        b = min(b, 0.0)
        if b < a:
            raise ValueError("empty range")
        inside = self.taus[(self.taus >= a) & (self.taus <= b)]
        pts = np.unique(np.concatenate([[a, b], inside]))
        vals = self.values(pts)
        return float(np.sqrt((vals * vals).sum(axis=1).max()))


class CantorApproxHistory(PiecewiseLinearHistory):
    """Level-l interpolant of the Cantor staircase, flagged outside W.

    The flag reflects the limit function this preset stands in for; the
    interpolant's own (finite) W-norm stays reachable through
    `as_piecewise_linear`.
    """

    def __init__(self, taus, vals, levels):
        super().__init__(taus, vals)
        self.levels = levels
        self.in_w = False

    def derivatives(self, taus):
        raise NotInWError("not in W")

    def deriv_sq_integral(self, a, b):
        raise NotInWError("not in W")

    def as_piecewise_linear(self):
        return PiecewiseLinearHistory(self.taus.copy(), self.vals.copy())


class CubicHermiteHistory(HistoryFunction):
    """Cubic-Hermite nodes (values + derivatives) on [-h_M, 0]."""

    def __init__(self, taus, vals, ders):
        taus = np.ascontiguousarray(taus, dtype=float)
        vals = np.ascontiguousarray(vals, dtype=float)
        ders = np.ascontiguousarray(ders, dtype=float)
        if vals.ndim == 1:
            vals = np.ascontiguousarray(vals[:, None])
        if ders.ndim == 1:
            ders = np.ascontiguousarray(ders[:, None])
        if len(taus) < 2 or vals.shape != ders.shape or len(taus) != len(vals):
            raise ValueError("need >= 2 nodes with matching values/derivatives")
        if np.any(np.diff(taus) <= 0):
            raise ValueError("node times must be strictly increasing")
        if taus[-1] != 0.0:
            raise ValueError("last node must sit at tau = 0")
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(ders))):
            raise ValueError("non-finite node data")
        self.taus = taus
        self.vals = vals
        self.ders = ders
        self.h_M = float(-taus[0])
        self.dim = vals.shape[1]
        self.in_w = True

    def values(self, taus):
        taus = self._clip(taus)
        v, _ = _backend.hermite_eval(self.taus, self.vals, self.ders, taus)
        return v

    def derivatives(self, taus):
        taus = self._clip(taus)
        _, d = _backend.hermite_eval(self.taus, self.vals, self.ders, taus,
                                     True)
        return d

    def deriv_sq_integral(self, a, b):
        return _backend.dsq_hermite(self.taus, self.vals, self.ders,
                                    max(a, -self.h_M), min(b, 0.0))


class AnalyticHistory(HistoryFunction):
    """History given by a vectorized closed form, with optional derivative."""

    def __init__(self, h_M, fn, dfn=None, in_w=False, dim=None, name=""):
        if h_M <= 0:
            raise ValueError("h_M must be > 0")
        self.h_M = float(h_M)
        self.fn = fn
        self.dfn = dfn
        self.in_w = bool(in_w and dfn is not None)
        self.name = name
        if dim is None:
            dim = np.atleast_2d(np.asarray(fn(np.array([0.0])))).shape[1]
        self.dim = dim

    def values(self, taus):
        taus = self._clip(taus)
        out = np.asarray(self.fn(taus), dtype=float)
        return out[:, None] if out.ndim == 1 else out

    def derivatives(self, taus):
        if not self.in_w:
            raise NotInWError("not in W")
        taus = self._clip(taus)
        out = np.asarray(self.dfn(taus), dtype=float)
        return out[:, None] if out.ndim == 1 else out

    def deriv_sq_integral(self, a, b):
        if not self.in_w:
            raise NotInWError("not in W")
        return float(weighted_quadrature(
            lambda s: (self.derivatives(s) ** 2).sum(axis=1),
            max(a, -self.h_M), min(b, 0.0), panels=UNIFORM_NORM_GRID))


# ---------------------------------------------------------------------------
# norms and history constructors

def uniform_norm(phi):
    """sup of ||phi(tau)|| over [-h_M, 0]."""
    return phi.sup_norm_range(-phi.h_M, 0.0)


def w_norm(phi):
    """sqrt(||phi(0)||^2 + integral of ||weak derivative||^2)."""
    if not phi.in_w:
        raise NotInWError("not in W")
    v0 = phi.value(0.0)
    return float(np.sqrt(v0 @ v0 + phi.deriv_sq_integral(-phi.h_M, 0.0)))


def _unit_direction(direction):
    d = np.atleast_1d(np.asarray(direction, dtype=float))
    if abs(np.sqrt(d @ d) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return d


def make_triangle_history(m, h_M, direction):
    """Sawtooth-of-triangles history: 2m+1 piecewise-linear nodes whose
    values alternate 0, 1, 0, ..., 0 along a unit direction.

    Uniform norm is exactly 1; W-norm is exactly 2m / sqrt(h_M).
    """
    if m < 1 or int(m) != m:
        raise ValueError("m must be a positive integer")
    if h_M <= 0:
        raise ValueError("h_M must be > 0")
    d = _unit_direction(direction)
    m = int(m)
    taus = np.linspace(-h_M, 0.0, 2 * m + 1)
    taus[-1] = 0.0
    peaks = np.arange(2 * m + 1) % 2
    return PiecewiseLinearHistory(taus, np.outer(peaks.astype(float), d))


def _cantor_nodes(levels):
    nodes = [(0.0, 0.0)]

    def fill(a, b, va, vb, depth):
        if depth == 0:
            nodes.append((b, vb))
            return
        third = (b - a) / 3.0
        vm = (va + vb) / 2.0
        fill(a, a + third, va, vm, depth - 1)
        nodes.append((b - third, vm))
        fill(b - third, b, vm, vb, depth - 1)

    fill(0.0, 1.0, 0.0, 1.0, levels)
    return np.array(nodes)


def make_rough_history(kind, h_M, direction, levels=8):
    """Continuous histories outside W (sqrt-kink, t-sin-inv-t, cantor-approx)."""
    if h_M <= 0:
        raise ValueError("h_M must be > 0")
    d = _unit_direction(direction)
    if kind == "sqrt-kink":
        return AnalyticHistory(
            h_M, lambda t: np.sqrt(np.abs(t))[:, None] * d,
            in_w=False, dim=len(d), name="sqrt-kink")
    if kind == "t-sin-inv-t":
        def fn(t):
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            nz = t != 0.0
            out[nz] = t[nz] * np.sin(1.0 / t[nz])
            return out[:, None] * d
        return AnalyticHistory(h_M, fn, in_w=False, dim=len(d),
                               name="t-sin-inv-t")
    if kind == "cantor-approx":
        if not (1 <= levels <= 20):
            raise ValueError("cantor-approx levels must be in 1..20")
        xy = _cantor_nodes(int(levels))
        taus = xy[:, 0] * h_M - h_M
        taus[-1] = 0.0
        return CantorApproxHistory(taus, np.outer(xy[:, 1], d), int(levels))
    raise ValueError(f"unknown rough history kind {kind!r}")


def resample_piecewise_linear(phi, n_nodes):
    """Piecewise-linear interpolant of any history on a uniform grid."""
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    taus = np.linspace(-phi.h_M, 0.0, int(n_nodes))
    taus[-1] = 0.0
    return PiecewiseLinearHistory(taus, phi.values(taus))


def random_piecewise_linear(h_M, dim, rng, n_nodes=9, amplitude=1.0):
    """Random piecewise-linear history (test/ensemble helper)."""
    taus = np.linspace(-h_M, 0.0, int(n_nodes))
    taus[-1] = 0.0
    vals = rng.uniform(-amplitude, amplitude, size=(int(n_nodes), dim))
    return PiecewiseLinearHistory(taus, vals)


# ---------------------------------------------------------------------------
# delay signals (shift-closed preset families)

class ConstantDelay:
    def __init__(self, value):
        self.value_ = float(value)

    def bounds(self):
        return self.value_, self.value_

    def values(self, ts):
        return np.full(len(np.atleast_1d(ts)), self.value_)

    def shifted(self, a):
        return self


class SinusoidDelay:
    """h(t) = center + amplitude * sin(omega * t + phase)."""

    def __init__(self, center, amplitude, omega, phase=0.0):
        self.center = float(center)
        self.amplitude = float(amplitude)
        self.omega = float(omega)
        self.phase = float(phase)

    def bounds(self):
        return (self.center - abs(self.amplitude),
                self.center + abs(self.amplitude))

    def values(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return self.center + self.amplitude * np.sin(self.omega * ts
                                                     + self.phase)

    def shifted(self, a):
        return SinusoidDelay(self.center, self.amplitude, self.omega,
                             self.phase + self.omega * a)


class SawtoothDelay:
    """Periodic ramp from low to high with the given period."""

    def __init__(self, low, high, period, offset=0.0):
        if period <= 0:
            raise ValueError("period must be > 0")
        self.low = float(low)
        self.high = float(high)
        self.period = float(period)
        self.offset = float(offset)

    def bounds(self):
        return self.low, self.high

    def values(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        frac = np.mod((ts - self.offset) / self.period, 1.0)
        return self.low + (self.high - self.low) * frac

    def shifted(self, a):
        return SawtoothDelay(self.low, self.high, self.period,
                             self.offset - a)


class PiecewiseLinearPeriodicDelay:
    """Periodic table of (time, value) nodes, linearly interpolated."""

    def __init__(self, times, values, offset=0.0):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if len(times) < 2 or len(times) != len(values):
            raise ValueError("need >= 2 table nodes")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("table times must increase from 0")
        if values[0] != values[-1]:
            raise ValueError("periodic table must close (v[0] == v[-1])")
        self.times = times
        self.vals = values
        self.period = float(times[-1])
        self.offset = float(offset)

    def bounds(self):
        return float(self.vals.min()), float(self.vals.max())

    def values(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        frac = np.mod(ts - self.offset, self.period)
        return np.interp(frac, self.times, self.vals)

    def shifted(self, a):
        return PiecewiseLinearPeriodicDelay(self.times, self.vals,
                                            self.offset - a)


class DelaySignal:
    """Vector of delay components, each confined to [0, h_M].

    The range invariant is enforced by interval arithmetic on the preset
    parameters at construction, and every preset family is closed under
    time shifts.
    """

    def __init__(self, h_M, components):
        if h_M <= 0:
            raise ValueError("h_M must be > 0")
        components = tuple(components)
        if not components:
            raise ValueError("need at least one delay component")
        for i, c in enumerate(components):
            lo, hi = c.bounds()
            if lo < 0.0 or hi > h_M:
                raise ValueError(
                    f"delay component {i} range [{lo}, {hi}] leaves [0, {h_M}]")
        self.h_M = float(h_M)
        self.components = components

    @property
    def arity(self):
        return len(self.components)

    def value(self, t):
        return np.array([c.values(np.array([t]))[0] for c in self.components])

    def component_values(self, i, ts):
        return self.components[i].values(ts)


def shift_delay(zeta, a):
    """The signal t -> zeta(t + a), expressed in the same preset family."""
    if a < 0:
        raise ValueError("shift must be >= 0")
    return DelaySignal(zeta.h_M, [c.shifted(a) for c in zeta.components])
