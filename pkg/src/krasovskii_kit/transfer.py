"""Quantitative verification of the norm-transfer machinery.

Checks, along computed trajectories, the a-priori sup-norm envelope
(1 + e^{Lt}) ||x0||_inf, the one-window smoothing estimate
||x_{h_M}||_W <= (1 + e^{L h_M}) sqrt(1 + h_M L^2) ||x0||_inf, consistency
of restarting from a later window with the shifted delay signal, and
empirical decay envelopes with exponential fits.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .histories import NotInWError, shift_delay, uniform_norm, w_norm
from .numerics import matrix_2norm, weighted_quadrature
from .solver import integrate

__all__ = ["SmoothingReport", "GronwallReport", "KlEnvelope",
           "lipschitz_bound", "smoothing_check", "gronwall_check",
           "shift_consistency", "empirical_kl", "envelope_to_csv"]

LIPSCHITZ_SAMPLES = 10_000
LIPSCHITZ_SAFETY = 1.5
KERNEL_NORM_PANELS = 64
FLAT_KAPPA = 1e-3


def lipschitz_bound(model, H=None, h_M=None, seed=0):
    """Lipschitz bound L with ||f(xi, phi)|| <= L ||phi||_inf.

    Sound for the linear part: ||A|| + sum ||B_i|| plus the integral of the
    distributed kernel norms.  For a nonlinearity it adds a sampled
    finite-difference estimate on the ball of radius H times a 1.5 safety
    factor, which is flagged non-rigorous by nature.
    """
    total = matrix_2norm(model.a)
    for b, _ in model.pointwise:
        total += matrix_2norm(b)
    if model.distributed:
        if h_M is None:
            h_M = getattr(model, "window", None)
        if h_M is None:
            raise ValueError("distributed terms need the window length h_M")
        for ker, _ in model.distributed:
            def knorm(thetas):
                return np.array([matrix_2norm(m) for m in ker.eval(thetas)])
            total += float(weighted_quadrature(knorm, -h_M, 0.0,
                                               panels=KERNEL_NORM_PANELS))
    if model.nonlinearity is not None:
        if H is None or not math.isfinite(H):
            raise ValueError("no global Lipschitz bound")
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        base = rng.normal(size=(LIPSCHITZ_SAMPLES, model.n))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
        base *= rng.uniform(0.0, H, size=(LIPSCHITZ_SAMPLES, 1))
        step = rng.normal(size=(LIPSCHITZ_SAMPLES, model.n))
        step /= np.linalg.norm(step, axis=1, keepdims=True)
        eps = 1e-5 * H
        worst = 0.0
        g = model.nonlinearity
        for xi, ui in zip(base, step):
            # keep the probe pair inside the ball
            if np.linalg.norm(xi + eps * ui) > H:
                ui = -ui
            dg = g(xi + eps * ui) - g(xi)
            worst = max(worst, float(np.linalg.norm(dg) / eps))
        total += LIPSCHITZ_SAFETY * worst
    return float(total)


@dataclass(frozen=True)
class SmoothingReport:
    lipschitz: float
    gronwall_factor: float
    smoothing_factor: float
    sup_x0: float
    observed_w_norm: float
    bound: float
    passed: bool

    def to_dict(self):
        return {"lipschitz": self.lipschitz,
                "gronwall_factor": self.gronwall_factor,
                "smoothing_factor": self.smoothing_factor,
                "sup_x0": self.sup_x0,
                "observed_w_norm": self.observed_w_norm,
                "bound": self.bound,
                "passed": self.passed}


@dataclass(frozen=True)
class GronwallReport:
    observed_factor: float
    bound_factor: float
    passed: bool

    def to_dict(self):
        return {"observed_factor": self.observed_factor,
                "bound_factor": self.bound_factor,
                "passed": self.passed}


def _radius_guard(model, x0, lip):
    """Local-Lipschitz models constrain the admissible initial sup-norm."""
    if model.nonlinearity is None:
        return
    H = model.growth.alpha
    gronwall = 1.0 + math.exp(lip * x0.h_M)
    required = H / gronwall
    sup0 = uniform_norm(x0)
    if not sup0 < required:
        raise ValueError(
            f"initial sup-norm {sup0:.6g} must stay below H/(1+e^(L h_M)) "
            f"= {required:.6g} for the locally Lipschitz model")


def smoothing_check(model, zeta, x0, dt, seed=0):
    """Integrate one window length and compare ||x_{h_M}||_W to the bound.

    The window of the dense output is W-representable regardless of the
    regularity of x0, which is exactly what the estimate quantifies.
    """
    h_M = x0.h_M
    H = model.growth.alpha if model.nonlinearity is not None else None
    lip = lipschitz_bound(model, H, h_M=h_M, seed=seed)
    _radius_guard(model, x0, lip)
    gronwall = 1.0 + math.exp(lip * h_M)
    smoothing = gronwall * math.sqrt(1.0 + h_M * lip * lip)
    sup0 = uniform_norm(x0)
    traj = integrate(model, zeta, x0, T=h_M, dt=dt)
    observed = w_norm(traj.window(h_M))
    bound = smoothing * sup0
    return SmoothingReport(lip, gronwall, smoothing, sup0, observed, bound,
                           observed <= bound + 1e-9)


def gronwall_check(model, zeta, x0, dt, seed=0):
    """Compare sup_{t <= h_M} ||x_t||_inf / ||x0||_inf with 1 + e^{L h_M}."""
    h_M = x0.h_M
    H = model.growth.alpha if model.nonlinearity is not None else None
    lip = lipschitz_bound(model, H, h_M=h_M, seed=seed)
    bound = 1.0 + math.exp(lip * h_M)
    sup0 = uniform_norm(x0)
    if sup0 == 0.0:
        return GronwallReport(0.0, bound, True)
    _radius_guard(model, x0, lip)
    traj = integrate(model, zeta, x0, T=h_M, dt=dt)
    observed = traj.sup_norm(-h_M, h_M) / sup0
    return GronwallReport(observed, bound, observed <= bound + 1e-9)


def shift_consistency(model, zeta, x0, T, dt, grid=200):
    """Max deviation between x(t + h_M) and the trajectory restarted from
    the window x_{h_M} under the shifted delay signal."""
    h_M = x0.h_M
    if T < 2.0 * h_M:
        raise ValueError("need T >= 2 h_M for the shift-consistency check")
    traj = integrate(model, zeta, x0, T=T, dt=dt)
    if traj.status != "complete":
        raise ValueError("trajectory blew up before T")
    restarted = integrate(model, shift_delay(zeta, h_M), traj.window(h_M),
                          T=T - h_M, dt=dt)
    ts = np.linspace(0.0, T - h_M, grid)
    gap = traj.states(ts + h_M) - restarted.states(ts)
    return float(np.sqrt((gap * gap).sum(axis=1)).max())


@dataclass(frozen=True)
class KlEnvelope:
    radius: float
    times: np.ndarray
    envelope: np.ndarray
    c0: float
    kappa: float
    fit_residual: float
    verdict: str  # "decaying" | "flat" | "growing"
    scale: str
    member_count: int = 0
    excluded_zero: tuple = field(default=())
    blowups: tuple = field(default=())

    def fit(self, ts):
        return self.c0 * np.exp(-self.kappa * np.asarray(ts, dtype=float))


def _member_scale(x0, scale):
    if scale == "uniform":
        return uniform_norm(x0)
    if scale == "w":
        if not x0.in_w:
            raise NotInWError("not in W")
        return w_norm(x0)
    raise ValueError(f"unknown scale {scale!r}")


def empirical_kl(model, delays, ics, T, dt, scale="uniform", samples=200):
    """Normalized decay envelope over an ensemble, with exponential fit.

    Members pair the initial conditions with the delay presets (cycled when
    the lists differ in length).  Zero-norm members are excluded from the
    normalized envelope and reported separately; any blow-up forces the
    verdict "growing".  The fit summarizes the raw envelope, which remains
    the primary artifact.
    """
    if not ics:
        raise ValueError("ensemble must be non-empty")
    members = [(ics[i], delays[i % len(delays)]) for i in range(len(ics))]
    scales = []
    excluded = []
    for i, (x0, _) in enumerate(members):
        s = _member_scale(x0, scale)
        scales.append(s)
        if s == 0.0:
            excluded.append(i)
    ts = np.linspace(0.0, T, samples)

    def run(pair):
        x0, zeta = pair
        return integrate(model, zeta, x0, T=T, dt=dt)

    workers = min(_backend.worker_count(), len(members))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(run, members))
    else:
        trajs = [run(m) for m in members]

    blowups = []
    curves = []
    for i, traj in enumerate(trajs):
        if i in excluded:
            continue
        if traj.status == "blew-up":
            blowups.append((i, traj.t_f))
            continue
        norms = np.sqrt((traj.states(ts) ** 2).sum(axis=1))
        curves.append(norms / scales[i])
    if curves:
        envelope = np.max(np.vstack(curves), axis=0)
    else:
        envelope = np.zeros_like(ts)

    h_M = members[0][0].h_M
    mask = (ts >= h_M) & (envelope > 0.0)
    if mask.sum() >= 2:
        logs = np.log(envelope[mask])
        a, b = np.polyfit(ts[mask], logs, 1)
        kappa = -float(a)
        c0 = float(np.exp(b))
        resid = float(np.sqrt(np.mean((logs - (a * ts[mask] + b)) ** 2)))
    else:
        kappa, c0, resid = 0.0, 1.0, float("inf")
    if blowups:
        verdict = "growing"
    elif kappa > FLAT_KAPPA:
        verdict = "decaying"
    elif kappa < -FLAT_KAPPA:
        verdict = "growing"
    else:
        verdict = "flat"
    radius = max((scales[i] for i in range(len(members))
                  if i not in excluded), default=0.0)
    return KlEnvelope(radius, ts, envelope, c0, kappa, resid, verdict, scale,
                      len(curves), tuple(excluded), tuple(blowups))


def envelope_to_csv(env, path_or_file):
    """CSV export: t, envelope, fit."""
    fit = env.fit(env.times)
    lines = ["t,envelope,fit"]
    for i in range(len(env.times)):
        lines.append(",".join(repr(float(c)) for c in
                              (env.times[i], env.envelope[i], fit[i])))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
    return text
