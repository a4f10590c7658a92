"""Descriptor-method delay-dependent stability certificates.

Certification is deliberately split: `check_certificate` is the exact half
(eigenvalue tests on the assembled block matrix), `synthesize_certificate`
is a best-effort heuristic search with no completeness claim.  A returned
certificate always passes the exact check; a synthesis failure proves
nothing about infeasibility.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import SymMatrix, matrix_2norm, sym_eig

__all__ = ["LmiCertificate", "CertificateReport", "NonlinearRegion",
           "SynthesisResult", "DelaySweepResult", "assemble_descriptor_lmi",
           "check_certificate", "synthesize_certificate",
           "max_feasible_delay", "assemble_theta", "nonlinear_region"]

PD_MARGIN_MU = 1e-6
FEASIBILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class LmiCertificate:
    """Candidate witness (P1, P2, P3, Q) for the delay bound h_M.

    P1 and Q are symmetric; P2, P3 are general square matrices.  Positive
    definiteness of P1 and Q is checked by `check_certificate`, not here.
    """
    p1: SymMatrix
    p2: np.ndarray
    p3: np.ndarray
    q: SymMatrix
    h_M: float

    @property
    def n(self):
        return self.p1.dim

    def scaled(self, s):
        return LmiCertificate(SymMatrix(self.p1.entries * s), self.p2 * s,
                              self.p3 * s, SymMatrix(self.q.entries * s),
                              self.h_M)

    def to_dict(self):
        return {
            "n": self.n,
            "h_max": self.h_M,
            "p1": self.p1.entries.ravel().tolist(),
            "p2": self.p2.ravel().tolist(),
            "p3": self.p3.ravel().tolist(),
            "q": self.q.entries.ravel().tolist(),
        }

    @staticmethod
    def from_dict(d):
        n = int(d["n"])

        def mat(key):
            return np.asarray(d[key], dtype=float).reshape(n, n)

        return LmiCertificate(SymMatrix(mat("p1")), mat("p2"), mat("p3"),
                              SymMatrix(mat("q")), float(d["h_max"]))


@dataclass(frozen=True)
class CertificateReport:
    lambda_max_lmi: float
    lambda_min_p1: float
    lambda_min_q: float
    margin: float
    feasible: bool

    def to_dict(self):
        return {"lambda_max_lmi": self.lambda_max_lmi,
                "lambda_min_p1": self.lambda_min_p1,
                "lambda_min_q": self.lambda_min_q,
                "margin": self.margin,
                "feasible": self.feasible}


@dataclass(frozen=True)
class NonlinearRegion:
    """Constants (epsilon, delta, eta, H) of the local nonlinear analysis."""
    epsilon: float
    delta: float
    eta: float
    H: float


def _as_square(M, name):
    a = np.atleast_2d(np.asarray(M, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    return a


def assemble_descriptor_lmi(M, N, h_M, cert):
    """The 3n x 3n block matrix whose negative definiteness certifies
    stability for every continuous delay in [0, h_M]."""
    M = _as_square(M, "M")
    N = _as_square(N, "N")
    n = M.shape[0]
    if N.shape != (n, n) or cert.n != n:
        raise ValueError("dimension mismatch between M, N and certificate")
    if h_M <= 0:
        raise ValueError("h_M must be > 0")
    gam = M + N
    p1 = cert.p1.entries
    p2, p3 = cert.p2, cert.p3
    q = cert.q.entries
    z = np.zeros((3 * n, 3 * n))
    z[:n, :n] = gam.T @ p2 + p2.T @ gam
    z[:n, n:2 * n] = p1 - p2.T + gam.T @ p3
    z[:n, 2 * n:] = h_M * (p2.T @ N)
    z[n:2 * n, :n] = p1 - p2 + p3.T @ gam
    z[n:2 * n, n:2 * n] = -p3 - p3.T + h_M * q
    z[n:2 * n, 2 * n:] = h_M * (p3.T @ N)
    z[2 * n:, :n] = h_M * (N.T @ p2)
    z[2 * n:, n:2 * n] = h_M * (N.T @ p3)
    z[2 * n:, 2 * n:] = -h_M * q
    asym = np.abs(z - z.T).max()
    if asym >= 1e-13 * (1.0 + np.abs(z).max()):
        raise AssertionError(f"assembled block unexpectedly asymmetric "
                             f"({asym:.3e})")
    return SymMatrix(z)


def check_certificate(M, N, h_M, cert, margin=FEASIBILITY_MARGIN):
    """Exact eigenvalue verdict; this is the rigorous half of certification."""
    block = assemble_descriptor_lmi(M, N, h_M, cert)
    lmax = sym_eig(block).lambda_max
    lp1 = sym_eig(cert.p1).lambda_min
    lq = sym_eig(cert.q).lambda_min
    feasible = (lmax < -margin) and (lp1 > margin) and (lq > margin)
    return CertificateReport(lmax, lp1, lq, margin, feasible)


# ---------------------------------------------------------------------------
# synthesis

@dataclass(frozen=True)
class SynthesisResult:
    certificate: Optional[LmiCertificate]
    best_objective: float
    restart_index: int
    iterations: int

    @property
    def feasible(self):
        return self.certificate is not None


def _lyapunov_init(gam):
    """P = solution of gam^T X + X gam = -I when it is positive definite."""
    n = gam.shape[0]
    eye = np.eye(n)
    try:
        k = np.kron(eye, gam.T) + np.kron(gam.T, eye)
        x = np.linalg.solve(k, -eye.ravel()).reshape(n, n)
    except np.linalg.LinAlgError:
        return None
    x = (x + x.T) / 2.0
    if sym_eig(x).lambda_min <= 0:
        return None
    return x


def synthesize_certificate(M, N, h_M, restarts=12, max_iters=400, seed=0,
                           step_scale=1.0, margin=FEASIBILITY_MARGIN,
                           mu=PD_MARGIN_MU):
    """Heuristic subgradient search for a certificate.

    Minimizes max(lambda_max(block), -lambda_min(P1) + mu,
    -lambda_min(Q) + mu) over the stacked variables using the leading
    eigenvector's outer product as subgradient, with random restarts; the
    first iterate passing the exact check at `margin` is returned.  The run
    is deterministic in `seed`; restarts are independent, and the result is
    the feasible iterate of the lowest restart index.
    """
    M = _as_square(M, "M")
    N = _as_square(N, "N")
    n = M.shape[0]
    gam = M + N
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    warm = _lyapunov_init(gam)
    best_obj = np.inf
    total_iters = 0
    for r in range(restarts):
        if r == 0 and warm is not None:
            p1 = warm.copy()
            p2 = warm.copy()
            p3 = warm.copy()
            q = np.eye(n) * max(np.trace(warm) / n, 0.1)
        elif r == 0:
            p1 = np.eye(n)
            p2 = np.eye(n)
            p3 = np.eye(n)
            q = np.eye(n)
        else:
            a = rng.normal(size=(n, n))
            p1 = np.eye(n) + 0.3 * (a + a.T) / 2.0
            a = rng.normal(size=(n, n))
            q = np.eye(n) * rng.uniform(0.1, 2.0) + 0.3 * (a + a.T) / 2.0
            p2 = rng.normal(size=(n, n)) * 0.7
            p3 = rng.normal(size=(n, n)) * 0.7
        for k in range(max_iters):
            total_iters += 1
            scale = max(np.linalg.norm(p1), np.linalg.norm(p2),
                        np.linalg.norm(p3), np.linalg.norm(q))
            if not np.isfinite(scale) or scale == 0.0:
                break
            block = assemble_descriptor_lmi(
                M, N, h_M,
                LmiCertificate(SymMatrix(p1), p2, p3, SymMatrix(q), h_M))
            spec_z = sym_eig(block)
            spec_p = sym_eig(SymMatrix(p1))
            spec_q = sym_eig(SymMatrix(q))
            # homogeneity screen before running the exact check on the
            # normalized iterate
            if (spec_z.lambda_max < -margin * scale
                    and spec_p.lambda_min > margin * scale
                    and spec_q.lambda_min > margin * scale):
                cand = LmiCertificate(SymMatrix(p1 / scale), p2 / scale,
                                      p3 / scale, SymMatrix(q / scale), h_M)
                rep = check_certificate(M, N, h_M, cand, margin)
                if rep.feasible:
                    return SynthesisResult(cand, rep.lambda_max_lmi, r, k)
            terms = (spec_z.lambda_max, -spec_p.lambda_min + mu,
                     -spec_q.lambda_min + mu)
            act = int(np.argmax(terms))
            obj = terms[act]
            best_obj = min(best_obj, obj / scale)
            g1 = np.zeros((n, n))
            g2 = np.zeros((n, n))
            g3 = np.zeros((n, n))
            gq = np.zeros((n, n))
            if act == 0:
                v = spec_z.basis[:, -1]
                v1, v2, v3 = v[:n], v[n:2 * n], v[2 * n:]
                g1 = np.outer(v1, v2) + np.outer(v2, v1)
                g2 = (2.0 * np.outer(gam @ v1, v1) - 2.0 * np.outer(v2, v1)
                      + 2.0 * h_M * np.outer(N @ v3, v1))
                g3 = (2.0 * np.outer(gam @ v1, v2) - 2.0 * np.outer(v2, v2)
                      + 2.0 * h_M * np.outer(N @ v3, v2))
                gq = h_M * (np.outer(v2, v2) - np.outer(v3, v3))
            elif act == 1:
                u = spec_p.basis[:, 0]
                g1 = -np.outer(u, u)
            else:
                u = spec_q.basis[:, 0]
                gq = -np.outer(u, u)
            g1 = (g1 + g1.T) / 2.0
            gq = (gq + gq.T) / 2.0
            gnorm = np.sqrt((g1 * g1).sum() + (g2 * g2).sum()
                            + (g3 * g3).sum() + (gq * gq).sum())
            if gnorm < 1e-14:
                break
            step = step_scale * min(0.5, max(0.3 * abs(obj), 0.01)) \
                / np.sqrt(1.0 + 0.02 * k)
            p1 = p1 - step * g1 / gnorm
            p2 = p2 - step * g2 / gnorm
            p3 = p3 - step * g3 / gnorm
            q = q - step * gq / gnorm
    return SynthesisResult(None, best_obj, restarts, total_iters)


# ---------------------------------------------------------------------------
# delay bound search

@dataclass(frozen=True)
class DelaySweepResult:
    h_star: Optional[float]
    certificate: Optional[LmiCertificate]
    feasible_at_lo: bool
    probes: tuple

    @property
    def found(self):
        return self.h_star is not None


def max_feasible_delay(M, N, h_lo=1e-3, h_hi=10.0, tol=1e-3, seed=0,
                       restarts=12, max_iters=400):
    """Largest h in [h_lo, h_hi] (within tol) at which synthesis succeeds.

    Monotone bisection under the documented assumption that feasibility is
    monotone in the delay bound; a coarse scan guards the assumption and
    falls back to a linear scan (step 10*tol) when they disagree.
    """
    probes = []
    results = {}

    def probe(h):
        res = synthesize_certificate(M, N, h, restarts=restarts,
                                     max_iters=max_iters, seed=seed)
        probes.append((h, res.feasible))
        results[h] = res
        return res

    if probe(h_hi).feasible:
        return DelaySweepResult(h_hi, results[h_hi].certificate, True,
                                tuple(probes))
    if not probe(h_lo).feasible:
        return DelaySweepResult(None, None, False, tuple(probes))

    coarse = np.linspace(h_lo, h_hi, 6)[1:-1]
    coarse_feas = [probe(h).feasible for h in coarse]
    monotone = all(coarse_feas[i] >= coarse_feas[i + 1]
                   for i in range(len(coarse_feas) - 1))
    feasible_hs = [h_lo] + [h for h, f in zip(coarse, coarse_feas) if f]
    if not monotone:
        # non-monotone pattern: conservative linear scan upward from the
        # highest feasible coarse point
        h = max(feasible_hs)
        cert = results[h].certificate
        while h + 10.0 * tol <= h_hi:
            nxt = probe(h + 10.0 * tol)
            if not nxt.feasible:
                break
            h += 10.0 * tol
            cert = nxt.certificate
        return DelaySweepResult(h, cert, True, tuple(probes))

    lo = max(feasible_hs)
    infeasible_hs = [h_hi] + [h for h, f in zip(coarse, coarse_feas) if not f]
    hi = min(infeasible_hs)
    cert = results[lo].certificate
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        res = probe(mid)
        if res.feasible:
            lo, cert = mid, res.certificate
        else:
            hi = mid
    return DelaySweepResult(lo, cert, True, tuple(probes))


# ---------------------------------------------------------------------------
# nonlinear analysis constants

def assemble_theta(M, N, h_M, cert):
    """The 2n x 2n reduced matrix obtained by folding the delayed-channel
    block back through Q^{-1} (Schur complement of the assembled block)."""
    M = _as_square(M, "M")
    N = _as_square(N, "N")
    n = M.shape[0]
    q = cert.q.entries
    if sym_eig(cert.q).lambda_min <= 1e-12:
        raise ValueError("Q is singular (lambda_min <= 1e-12)")
    gam = M + N
    p1 = cert.p1.entries
    p = np.block([[p1, np.zeros((n, n))], [cert.p2, cert.p3]])
    e = np.block([[np.zeros((n, n)), np.eye(n)], [gam, -np.eye(n)]])
    theta = p.T @ e + e.T @ p
    theta[n:, n:] += h_M * q
    col = p.T @ np.vstack([np.zeros((n, n)), N])
    theta += h_M * col @ np.linalg.solve(q, col.T)
    return SymMatrix(theta)


GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def nonlinear_region(M, N, h_M, cert, growth):
    """Constants (epsilon, delta, eta, H) of the certified local region.

    epsilon is picked by golden-section search over (0, -lambda_max(Theta))
    maximizing H; eta = -lambda_max(Theta) - epsilon and
    delta = (||P2^T||^2 + ||P3^T||^2) / epsilon by definition.
    """
    rep = check_certificate(M, N, h_M, cert, margin=0.0)
    if not rep.feasible:
        raise ValueError("no linear certificate")
    theta = assemble_theta(M, N, h_M, cert)
    lam_theta = sym_eig(theta).lambda_max
    if lam_theta >= 0:
        raise ValueError("no linear certificate")
    norm_sq = matrix_2norm(cert.p2.T) ** 2 + matrix_2norm(cert.p3.T) ** 2

    def h_of(eps):
        eta = -lam_theta - eps
        delta = norm_sq / eps
        grow = (eta / (2.0 * delta * growth.beta ** 2)) \
            ** (1.0 / (2.0 * growth.gamma))
        return min(growth.alpha, grow)

    lo = -lam_theta * 1e-9
    hi = -lam_theta * (1.0 - 1e-9)
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = h_of(c), h_of(d)
    for _ in range(200):
        if b - a < 1e-14 * (hi - lo):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = h_of(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = h_of(d)
    eps = 0.5 * (a + b)
    eta = -lam_theta - eps
    delta = norm_sq / eps
    return NonlinearRegion(eps, delta, eta, h_of(eps))
