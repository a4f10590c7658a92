"""Dense symmetric linear algebra and quadrature shared by all modules."""
from dataclasses import dataclass

import numpy as np

from . import _backend

__all__ = ["SymMatrix", "Spectrum", "sym_eig", "is_negative_definite",
           "weighted_quadrature", "matrix_2norm"]


@dataclass(frozen=True)
class SymMatrix:
    """Dense real symmetric matrix; symmetrized exactly on construction."""
    entries: np.ndarray

    def __init__(self, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("SymMatrix requires a square matrix")
        if a.shape[0] < 1:
            raise ValueError("SymMatrix dimension must be >= 1")
        object.__setattr__(self, "entries", (a + a.T) / 2.0)

    @property
    def dim(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (ascending) and orthogonal eigenvector basis (columns)."""
    eigenvalues: np.ndarray
    basis: np.ndarray

    def reconstruct(self):
        return (self.basis * self.eigenvalues) @ self.basis.T

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues[-1])


def _as_matrix(S):
    if isinstance(S, SymMatrix):
        return S.entries
    a = np.asarray(S, dtype=float)
    return (a + a.T) / 2.0


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    a = _as_matrix(S)
    if not np.all(np.isfinite(a)):
        raise ValueError("invalid matrix: non-finite entries")
    w, V = _backend.jacobi_eigh(np.ascontiguousarray(a))
    return Spectrum(np.asarray(w), np.asarray(V))


def is_negative_definite(S, margin=0.0):
    """True iff lambda_max(S) < -margin (strict, so margin=0 rejects singular)."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return sym_eig(S).lambda_max < -margin


def weighted_quadrature(f, a, b, weight=None, panels=16):
    """Composite-Simpson approximation of the weighted integral of f on [a, b].

    `f` maps an array of abscissae to an array of samples (scalar or
    vector-valued per point); `weight` is an optional scalar function of s.
    The panel count is the number of subintervals, rounded up to even, which
    makes the rule exact for polynomial integrands of degree <= 3 per panel.
    """
    if a > b:
        raise ValueError("quadrature requires a <= b")
    if panels < 1:
        raise ValueError("panels must be >= 1")
    if a == b:
        probe = np.asarray(f(np.array([a])), dtype=float)
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0
    n = int(panels)
    if n % 2:
        n += 1
    s = np.linspace(a, b, n + 1)
    fs = np.asarray(f(s), dtype=float)
    if weight is not None:
        ws = np.asarray(weight(s), dtype=float)
        fs = fs * ws.reshape((-1,) + (1,) * (fs.ndim - 1))
    coeff = np.ones(n + 1)
    coeff[1:-1:2] = 4.0
    coeff[2:-1:2] = 2.0
    h = (b - a) / n
    out = (h / 3.0) * np.tensordot(coeff, fs, axes=(0, 0))
    return float(out) if out.ndim == 0 else out


def matrix_2norm(M):
    """Largest singular value, computed as sqrt(lambda_max(M^T M))."""
    a = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("invalid matrix: non-finite entries")
    lam = sym_eig(a.T @ a).lambda_max
    return float(np.sqrt(max(lam, 0.0)))
