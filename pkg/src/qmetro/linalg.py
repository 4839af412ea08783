"""Dense complex linear algebra primitives.

All vectorization in this package is row-major: ``vec(A)[i*d + j] = A[i, j]``.
Under this convention ``vec(A X B) = (A kron B.T) vec(X)``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError

__all__ = [
    "dagger",
    "herm",
    "is_hermitian",
    "expm",
    "expm_frechet",
    "expm_multi_frechet",
    "vec",
    "unvec",
    "sylvester_symmetric",
    "trace_norm",
]


def dagger(a):
    """Conjugate transpose."""
    return np.conj(np.asarray(a)).T


def herm(a):
    """Hermitian part (a + a†)/2."""
    a = np.asarray(a)
    return 0.5 * (a + dagger(a))


def is_hermitian(a, tol: float = 1e-10) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dagger(a))) <= tol


def _require_square(a, name="matrix"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def expm(a):
    """Matrix exponential e^A.

    Scaling-and-squaring with a degree-13 Padé core; relative accuracy
    around 1e-10 or better for ``norm(A) <= 10``.
    """
    a = _require_square(a, "expm argument")
    return scipy.linalg.expm(np.asarray(a, dtype=complex))


def expm_frechet(a, e):
    """Return ``(expm(a), D)`` where D is the Fréchet derivative of expm
    at ``a`` in direction ``e``."""
    a = _require_square(a, "expm argument")
    e = _require_square(e, "direction")
    if a.shape != e.shape:
        raise DimensionError("matrix and direction shapes differ")
    return scipy.linalg.expm_frechet(
        np.asarray(a, dtype=complex), np.asarray(e, dtype=complex), compute_expm=True
    )


def _sinch(z):
    """sinh(z)/z, stable near zero (complex)."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    out = np.sinh(zs) / zs
    series = 1.0 + z * z / 6.0 * (1.0 + z * z / 20.0)
    return np.where(small, series, out)


def expm_multi_frechet(a, directions):
    """``(expm(a), [D_1, ..., D_k])`` for several Fréchet directions at once.

    Diagonalizes ``a`` once and evaluates every derivative through the
    divided-difference kernel phi(l_p, l_q) = (e^{l_p} - e^{l_q})/(l_p - l_q).
    Falls back to per-direction Padé Fréchet calls when the eigenbasis is
    ill-conditioned (the generator need not be normal).
    """
    a = np.asarray(a, dtype=complex)
    directions = [np.asarray(e, dtype=complex) for e in directions]
    if not directions:
        return expm(a), []
    try:
        lam, v = np.linalg.eig(a)
        vinv = np.linalg.inv(v)
        # Conditioning guard: a defective eigenbasis makes the kernel useless.
        if np.linalg.cond(v) < 1e7:
            recon = (v * lam) @ vinv
            scale = max(1.0, np.max(np.abs(a)))
            if np.max(np.abs(recon - a)) <= 1e-12 * scale:
                diff = lam[:, None] - lam[None, :]
                phi = np.exp(0.5 * (lam[:, None] + lam[None, :])) * _sinch(0.5 * diff)
                p = (v * np.exp(lam)) @ vinv
                out = [v @ ((vinv @ e @ v) * phi) @ vinv for e in directions]
                return p, out
    except np.linalg.LinAlgError:
        pass
    p = None
    out = []
    for e in directions:
        p, d = scipy.linalg.expm_frechet(a, e, compute_expm=True)
        out.append(d)
    return p, out


def vec(a):
    """Row-major column stacking: ``vec(A)[i*d + j] = A[i, j]``."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"vec expects a matrix, got ndim={a.ndim}")
    return a.reshape(-1)


def unvec(v, dim: int | None = None):
    """Inverse of :func:`vec`.  Infers the dimension when not given."""
    v = np.asarray(v).reshape(-1)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise DimensionError(f"vector of length {v.size} is not a stacked square matrix")
    return v.reshape(dim, dim)


def sylvester_symmetric(p, c, eps: float = 1e-8):
    """Solve ``P X + X P = C`` for Hermitian PSD ``P`` and Hermitian ``C``.

    Works in the eigenbasis of ``P``: ``X_ij = C_ij / (p_i + p_j)``.  Entries
    with ``p_i + p_j < eps`` are set to zero, the same kernel convention the
    logarithmic-derivative routines use, so the solution is the one supported
    on the support of ``P``.
    """
    p = _require_square(p, "P")
    c = _require_square(c, "C")
    if p.shape != c.shape:
        raise DimensionError("P and C shapes differ")
    w, u = np.linalg.eigh(np.asarray(p, dtype=complex))
    ct = dagger(u) @ np.asarray(c, dtype=complex) @ u
    denom = w[:, None] + w[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        xt = np.where(denom >= eps, ct / np.where(denom == 0, 1.0, denom), 0.0)
    return u @ xt @ dagger(u)


def trace_norm(a) -> float:
    """Sum of singular values; for Hermitian input, the sum of |eigenvalues|."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise DimensionError("trace_norm expects a matrix")
    if not np.all(np.isfinite(a)):
        raise DomainError("trace_norm argument contains non-finite entries")
    if a.shape[0] == a.shape[1] and is_hermitian(a, 1e-12):
        return float(np.sum(np.abs(np.linalg.eigvalsh(a))))
    return float(np.sum(scipy.linalg.svdvals(a)))
