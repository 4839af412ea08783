"""Dense primal-dual interior-point solver for small Hermitian SDPs.

Problem form:  minimize c^T x  subject to  S(x) = F0 + sum_i x_i F_i >= 0,
with Hermitian F blocks.  The dual is max -<F0, Y> over Y >= 0 with
<F_i, Y> = c_i, and <S, Y> is the duality gap reported on exit.

The solver is a Nesterov-Todd scaled predictor-corrector method.  Problem
sizes in this package are tens per side, so everything is dense and
factorized fresh each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, DomainError

__all__ = ["SdpResult", "solve_sdp"]


@dataclass(frozen=True)
class SdpResult:
    x: np.ndarray
    objective: float
    gap: float
    dual_residual: float
    iterations: int


def _inner(a, b) -> float:
    # Tr(A B) for Hermitian A, B
    return float(np.real(np.sum(a.conj() * b)))


def _psd_power(a, power: float, floor: float = 0.0) -> np.ndarray:
    w, u = np.linalg.eigh(a)
    w = np.maximum(w, floor)
    return (u * (w ** power)) @ u.conj().T


def solve_sdp(c, f0, fs, x0, tol_gap: float = 1e-9, tol_feas: float = 1e-8, max_iter: int = 100) -> SdpResult:
    """Solve min c^T x with F0 + sum x_i F_i >= 0 from a strictly feasible x0."""
    c = np.asarray(c, dtype=float).reshape(-1)
    f0 = np.asarray(f0, dtype=complex)
    fs = [np.asarray(f, dtype=complex) for f in fs]
    p = c.size
    if len(fs) != p:
        raise DomainError("one constraint matrix per variable is required")
    m = f0.shape[0]
    x = np.asarray(x0, dtype=float).reshape(-1).copy()

    def s_of(xv):
        s = f0.copy()
        for i in range(p):
            s += xv[i] * fs[i]
        return 0.5 * (s + s.conj().T)

    s = s_of(x)
    if float(np.min(np.linalg.eigvalsh(s))) <= 0:
        raise DomainError("initial point is not strictly feasible")
    y = np.eye(m, dtype=complex)

    def max_step(mat, dmat):
        """Largest alpha with mat + alpha dmat > 0 (mat > 0)."""
        half_inv = _psd_power(mat, -0.5)
        w = np.linalg.eigvalsh(0.5 * ((half_inv @ dmat @ half_inv) + (half_inv @ dmat @ half_inv).conj().T))
        wmin = float(np.min(w))
        return np.inf if wmin >= -1e-14 else -1.0 / wmin

    gap = _inner(s, y)
    best_gap = gap
    stall = 0
    for it in range(1, max_iter + 1):
        resid = np.array([c[i] - _inner(fs[i], y) for i in range(p)])
        rnorm = float(np.max(np.abs(resid))) if p else 0.0
        gap = _inner(s, y)
        scale = 1.0 + abs(float(c @ x))
        if gap / scale <= tol_gap and rnorm / scale <= tol_feas:
            return SdpResult(x, float(c @ x), gap, rnorm, it - 1)

        mu = gap / m
        s_half = _psd_power(s, 0.5)
        s_half_inv = _psd_power(s, -0.5)
        t = s_half @ y @ s_half
        t = 0.5 * (t + t.conj().T)
        w_inv = s_half_inv @ _psd_power(t, 0.5, floor=1e-300) @ s_half_inv
        w_inv = 0.5 * (w_inv + w_inv.conj().T)
        s_inv = s_half_inv @ s_half_inv

        g = [w_inv @ f @ w_inv for f in fs]
        big = np.empty((p, p))
        for i in range(p):
            for j in range(i, p):
                big[i, j] = big[j, i] = _inner(fs[i], g[j])
        try:
            cho = scipy.linalg.cho_factor(big + 1e-14 * np.trace(big) / max(p, 1) * np.eye(p))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "interior-point Schur complement lost positive definiteness",
                details={"iteration": it, "gap": gap, "dual_residual": rnorm},
            ) from exc

        def direction(sigma_mu):
            q = np.array([sigma_mu * _inner(fs[i], s_inv) - c[i] for i in range(p)])
            dx = scipy.linalg.cho_solve(cho, q)
            ds = sum(dx[i] * fs[i] for i in range(p)) if p else np.zeros_like(s)
            dy = sigma_mu * s_inv - y - w_inv @ ds @ w_inv
            dy = 0.5 * (dy + dy.conj().T)
            return dx, ds, dy

        # Predictor (sigma = 0) fixes the centering weight.
        dx_a, ds_a, dy_a = direction(0.0)
        a_s = min(1.0, 0.99 * max_step(s, ds_a))
        a_y = min(1.0, 0.99 * max_step(y, dy_a))
        gap_aff = _inner(s + a_s * ds_a, y + a_y * dy_a)
        sigma = float(np.clip((max(gap_aff, 0.0) / gap) ** 3, 1e-4, 0.9))

        dx, ds, dy = direction(sigma * mu)
        a_s = min(1.0, 0.98 * max_step(s, ds))
        a_y = min(1.0, 0.98 * max_step(y, dy))
        alpha = min(a_s, a_y)
        if alpha < 1e-10:
            raise ConvergenceError(
                "interior-point line search stalled",
                details={"iteration": it, "gap": gap, "dual_residual": rnorm},
            )
        x = x + alpha * dx
        s = s_of(x)
        y = y + alpha * dy
        y = 0.5 * (y + y.conj().T)

        if gap < best_gap * 0.999:
            best_gap = gap
            stall = 0
        else:
            stall += 1
            if stall > 15:
                raise ConvergenceError(
                    "interior-point made no progress over 15 iterations",
                    details={"iteration": it, "gap": gap, "dual_residual": rnorm},
                )

    resid = np.array([c[i] - _inner(fs[i], y) for i in range(p)])
    raise ConvergenceError(
        "interior-point iteration budget exhausted",
        details={
            "iteration": max_iter,
            "gap": _inner(s, y),
            "dual_residual": float(np.max(np.abs(resid))) if p else 0.0,
        },
    )
