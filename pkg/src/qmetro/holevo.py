"""Holevo Cramer-Rao bound via semidefinite programming.

The scalar bound min_X Tr(W Z(X)) over locally unbiased observable vectors
X_a = sum_i Lambda_ai lambda_i is computed as

    minimize Tr(W V)  subject to  [[V, B†], [B, I]] >= 0,  Lambda G = I_n,

with B = R Lambda^T, R the principal PSD square root of the Gram matrix
M_jk = Tr(rho lambda_j lambda_k), and G_ib = Tr(lambda_i d_b rho).  The
equality constraint is eliminated exactly: Lambda = pinv(G) plus a free
combination of the left null space of G, so the interior-point solver only
sees the LMI.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibilityError
from .fisher import WeightMatrix, qfim
from .sdp import solve_sdp
from .states import DerivedState, OperatorBasis

__all__ = ["HcrbProblem", "HcrbSolution", "hcrb"]


@dataclass(frozen=True)
class HcrbSolution:
    value: float
    Lambda: np.ndarray
    V: np.ndarray
    gap: float
    iterations: int


@dataclass(frozen=True)
class HcrbProblem:
    """One bound evaluation: state with derivatives, weight, operator basis."""

    ds: DerivedState
    W: WeightMatrix
    basis: OperatorBasis

    def __init__(self, ds: DerivedState, W=None, basis: OperatorBasis | None = None):
        n = ds.n_params
        if W is None:
            W = WeightMatrix(np.eye(n))
        elif not isinstance(W, WeightMatrix):
            W = WeightMatrix(W)
        if W.n != n:
            raise InfeasibilityError(
                f"weight matrix size {W.n} differs from parameter count {n}"
            )
        if basis is None:
            basis = OperatorBasis(ds.dim)
        object.__setattr__(self, "ds", ds)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "basis", basis)

    def solve(self, eps: float = 1e-8, tol: float = 1e-9) -> HcrbSolution:
        ds, w = self.ds, self.W.W
        n = ds.n_params
        d2 = len(self.basis)
        lams = self.basis.elems
        rho = ds.state.rho

        g = np.empty((d2, n))
        for i, lam in enumerate(lams):
            for b, dr in enumerate(ds.derivs):
                g[i, b] = float(np.trace(lam @ dr).real)
        sv = np.linalg.svd(g, compute_uv=False)
        if sv.size < n or sv[n - 1] <= 1e-10 * max(sv[0], 1e-30):
            raise InfeasibilityError(
                "state derivatives are linearly dependent; unbiasedness "
                "constraints cannot all hold"
            )

        gram = np.empty((d2, d2), dtype=complex)
        for j in range(d2):
            for k in range(j, d2):
                v = np.trace(rho @ lams[j] @ lams[k])
                gram[j, k] = v
                gram[k, j] = np.conj(v)
        wg, ug = np.linalg.eigh(gram)
        r = (ug * np.sqrt(np.maximum(wg, 0.0))) @ ug.conj().T

        lam0 = np.linalg.pinv(g)          # n x d2, lam0 @ g = I
        u_full, _, _ = np.linalg.svd(g)
        nullb = u_full[:, n:]             # left null space of g: columns n_t

        m = n + d2
        nv = n * (n + 1) // 2
        ny = n * (d2 - n)
        b0 = r @ lam0.T

        f0 = np.zeros((m, m), dtype=complex)
        f0[n:, n:] = np.eye(d2)
        f0[:n, n:] = b0.conj().T
        f0[n:, :n] = b0

        fs = []
        c = []
        vech_index = []
        for a in range(n):
            for b in range(a, n):
                f = np.zeros((m, m), dtype=complex)
                f[a, b] = f[b, a] = 1.0
                fs.append(f)
                c.append(w[a, b] if a == b else 2.0 * w[a, b])
                vech_index.append((a, b))
        for a in range(n):
            for t in range(d2 - n):
                db = r @ nullb[:, t : t + 1] @ np.eye(n)[a : a + 1, :]
                f = np.zeros((m, m), dtype=complex)
                f[:n, n:] = db.conj().T
                f[n:, :n] = db
                fs.append(f)
                c.append(0.0)

        x0 = np.zeros(nv + ny)
        top = 1.0 + float(np.linalg.norm(b0, 2)) ** 2
        for idx, (a, b) in enumerate(vech_index):
            if a == b:
                x0[idx] = top
        res = solve_sdp(np.array(c), f0, fs, x0, tol_gap=tol)

        vmat = np.zeros((n, n))
        for idx, (a, b) in enumerate(vech_index):
            vmat[a, b] = vmat[b, a] = res.x[idx]
        y = res.x[nv:].reshape(n, d2 - n)
        lam_opt = lam0 + y @ nullb.T
        return HcrbSolution(res.objective, lam_opt, vmat, res.gap, res.iterations)


def hcrb(ds: DerivedState, W=None, eps: float = 1e-8) -> float:
    """Holevo bound on Tr(W Cov).

    Single-parameter problems return W/QFI exactly, and rank-one weights
    return Tr(W F^-1); both are analytic reductions of the program.
    """
    n = ds.n_params
    if W is None:
        W = WeightMatrix(np.eye(n))
    elif not isinstance(W, WeightMatrix):
        W = WeightMatrix(W)
    f = qfim(ds, eps=eps).entries
    if n == 1:
        return float(W.W[0, 0]) / float(f[0, 0])
    wvals = np.linalg.eigvalsh(W.W)
    if np.sum(wvals > 1e-12 * max(wvals[-1], 1e-30)) == 1:
        return float(np.trace(W.W @ np.linalg.pinv(f)))
    return HcrbProblem(ds, W).solve(eps=eps).value
