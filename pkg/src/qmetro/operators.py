"""Standard operator families: Paulis, su(N) generators, trace-orthonormal
bases, spin operators, and symmetric informationally complete POVMs."""

from __future__ import annotations

import functools

import numpy as np
import scipy.optimize

from .errors import ConvergenceError, DomainError

__all__ = [
    "sigma_x",
    "sigma_y",
    "sigma_z",
    "sigma_plus",
    "sigma_minus",
    "paulis",
    "su_generators",
    "operator_basis",
    "spin_operators",
    "sic_povm",
]

sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
sigma_y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
sigma_z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
sigma_plus = 0.5 * (sigma_x + 1.0j * sigma_y)   # |0><1| raising on (|0>, |1>)
sigma_minus = 0.5 * (sigma_x - 1.0j * sigma_y)


def paulis():
    """(sigma_x, sigma_y, sigma_z) as fresh arrays."""
    return sigma_x.copy(), sigma_y.copy(), sigma_z.copy()


def su_generators(d: int):
    """Generalized Gell-Mann matrices for su(d), normalized Tr(G_i G_j) = 2 δij.

    Ordering: for each pair (j, k) with j < k in lexicographic order the
    symmetric generator E_jk + E_kj, then the antisymmetric -i(E_jk - E_kj);
    afterwards the d-1 diagonal generators
    sqrt(2/(l(l+1))) (sum_{m<=l} E_mm - l E_{l+1,l+1}).  For d = 2 this is
    exactly (sigma_x, sigma_y, sigma_z).
    """
    if d < 2:
        raise DomainError(f"su(d) needs d >= 2, got {d}")
    gens = []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = 1.0
            s[k, j] = 1.0
            gens.append(s)
            a = np.zeros((d, d), dtype=complex)
            a[j, k] = -1.0j
            a[k, j] = 1.0j
            gens.append(a)
    for l in range(1, d):
        g = np.zeros((d, d), dtype=complex)
        coeff = np.sqrt(2.0 / (l * (l + 1)))
        for m in range(l):
            g[m, m] = coeff
        g[l, l] = -l * coeff
        gens.append(g)
    return gens


def operator_basis(d: int):
    """Hermitian basis orthonormal under the Hilbert-Schmidt inner product.

    Element 0 is I/sqrt(d); the rest are the su(d) generators divided by
    sqrt(2).  Tr(B_i B_j) = δij, and every Hermitian matrix expands with
    real coefficients Tr(B_i A).
    """
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    basis.extend(g / np.sqrt(2.0) for g in su_generators(d))
    return basis


def spin_operators(j: float):
    """(J_x, J_y, J_z) for spin j on the basis m = j, j-1, ..., -j."""
    twoj = int(round(2 * j))
    if twoj < 0 or abs(2 * j - twoj) > 1e-12:
        raise DomainError(f"spin must be a nonnegative half-integer, got {j}")
    dim = twoj + 1
    m = j - np.arange(dim)
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        # <m+1| J+ |m> with m = m[k]
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


def _wh_displacements(d: int):
    """Weyl-Heisenberg displacement operators D_ab, (a, b) != (0, 0)."""
    shift = np.zeros((d, d), dtype=complex)
    for k in range(d):
        shift[(k + 1) % d, k] = 1.0
    clock = np.diag(np.exp(2.0j * np.pi * np.arange(d) / d))
    tau = -np.exp(1.0j * np.pi / d)
    out = []
    apow = np.eye(d, dtype=complex)
    for a in range(d):
        bpow = np.eye(d, dtype=complex)
        for b in range(d):
            if a or b:
                out.append((tau ** (a * b)) * apow @ bpow)
            bpow = bpow @ clock
        apow = apow @ shift
    return out


def _frame_potential(psi_r, disps, d):
    """Frame potential and its gradient wrt the real parameter vector.

    psi_r holds (Re psi, Im psi).  Returns (g, grad) where
    g = sum_t |<psi|D_t|psi>|^4 / ||psi||^8; global minimum (d-1)/(d+1)
    is attained exactly on SIC fiducials.
    """
    psi = psi_r[:d] + 1.0j * psi_r[d:]
    nrm2 = float(np.real(np.vdot(psi, psi)))
    acc = 0.0
    grad_c = np.zeros(d, dtype=complex)   # d g / d conj(psi), fixed norm part
    for dop in disps:
        dpsi = dop @ psi
        w = np.vdot(psi, dpsi)
        aw2 = (w.real * w.real + w.imag * w.imag)
        acc += aw2 * aw2
        grad_c += 2.0 * aw2 * (np.conj(w) * dpsi + w * (dop.conj().T @ psi))
    g = acc / nrm2**4
    grad_c = grad_c / nrm2**4 - 4.0 * g * psi / nrm2
    grad = np.concatenate([2.0 * grad_c.real, 2.0 * grad_c.imag])
    return g, grad


@functools.lru_cache(maxsize=None)
def _sic_fiducial(d: int):
    disps = _wh_displacements(d)
    target = (d - 1.0) / (d + 1.0)
    rng = np.random.default_rng(20240517)
    best = None
    for _ in range(40):
        x0 = rng.standard_normal(2 * d)
        res = scipy.optimize.minimize(
            _frame_potential,
            x0,
            args=(disps, d),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 4000, "ftol": 1e-18, "gtol": 1e-14},
        )
        if best is None or res.fun < best.fun:
            best = res
        if best.fun - target < 1e-15:
            break
    if best.fun - target > 1e-13:
        raise ConvergenceError(
            f"SIC fiducial search stalled for d={d}",
            details={"potential": float(best.fun), "target": target},
        )
    psi = best.x[:d] + 1.0j * best.x[d:]
    psi = psi / np.linalg.norm(psi)
    # Fix global phase for reproducibility.
    k = int(np.argmax(np.abs(psi)))
    psi = psi * np.exp(-1.0j * np.angle(psi[k]))
    return psi


def sic_povm(d: int):
    """Weyl-Heisenberg covariant SIC-POVM: d^2 elements (1/d)|psi_t><psi_t|.

    Pairwise overlaps |<psi_s|psi_t>|^2 = 1/(d+1) to about 1e-7 and the
    elements sum to the identity by group covariance.  Fiducials are found
    numerically per dimension and cached; supported for 2 <= d <= 16.
    """
    if not (2 <= d <= 16):
        raise DomainError(f"sic_povm supports 2 <= d <= 16, got {d}")
    psi = _sic_fiducial(d)
    vecs = [psi]
    for dop in _wh_displacements(d):
        v = dop @ psi
        vecs.append(v / np.linalg.norm(v))
    return [np.outer(v, v.conj()) / d for v in vecs]
