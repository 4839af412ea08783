"""Classical and quantum Fisher information and logarithmic derivatives.

Kernel convention throughout: eigenvalues of rho below eps are treated as
exact zeros first, and any entry whose denominator then falls below eps is
set to zero.  This matches the symmetric-logarithmic-derivative convention
used by the optimizers, so information read from a rank-deficient state is
the information of its support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, NonExistenceError
from .linalg import dagger, herm, unvec
from .operators import sic_povm
from .states import DerivedState, Povm, QuantumState

__all__ = [
    "InfoMatrix",
    "LogDerivative",
    "WeightMatrix",
    "sld",
    "sld_vec",
    "rld",
    "lld",
    "qfim",
    "qfi",
    "qfim_kraus",
    "cfim",
    "cfi",
    "fim",
    "TargetTimeResult",
    "target_time",
]


@dataclass(frozen=True)
class InfoMatrix:
    """Real symmetric PSD information matrix with parameter labels.

    For non-SLD quantum variants the full complex matrix is kept in
    complex_entries; entries always holds the real part.
    """

    entries: np.ndarray
    labels: tuple = ()
    complex_entries: object = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionError("information matrix must be square")
        if np.max(np.abs(a - a.T)) > 1e-10:
            raise DomainError("information matrix is not symmetric within 1e-10")
        if float(np.min(np.linalg.eigvalsh(a))) < -1e-8:
            raise DomainError("information matrix is not PSD within 1e-8")
        a.setflags(write=False)
        labels = tuple(self.labels) if self.labels else tuple(f"x{i}" for i in range(a.shape[0]))
        if len(labels) != a.shape[0]:
            raise DimensionError("label count differs from matrix size")
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def scalar(self) -> float:
        if self.n != 1:
            raise DomainError("scalar view requires a single parameter")
        return float(self.entries[0, 0])

    def __float__(self) -> float:
        return self.scalar


@dataclass(frozen=True)
class WeightMatrix:
    """Real symmetric PSD weight for multiparameter scalarization."""

    W: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.W, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise DimensionError("weight matrix must be square")
        if np.max(np.abs(a - a.T)) > 1e-10:
            raise DomainError("weight matrix is not symmetric")
        if float(np.min(np.linalg.eigvalsh(a))) < -1e-10:
            raise DomainError("weight matrix is not PSD")
        a.setflags(write=False)
        object.__setattr__(self, "W", a)

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class LogDerivative:
    """SLD/RLD/LLD operators, one per parameter, in the requested basis."""

    kind: str
    ops: tuple
    rep: str = "original"

    def __post_init__(self):
        if self.kind not in ("SLD", "RLD", "LLD"):
            raise DomainError(f"unknown logarithmic derivative kind {self.kind!r}")
        if self.rep not in ("original", "eigen"):
            raise DomainError(f"unknown representation {self.rep!r}")
        ops = tuple(np.asarray(o, dtype=complex) for o in self.ops)
        if self.kind == "SLD":
            for o in ops:
                if np.max(np.abs(o - dagger(o))) > 1e-10:
                    raise DomainError("SLD operators must be Hermitian")
        object.__setattr__(self, "ops", ops)


def _eig_state(ds: DerivedState, eps: float):
    w, u = np.linalg.eigh(ds.state.rho)
    w = np.where(w < eps, 0.0, w)
    tilded = [dagger(u) @ dr @ u for dr in ds.derivs]
    return w, u, tilded


def sld(ds: DerivedState, rep: str = "original", eps: float = 1e-8) -> LogDerivative:
    """Symmetric logarithmic derivatives: rho L + L rho = 2 d_rho.

    Solved entrywise in the eigenbasis of rho; entries whose eigenvalue sum
    falls below eps are zero by convention.
    """
    w, u, tilded = _eig_state(ds, eps)
    denom = w[:, None] + w[None, :]
    ok = denom >= eps
    safe = np.where(ok, denom, 1.0)
    ops = []
    for c in tilded:
        lt = np.where(ok, 2.0 * c / safe, 0.0)
        ops.append(u @ lt @ dagger(u) if rep == "original" else lt)
    return LogDerivative("SLD", ops, rep)


def sld_vec(ds: DerivedState, eps: float = 1e-8) -> LogDerivative:
    """SLDs via the vectorized linear system (rho kron I + I kron conj(rho)).

    Pseudo-inverse with absolute cutoff eps; agrees with sld on the support
    of rho.
    """
    rho = ds.state.rho
    d = rho.shape[0]
    eye = np.eye(d)
    m = np.kron(rho, eye) + np.kron(eye, rho.conj())
    w, u = np.linalg.eigh(m)
    inv = np.where(w >= eps, 1.0 / np.where(w == 0, 1.0, w), 0.0)
    ops = []
    for dr in ds.derivs:
        x = u @ (inv * (dagger(u) @ (2.0 * dr.reshape(-1))))
        ops.append(herm(unvec(x, d)))
    return LogDerivative("SLD", ops, "original")


def _one_sided(ds: DerivedState, eps: float, left: bool, rep: str) -> LogDerivative:
    w, u, tilded = _eig_state(ds, eps)
    support = w >= eps
    ops = []
    for a, c in enumerate(tilded):
        bad = np.max(np.abs(c[~support, :])) if np.any(~support) else 0.0
        if bad > eps:
            raise NonExistenceError(
                f"derivative {a} leaks outside the support of rho "
                f"(max kernel magnitude {bad:.2e}); RLD/LLD do not exist"
            )
        lam = np.where(support, w, 1.0)
        if left:
            out = np.where(support[None, :], c / lam[None, :], 0.0)
        else:
            out = np.where(support[:, None], c / lam[:, None], 0.0)
        ops.append(u @ out @ dagger(u) if rep == "original" else out)
    return LogDerivative("LLD" if left else "RLD", ops, rep)


def rld(ds: DerivedState, rep: str = "original", eps: float = 1e-8) -> LogDerivative:
    """Right logarithmic derivatives: d_rho = rho R, entries d_rho_ij / lambda_i."""
    return _one_sided(ds, eps, left=False, rep=rep)


def lld(ds: DerivedState, rep: str = "original", eps: float = 1e-8) -> LogDerivative:
    """Left logarithmic derivatives: d_rho = R† rho, entries d_rho_ij / lambda_j."""
    return _one_sided(ds, eps, left=True, rep=rep)


def qfim(
    ds: DerivedState,
    ld_type: str = "SLD",
    export_ld: bool = False,
    eps: float = 1e-8,
    labels=(),
):
    """Quantum Fisher information matrix.

    SLD: F_ab = Re Tr(rho L_a L_b).  RLD/LLD: Tr(rho R_a R_b†); the real part
    populates entries and the complex matrix rides along in complex_entries.
    """
    if ds.n_params < 1:
        raise DomainError("qfim needs at least one parameter derivative")
    rho = ds.state.rho
    n = ds.n_params
    if ld_type == "SLD":
        ld = sld(ds, rep="original", eps=eps)
        f = np.empty((n, n))
        for a in range(n):
            for b in range(a, n):
                val = float(np.trace(rho @ ld.ops[a] @ ld.ops[b]).real)
                f[a, b] = f[b, a] = val
        out = InfoMatrix(f, labels)
    elif ld_type in ("RLD", "LLD"):
        ld = rld(ds, eps=eps) if ld_type == "RLD" else lld(ds, eps=eps)
        fc = np.empty((n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                fc[a, b] = np.trace(rho @ ld.ops[a] @ dagger(ld.ops[b]))
        fc.setflags(write=False)
        out = InfoMatrix(herm(fc).real, labels, complex_entries=fc)
    else:
        raise DomainError(f"unknown ld_type {ld_type!r}")
    return (out, ld) if export_ld else out


def qfi(ds: DerivedState, eps: float = 1e-8) -> float:
    """Single-parameter quantum Fisher information."""
    return qfim(ds, eps=eps).scalar


def qfim_kraus(rho0, ch, ld_type: str = "SLD", eps: float = 1e-8) -> InfoMatrix:
    from .dynamics import kraus_apply

    return qfim(kraus_apply(rho0, ch), ld_type=ld_type, eps=eps)


def _povm_stats(ds: DerivedState, m: Povm):
    rho = ds.state.rho
    p = np.array([float(np.trace(op @ rho).real) for op in m.ops])
    dp = np.array(
        [[float(np.trace(op @ dr).real) for dr in ds.derivs] for op in m.ops]
    )
    return p, dp


def cfim(ds: DerivedState, M: Povm | None = None, eps: float = 1e-8, labels=()) -> InfoMatrix:
    """Classical Fisher information of measuring ds.state with POVM M.

    M defaults to the symmetric informationally complete POVM of matching
    dimension.  Outcomes with probability below eps are dropped.
    """
    if M is None:
        M = Povm(sic_povm(ds.dim))
    elif not isinstance(M, Povm):
        M = Povm(M)
    if M.dim != ds.dim:
        raise DimensionError("POVM dimension differs from the state")
    p, dp = _povm_stats(ds, M)
    n = ds.n_params
    f = np.zeros((n, n))
    for y in range(p.size):
        if p[y] < eps:
            continue
        f += np.outer(dp[y], dp[y]) / p[y]
    return InfoMatrix(0.5 * (f + f.T), labels)


def cfi(ds: DerivedState, M: Povm | None = None, eps: float = 1e-8) -> float:
    return cfim(ds, M, eps).scalar


def fim(p, dp, eps: float = 1e-8, labels=()) -> InfoMatrix:
    """Fisher information of an explicit distribution p(y) with derivatives dp."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if np.any(p < 0):
        raise DomainError("probabilities must be nonnegative")
    if abs(p.sum() - 1.0) > 1e-8:
        raise DomainError(f"probabilities sum to {p.sum()!r}, not 1")
    dp = np.atleast_2d(np.asarray(dp, dtype=float))
    if dp.shape[0] != p.size:
        dp = dp.T
    if dp.shape[0] != p.size:
        raise DimensionError("dp must provide one derivative row per outcome")
    n = dp.shape[1]
    f = np.zeros((n, n))
    for y in range(p.size):
        if p[y] < eps:
            continue
        f += np.outer(dp[y], dp[y]) / p[y]
    return InfoMatrix(0.5 * (f + f.T), labels)


@dataclass(frozen=True)
class TargetTimeResult:
    found: bool
    time: object
    value: float


def target_time(f_target: float, tspan, trajectory, objective, **kwargs) -> TargetTimeResult:
    """First time the objective crosses f_target along a trajectory.

    objective is a callable on DerivedState or one of "qfi" / "cfi" (cfi
    accepts a povm keyword).  Linear interpolation locates the crossing
    inside the bracketing step; a never-reached target yields found=False
    with the final value.
    """
    tspan = np.asarray(tspan, dtype=float).reshape(-1)
    if len(trajectory) != tspan.size:
        raise DimensionError("trajectory and tspan lengths differ")
    if objective == "qfi":
        fn = lambda ds: qfi(ds, **kwargs)
    elif objective == "cfi":
        fn = lambda ds: cfi(ds, **kwargs)
    elif callable(objective):
        fn = objective
    else:
        raise DomainError(f"objective {objective!r} is neither callable nor a known name")
    vals = np.array([fn(ds) for ds in trajectory], dtype=float)
    s = vals - f_target
    if s[0] == 0.0:
        return TargetTimeResult(True, float(tspan[0]), float(vals[0]))
    for j in range(1, s.size):
        if s[j] == 0.0 or s[j - 1] * s[j] < 0:
            frac = s[j - 1] / (s[j - 1] - s[j])
            t = tspan[j - 1] + frac * (tspan[j] - tspan[j - 1])
            return TargetTimeResult(True, float(t), float(f_target))
    return TargetTimeResult(False, None, float(vals[-1]))
