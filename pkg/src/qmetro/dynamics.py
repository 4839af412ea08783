"""Lindblad and Kraus dynamics for (rho, d_rho) pairs.

Vectorization is row-major (see linalg).  The master equation
drho/dt = -i[H, rho] + sum_i gamma_i (G rho G† - {G†G, rho}/2) becomes
d vec(rho)/dt = L vec(rho) with

    L = -i (H kron I - I kron H^T)
        + sum_i gamma_i (G kron conj(G) - (G†G kron I + I kron (G†G)^T)/2).

Parameter derivatives are propagated exactly by enlarging the generator to a
block lower-triangular matrix acting on (vec rho, vec d_1 rho, ...): the
diagonal blocks are L and block row a carries dL_a = -i(dH_a kron I - I kron
dH_a^T) in its first column.  One matrix exponential per step then advances
the state and every derivative simultaneously, which keeps gradients of the
final-time information consistent with finite differences of the propagation
itself.

Time grids: len(tspan) points define len(tspan) - 1 steps; step j covers
[t_j, t_{j+1}] with the step's Hamiltonian held constant (piecewise-constant
exponential scheme).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._fastpath import chain_apply
from .errors import DimensionError, DomainError, InvalidChannelError
from .linalg import dagger, expm, herm
from .states import DerivedState, HermitianOperator, QuantumState, as_operator

__all__ = [
    "DynamicsSpec",
    "KrausChannel",
    "hamiltonian_generator",
    "dissipator_generator",
    "liouvillian",
    "augmented_generator",
    "lindblad_propagate",
    "lindblad_endpoint",
    "total_propagator",
    "kraus_apply",
    "adjust_steps",
    "uniform_tspan",
]


def hamiltonian_generator(h) -> np.ndarray:
    """Superoperator of -i[H, .] in row-major vectorization."""
    h = as_operator(h)
    d = h.shape[0]
    eye = np.eye(d)
    return -1.0j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_generator(g) -> np.ndarray:
    """Superoperator of G . G† - {G†G, .}/2 (unit rate)."""
    g = as_operator(g)
    d = g.shape[0]
    eye = np.eye(d)
    gg = dagger(g) @ g
    return np.kron(g, g.conj()) - 0.5 * (np.kron(gg, eye) + np.kron(eye, gg.T))


def liouvillian(h, decay=()) -> np.ndarray:
    """Full generator for Hamiltonian h and decay = [(G_i, gamma_i), ...]."""
    out = hamiltonian_generator(h)
    for g, rate in decay:
        if rate < 0:
            raise DomainError(f"decay rate {rate} is negative")
        if rate:
            out = out + rate * dissipator_generator(g)
    return out


def augmented_generator(liou: np.ndarray, dlious) -> np.ndarray:
    """Block lower-triangular generator on (vec rho, vec d_1 rho, ...)."""
    m = liou.shape[0]
    n = len(dlious)
    omega = np.zeros(((n + 1) * m, (n + 1) * m), dtype=complex)
    for b in range(n + 1):
        omega[b * m : (b + 1) * m, b * m : (b + 1) * m] = liou
    for a, dl in enumerate(dlious, start=1):
        omega[a * m : (a + 1) * m, :m] = dl
    return omega


def adjust_steps(nt: int, nc: int) -> int:
    """nt if nc divides it, else the smallest multiple of nc above nt."""
    if nt < 1 or nc < 1:
        raise DomainError("step and slot counts must be >= 1")
    return nt if nt % nc == 0 else (nt // nc + 1) * nc


def uniform_tspan(t0: float, t1: float, n_steps: int) -> np.ndarray:
    """n_steps + 1 equally spaced points from t0 to t1."""
    if not t1 > t0:
        raise DomainError("end time must exceed start time")
    return np.linspace(t0, t1, n_steps + 1)


@dataclass(frozen=True)
class DynamicsSpec:
    """Inputs for one Lindblad propagation.

    tspan   strictly increasing times (len >= 2)
    H0      free Hamiltonian, one matrix or a list with one entry per tspan
            point (entry j is used on step j; the last is then unused)
    dH      parameter derivatives of H0, one matrix per unknown
    Hc      control Hamiltonians
    ctrl    per-control amplitude sequences; each length must divide the
            step count evenly (a slot spans consecutive equal steps)
    decay   (operator, rate >= 0) pairs
    """

    tspan: np.ndarray
    H0: object
    dH: tuple = ()
    Hc: tuple = ()
    ctrl: tuple = ()
    decay: tuple = ()
    dim: int = field(init=False)

    def __post_init__(self):
        ts = np.asarray(self.tspan, dtype=float).reshape(-1)
        if ts.size < 2:
            raise DomainError("tspan needs at least two time points")
        if np.any(np.diff(ts) <= 0):
            raise DomainError("tspan must be strictly increasing")
        object.__setattr__(self, "tspan", ts)

        if isinstance(self.H0, (list, tuple)):
            h0 = tuple(as_operator(h) for h in self.H0)
            if len(h0) != ts.size:
                raise DimensionError(
                    f"per-step H0 list has length {len(h0)}, expected {ts.size}"
                )
            dim = h0[0].shape[0]
        else:
            h0 = as_operator(self.H0)
            dim = h0.shape[0]
        object.__setattr__(self, "H0", h0)
        object.__setattr__(self, "dim", dim)

        dh = tuple(as_operator(m) for m in self.dH)
        hc = tuple(as_operator(m) for m in self.Hc)
        for name, group in (("H0", h0 if isinstance(h0, tuple) else (h0,)), ("dH", dh), ("Hc", hc)):
            for m in group:
                if m.shape != (dim, dim):
                    raise DimensionError(f"{name} entry has shape {m.shape}, expected {(dim, dim)}")
        object.__setattr__(self, "dH", dh)
        object.__setattr__(self, "Hc", hc)

        ctrl = tuple(np.asarray(u, dtype=float).reshape(-1) for u in self.ctrl)
        if ctrl and len(ctrl) != len(hc):
            raise DimensionError(
                f"{len(ctrl)} control sequences for {len(hc)} control Hamiltonians"
            )
        ns = ts.size - 1
        for k, u in enumerate(ctrl):
            if u.size < 1 or ns % u.size != 0:
                raise DimensionError(
                    f"ctrl[{k}] has {u.size} slots which do not divide {ns} steps evenly"
                )
        object.__setattr__(self, "ctrl", ctrl)

        dec = []
        for g, rate in self.decay:
            g = as_operator(g)
            if g.shape != (dim, dim):
                raise DimensionError("decay operator dimension mismatch")
            if rate < 0:
                raise DomainError(f"decay rate {rate} is negative")
            dec.append((g, float(rate)))
        object.__setattr__(self, "decay", tuple(dec))

    @property
    def n_steps(self) -> int:
        return self.tspan.size - 1

    @property
    def n_params(self) -> int:
        return len(self.dH)

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.tspan)

    def free_hamiltonian(self, j: int) -> np.ndarray:
        if isinstance(self.H0, tuple):
            return self.H0[j]
        return self.H0

    def step_controls(self) -> np.ndarray:
        """Per-step control values, shape (n_steps, len(Hc))."""
        ns = self.n_steps
        out = np.zeros((ns, len(self.Hc)))
        for k, u in enumerate(self.ctrl):
            out[:, k] = np.repeat(u, ns // u.size)
        return out

    def slot_index(self, k: int) -> np.ndarray:
        """Slot of each step for control k."""
        ns = self.n_steps
        nc = self.ctrl[k].size
        return np.arange(ns) // (ns // nc)

    def step_hamiltonian(self, j: int, uj=None) -> np.ndarray:
        h = self.free_hamiltonian(j)
        if uj is None and self.ctrl:
            uj = self.step_controls()[j]
        if uj is not None:
            for k, hk in enumerate(self.Hc):
                h = h + uj[k] * hk
        return h


def _unpack(z: np.ndarray, d: int, n: int) -> DerivedState:
    m = d * d
    rho = herm(z[:m].reshape(d, d))
    derivs = [herm(z[(a + 1) * m : (a + 2) * m].reshape(d, d)) for a in range(n)]
    return DerivedState(QuantumState(rho), derivs)


def _step_propagators(spec: DynamicsSpec, step_controls=None) -> np.ndarray:
    """Augmented propagators Q_j = expm(dt_j Omega_j), shape (n_steps, m, m).

    Identical consecutive (dt, H) steps reuse one exponential, so control-free
    uniform grids cost a single expm.  step_controls overrides spec.ctrl with
    per-step values of shape (n_steps, len(Hc)).
    """
    n = spec.n_params
    m = (n + 1) * spec.dim**2
    dlious = [hamiltonian_generator(dh) for dh in spec.dH]
    if step_controls is None:
        step_controls = spec.step_controls() if spec.ctrl else None
    dts = spec.dts

    qs = np.empty((spec.n_steps, m, m), dtype=complex)
    prev_key = None
    prev_q = None
    for j in range(spec.n_steps):
        uj = step_controls[j] if step_controls is not None else None
        hj = spec.step_hamiltonian(j, uj)
        key = (dts[j], hj.tobytes())
        if prev_key is not None and key == prev_key:
            qs[j] = prev_q
            continue
        omega = augmented_generator(liouvillian(hj, spec.decay), dlious)
        prev_q = expm(dts[j] * omega)
        prev_key = key
        qs[j] = prev_q
    return qs


def _initial_vector(spec: DynamicsSpec, rho0) -> np.ndarray:
    rho0 = rho0 if isinstance(rho0, QuantumState) else QuantumState(np.asarray(rho0, dtype=complex))
    if rho0.dim != spec.dim:
        raise DimensionError(f"state dimension {rho0.dim} != spec dimension {spec.dim}")
    z0 = np.zeros((spec.n_params + 1) * spec.dim**2, dtype=complex)
    z0[: spec.dim**2] = rho0.rho.reshape(-1)
    return z0


def lindblad_propagate(spec: DynamicsSpec, rho0) -> list:
    """Propagate rho0 and its parameter derivatives along spec.tspan.

    Returns one DerivedState per time point; index 0 is the initial state
    with zero derivatives (probe states carry no parameter dependence).
    """
    z0 = _initial_vector(spec, rho0)
    traj = chain_apply(_step_propagators(spec), z0)
    return [_unpack(traj[j], spec.dim, spec.n_params) for j in range(traj.shape[0])]


def lindblad_endpoint(spec: DynamicsSpec, rho0, step_controls=None) -> DerivedState:
    """Final-time DerivedState only; skips intermediate-point construction."""
    z = _initial_vector(spec, rho0)
    for q in _step_propagators(spec, step_controls):
        z = q @ z
    return _unpack(z, spec.dim, spec.n_params)


def total_propagator(spec: DynamicsSpec, step_controls=None) -> np.ndarray:
    """Product of all step propagators; applies the whole window in one matvec.

    Worth precomputing when only the probe state varies between evaluations."""
    qs = _step_propagators(spec, step_controls)
    total = qs[0]
    for j in range(1, qs.shape[0]):
        total = qs[j] @ total
    return total


@dataclass(frozen=True)
class KrausChannel:
    """Kraus operators K_i with per-operator, per-parameter derivatives dK[i][a]."""

    K: tuple
    dK: tuple = ()

    def __init__(self, K, dK=()):
        ks = tuple(np.asarray(k, dtype=complex) for k in K)
        if not ks:
            raise DomainError("channel needs at least one Kraus operator")
        d = ks[0].shape[0]
        for k in ks:
            if k.shape != (d, d):
                raise DimensionError("Kraus operators must be square and same-dimensional")
        total = sum(dagger(k) @ k for k in ks)
        err = float(np.max(np.abs(total - np.eye(d))))
        if err > 1e-6:
            raise InvalidChannelError(
                f"Kraus completeness violated: max |sum K†K - I| = {err:.2e}"
            )
        dks = tuple(tuple(np.asarray(x, dtype=complex) for x in row) for row in dK)
        if dks:
            if len(dks) != len(ks):
                raise DimensionError("dK must have one row per Kraus operator")
            nprm = len(dks[0])
            for row in dks:
                if len(row) != nprm:
                    raise DimensionError("dK rows must share the parameter count")
                for x in row:
                    if x.shape != (d, d):
                        raise DimensionError("dK entries must match the Kraus dimension")
        object.__setattr__(self, "K", ks)
        object.__setattr__(self, "dK", dks)

    @property
    def dim(self) -> int:
        return self.K[0].shape[0]

    @property
    def n_params(self) -> int:
        return len(self.dK[0]) if self.dK else 0


def kraus_apply(rho0, ch) -> DerivedState:
    """rho = sum K rho0 K†, d_a rho = sum (d_a K) rho0 K† + K rho0 (d_a K)†."""
    if not isinstance(ch, KrausChannel):
        ch = KrausChannel(*ch) if isinstance(ch, tuple) else KrausChannel(ch)
    rho0 = rho0 if isinstance(rho0, QuantumState) else QuantumState(np.asarray(rho0, dtype=complex))
    if rho0.dim != ch.dim:
        raise DimensionError("state and channel dimensions differ")
    r0 = rho0.rho
    rho = herm(sum(k @ r0 @ dagger(k) for k in ch.K))
    derivs = []
    for a in range(ch.n_params):
        da = sum(
            ch.dK[i][a] @ r0 @ dagger(ch.K[i]) + ch.K[i] @ r0 @ dagger(ch.dK[i][a])
            for i in range(len(ch.K))
        )
        derivs.append(herm(da))
    return DerivedState(QuantumState(rho), derivs)
