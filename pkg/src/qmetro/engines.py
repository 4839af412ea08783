"""Optimization machinery: exact gradients for Fisher objectives plus Adam,
particle swarm, differential evolution, Nelder-Mead, and the reverse
iteration for optimal probe states.

The gradient engine propagates the stacked (vec rho, vec d_a rho) vector
with one matrix exponential per step and pulls the objective's exact
functional derivatives back through the chain with an adjoint sweep, so
control gradients match finite differences of the propagation itself to
solver precision.  Objective derivatives come from the stationarity of the
information functionals: for the QFI, dF = 2 Tr(L d(d_rho)) - Tr(L^2 d rho)
with the computed SLD L, and analogous closed forms for the weighted
multiparameter trace and classical information.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._fastpath import chain_apply
from .dynamics import DynamicsSpec, augmented_generator, hamiltonian_generator, liouvillian
from .errors import ConfigError, DomainError, UnsupportedError
from .fisher import WeightMatrix, cfim, qfim, sld
from .linalg import dagger, herm, sylvester_symmetric
from .operators import sic_povm
from .states import DerivedState, Povm, QuantumState

__all__ = [
    "ObjectiveSpec",
    "AlgoParams",
    "PullbackResult",
    "OptRun",
    "qfi_pullback",
    "cfi_pullback",
    "scalar_objective",
    "grape_gradient",
    "GrapeResult",
    "adam_step",
    "AdamState",
    "pso_run",
    "de_run",
    "nm_run",
    "ri_run",
]


# ---------------------------------------------------------------- objectives

@dataclass(frozen=True)
class ObjectiveSpec:
    """What to maximize: QFI / 1/Tr(W F^-1), its classical twin, or 1/HCRB."""

    kind: str = "QFIM"
    W: object = None
    M: object = None
    ld_type: str = "SLD"
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("QFIM", "CFIM", "HCRB"):
            raise DomainError(f"unknown objective kind {self.kind!r}")
        if self.W is not None and not isinstance(self.W, WeightMatrix):
            object.__setattr__(self, "W", WeightMatrix(self.W))

    def weight(self, n: int) -> np.ndarray:
        if self.W is None:
            return np.eye(n)
        if self.W.n != n:
            raise DomainError(f"weight matrix size {self.W.n} != parameter count {n}")
        return self.W.W

    def povm(self, dim: int) -> Povm:
        if self.M is None:
            return Povm(sic_povm(dim))
        return self.M if isinstance(self.M, Povm) else Povm(self.M)


def scalar_objective(ds: DerivedState, obj: ObjectiveSpec) -> float:
    """The maximized figure of merit: QFI/CFI for one parameter, otherwise
    1/Tr(W F^-1) (or 1/HCRB)."""
    n = ds.n_params
    if obj.kind == "HCRB":
        from .holevo import hcrb

        return 1.0 / hcrb(ds, obj.W, eps=obj.eps)
    if obj.kind == "QFIM":
        f = qfim(ds, ld_type=obj.ld_type, eps=obj.eps).entries
    else:
        f = cfim(ds, obj.povm(ds.dim), eps=obj.eps).entries
    if n == 1:
        return float(f[0, 0])
    w = obj.weight(n)
    return 1.0 / float(np.trace(w @ np.linalg.pinv(f)))


@dataclass(frozen=True)
class PullbackResult:
    """Exact sensitivities of the scalar objective at the final state.

    value       the objective itself
    dF_drho     Hermitian G with dF = Tr(G d rho) + sum_a Tr(G_a d d_a rho)
    dF_ddrho    the G_a, one per parameter
    h           auxiliary Lyapunov solutions h_a = sum_b w_ab L_b; they
                satisfy dF_ddrho_a = 2 h_a and
                dF_drho = -(1/2) sum_a (h_a L_a + L_a h_a)
    """

    value: float
    dF_drho: np.ndarray
    dF_ddrho: tuple
    h: tuple = ()


def _weighted(obj_w: np.ndarray, f: np.ndarray, eps: float):
    """(value, w) with value = 1/Tr(W F^-1) and w = F^-1 W F^-1 / Tr(..)^2."""
    finv = np.linalg.pinv(f, rcond=eps)
    g = float(np.trace(obj_w @ finv))
    w = finv @ obj_w @ finv / g**2
    return 1.0 / g, 0.5 * (w + w.T)


def qfi_pullback(ds: DerivedState, W=None, eps: float = 1e-8) -> PullbackResult:
    """Sensitivities of QFI (or 1/Tr(W F^-1)) to rho and its derivatives.

    Uses the stationarity of the information functional in the SLDs, so only
    first derivatives of the state enter; verified against finite
    differences in the tests.
    """
    n = ds.n_params
    rho = ds.state.rho
    ld = sld(ds, rep="original", eps=eps)
    ls = ld.ops
    if n == 1:
        value = float(np.trace(rho @ ls[0] @ ls[0]).real)
        w = np.eye(1)
    else:
        f = qfim(ds, eps=eps).entries
        wmat = WeightMatrix(W).W if W is not None and not isinstance(W, WeightMatrix) else (
            W.W if isinstance(W, WeightMatrix) else np.eye(n)
        )
        value, w = _weighted(wmat, f, eps)
    hs = tuple(herm(sum(w[a, b] * ls[b] for b in range(n))) for a in range(n))
    g_rho = -0.5 * herm(sum(hs[a] @ ls[a] + ls[a] @ hs[a] for a in range(n)))
    g_d = tuple(2.0 * h for h in hs)
    return PullbackResult(value, g_rho, g_d, hs)


def cfi_pullback(ds: DerivedState, M: Povm, W=None, eps: float = 1e-8) -> PullbackResult:
    """Classical analogue of qfi_pullback for a fixed POVM."""
    n = ds.n_params
    rho = ds.state.rho
    p = np.array([float(np.trace(op @ rho).real) for op in M.ops])
    dp = np.array([[float(np.trace(op @ dr).real) for dr in ds.derivs] for op in M.ops])
    fmat = np.zeros((n, n))
    for y in range(p.size):
        if p[y] >= eps:
            fmat += np.outer(dp[y], dp[y]) / p[y]
    if n == 1:
        value = float(fmat[0, 0])
        w = np.eye(1)
    else:
        wmat = WeightMatrix(W).W if W is not None and not isinstance(W, WeightMatrix) else (
            W.W if isinstance(W, WeightMatrix) else np.eye(n)
        )
        value, w = _weighted(wmat, fmat, eps)
    d = ds.dim
    g_rho = np.zeros((d, d), dtype=complex)
    g_d = [np.zeros((d, d), dtype=complex) for _ in range(n)]
    for y in range(p.size):
        if p[y] < eps:
            continue
        s = dp[y] / p[y]
        coeff = float(s @ w @ s)
        g_rho -= coeff * M.ops[y]
        ws = w @ s
        for a in range(n):
            g_d[a] += 2.0 * ws[a] * M.ops[y]
    return PullbackResult(value, herm(g_rho), tuple(herm(g) for g in g_d))


def _pullback(ds: DerivedState, obj: ObjectiveSpec) -> PullbackResult:
    if obj.kind == "QFIM":
        return qfi_pullback(ds, obj.W, eps=obj.eps)
    if obj.kind == "CFIM":
        return cfi_pullback(ds, obj.povm(ds.dim), obj.W, eps=obj.eps)
    raise UnsupportedError("the gradient engine does not handle the HCRB objective")


# ---------------------------------------------------------- gradient engine

def _sinch_phi(lam: np.ndarray) -> np.ndarray:
    diff = 0.5 * (lam[:, None] - lam[None, :])
    small = np.abs(diff) < 1e-5
    zs = np.where(small, 1.0, diff)
    sinch = np.where(small, 1.0 + diff * diff / 6.0 * (1.0 + diff * diff / 20.0), np.sinh(zs) / zs)
    return np.exp(0.5 * (lam[:, None] + lam[None, :])) * sinch


@dataclass(frozen=True)
class GrapeResult:
    value: float
    grads: tuple            # one array per control, length = its slot count
    final: DerivedState
    rho0_grad: np.ndarray = None   # Hermitian G0 with dF = Tr(G0 d rho0)


def grape_gradient(spec: DynamicsSpec, rho0, obj: ObjectiveSpec) -> GrapeResult:
    """Objective value and its exact gradient wrt every control amplitude.

    Forward pass: one eigendecomposition per step propagates the stacked
    state and caches the eigensystem.  Backward pass: an adjoint vector
    pulls the endpoint sensitivities through the chain; each step's
    contribution to every control contracts in the eigenbasis through the
    divided-difference kernel of the exponential, so no step-propagator
    derivatives are ever materialized.  Steps whose generator resists
    diagonalization fall back to Pade Frechet derivatives.
    """
    rho0 = rho0 if isinstance(rho0, QuantumState) else QuantumState(np.asarray(rho0, dtype=complex))
    d = spec.dim
    n = spec.n_params
    m = d * d
    mm = (n + 1) * m
    ns = spec.n_steps
    ks = len(spec.Hc)
    dts = spec.dts

    dlious = [hamiltonian_generator(dh) for dh in spec.dH]
    base = [
        augmented_generator(liouvillian(spec.free_hamiltonian(j), spec.decay), dlious)
        if (isinstance(spec.H0, tuple) or j == 0)
        else None
        for j in range(ns)
    ]
    if not isinstance(spec.H0, tuple):
        base = [base[0]] * ns
    cs = [hamiltonian_generator(hk) for hk in spec.Hc]
    u = spec.step_controls() if ks else np.zeros((ns, 0))

    eig_cache = []
    qs = np.empty((ns, mm, mm), dtype=complex)
    for j in range(ns):
        a = base[j].copy()
        for k in range(ks):
            if u[j, k]:
                for b in range(n + 1):
                    a[b * m : (b + 1) * m, b * m : (b + 1) * m] += u[j, k] * cs[k]
        a *= dts[j]
        ok = False
        try:
            lam, p = np.linalg.eig(a)
            pinv = np.linalg.inv(p)
            if np.linalg.cond(p) < 1e8:
                recon = (p * lam) @ pinv
                if np.max(np.abs(recon - a)) <= 1e-10 * max(1.0, float(np.max(np.abs(a)))):
                    qs[j] = (p * np.exp(lam)) @ pinv
                    eig_cache.append((lam, p, pinv))
                    ok = True
        except np.linalg.LinAlgError:
            pass
        if not ok:
            qs[j] = scipy.linalg.expm(a)
            eig_cache.append((None, a, None))

    z0 = np.zeros(mm, dtype=complex)
    z0[:m] = rho0.rho.reshape(-1)
    traj = chain_apply(qs, z0)

    zt = traj[ns]
    rho_t = herm(zt[:m].reshape(d, d))
    derivs_t = [herm(zt[(a + 1) * m : (a + 2) * m].reshape(d, d)) for a in range(n)]
    ds = DerivedState(QuantumState(rho_t), derivs_t)
    pb = _pullback(ds, obj)

    grads = [np.zeros(spec.ctrl[k].size if spec.ctrl else ns) for k in range(ks)]
    slots = [spec.slot_index(k) if spec.ctrl else np.arange(ns) for k in range(ks)]

    g = np.concatenate([pb.dF_drho.reshape(-1)] + [ga.reshape(-1) for ga in pb.dF_ddrho])
    adj = g.copy()
    for j in range(ns - 1, -1, -1):
        if ks == 0:
            adj = dagger(qs[j]) @ adj
            continue
        lam, p, pinv = eig_cache[j]
        if lam is not None:
            phi = _sinch_phi(lam)
            r = np.conj(adj) @ p
            q = pinv @ traj[j]
            wmat = r[:, None] * phi * q[None, :]
            z = pinv.T @ wmat @ p.T
            zd = z[:m, :m].copy()
            for b in range(1, n + 1):
                zd += z[b * m : (b + 1) * m, b * m : (b + 1) * m]
            for k in range(ks):
                val = dts[j] * float(np.real(np.sum(cs[k] * zd)))
                grads[k][slots[k][j]] += val
        else:
            a = p   # the raw generator was stashed in the cache
            for k in range(ks):
                e = np.zeros((mm, mm), dtype=complex)
                for b in range(n + 1):
                    e[b * m : (b + 1) * m, b * m : (b + 1) * m] = dts[j] * cs[k]
                dq = scipy.linalg.expm_frechet(a, e, compute_expm=False)
                grads[k][slots[k][j]] += float(np.real(np.vdot(adj, dq @ traj[j])))
        adj = dagger(qs[j]) @ adj
    rho0_grad = herm(adj[:m].reshape(d, d))
    return GrapeResult(pb.value, tuple(grads), ds, rho0_grad)


# ------------------------------------------------------------------- adam

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(params, grads, state: AdamState | None, epsilon: float = 0.01,
              beta1: float = 0.90, beta2: float = 0.99):
    """One ascent step.  With state=None this is plain params + epsilon*grads;
    otherwise the standard bias-corrected Adam update (maximizing)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise DomainError("parameter and gradient shapes differ")
    if state is None:
        return params + epsilon * grads, None
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grads
    state.v = beta2 * state.v + (1 - beta2) * grads * grads
    mhat = state.m / (1 - beta1**state.t)
    vhat = state.v / (1 - beta2**state.t)
    return params + epsilon * mhat / (np.sqrt(vhat) + 1e-8), state


# ------------------------------------------------------- population engines

_DEFAULTS = {
    "PSO": dict(p_num=10, c0=1.0, c1=2.0, c2=2.0, max_episode=(1000, 100), seed=1234),
    "DE": dict(p_num=10, c=1.0, cr=0.5, max_episode=1000, seed=1234),
    "NM": dict(p_num=10, ar=1.0, ae=2.0, ac=0.5, as0=0.5, max_episode=1000, seed=1234),
    "GRAPE": dict(adam=True, epsilon=0.01, beta1=0.90, beta2=0.99, max_episode=300, seed=1234),
    "AD": dict(adam=False, epsilon=0.01, beta1=0.90, beta2=0.99, max_episode=300, seed=1234),
    "RI": dict(max_episode=300, seed=1234),
}


@dataclass(frozen=True)
class AlgoParams:
    """Algorithm id plus its parameter record, with table defaults filled in."""

    algorithm: str
    fields: dict = field(default_factory=dict)

    def __init__(self, algorithm: str, **overrides):
        if algorithm not in _DEFAULTS:
            raise ConfigError(f"unknown algorithm {algorithm!r}; known: {sorted(_DEFAULTS)}")
        merged = dict(_DEFAULTS[algorithm])
        for key, val in overrides.items():
            if key not in merged:
                raise ConfigError(f"unknown parameter {key!r} for algorithm {algorithm}")
            merged[key] = val
        object.__setattr__(self, "algorithm", algorithm)
        object.__setattr__(self, "fields", merged)

    def __getattr__(self, name):
        try:
            return self.fields[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def episodes(self) -> int:
        me = self.fields.get("max_episode")
        return int(me[0]) if isinstance(me, (tuple, list)) else int(me)

    @property
    def reset_period(self):
        me = self.fields.get("max_episode")
        return int(me[1]) if isinstance(me, (tuple, list)) and len(me) > 1 else None


@dataclass(frozen=True)
class OptRun:
    best_values: np.ndarray     # best-so-far objective per episode
    best_candidate: object
    seed: object
    episodes: int
    candidates: object = None   # per-episode best candidates when recorded


def _fill_population(init, sampler, p_num: int, rng) -> list:
    pop = [np.asarray(c, dtype=float).copy() for c in init][:p_num]
    while len(pop) < p_num:
        pop.append(np.asarray(sampler(rng), dtype=float))
    return pop


def pso_run(objective, init, sampler, params: AlgoParams, clip=None,
            record: bool = False) -> OptRun:
    """Particle swarm: velocity mixes inertia with personal and global pulls,
    one random scalar per pull per particle per episode."""
    if params.algorithm != "PSO":
        raise ConfigError("pso_run requires PSO parameters")
    rng = np.random.default_rng(params.seed)
    p_num = int(params.p_num)
    if p_num < 2:
        raise DomainError("PSO needs at least two particles")
    pop = _fill_population(init, sampler, p_num, rng)
    vel = [np.zeros_like(c) for c in pop]
    pbest = [c.copy() for c in pop]
    pbest_f = np.full(p_num, -np.inf)
    gbest = pop[0].copy()
    gbest_f = -np.inf
    c0, c1, c2 = float(params.c0), float(params.c1), float(params.c2)
    period = params.reset_period
    log = np.empty(params.episodes)
    cands = [] if record else None
    for ep in range(params.episodes):
        for i in range(p_num):
            f = float(objective(pop[i]))
            if f > pbest_f[i]:
                pbest_f[i] = f
                pbest[i] = pop[i].copy()
            if f > gbest_f:
                gbest_f = f
                gbest = pop[i].copy()
        for i in range(p_num):
            r1, r2 = rng.random(), rng.random()
            vel[i] = c0 * vel[i] + r1 * c1 * (pbest[i] - pop[i]) + r2 * c2 * (gbest - pop[i])
            pop[i] = pop[i] + vel[i]
            if clip is not None:
                pop[i] = clip(pop[i])
        log[ep] = gbest_f
        if record:
            cands.append(gbest.copy())
        if period and (ep + 1) % period == 0:
            pop = [gbest.copy() for _ in range(p_num)]
    return OptRun(log, gbest, params.seed, params.episodes,
                  tuple(cands) if record else None)


def de_run(objective, init, sampler, params: AlgoParams, clip=None,
           record: bool = False) -> OptRun:
    """Differential evolution per the classic rand/1/bin scheme; donors are
    drawn with replacement and replacement is strictly greedy."""
    if params.algorithm != "DE":
        raise ConfigError("de_run requires DE parameters")
    rng = np.random.default_rng(params.seed)
    p_num = int(params.p_num)
    if p_num < 4:
        raise DomainError("DE needs at least four candidates")
    pop = _fill_population(init, sampler, p_num, rng)
    fvals = np.array([float(objective(c)) for c in pop])
    cmut, cr = float(params.c), float(params.cr)
    log = np.empty(params.episodes)
    cands = [] if record else None
    for ep in range(params.episodes):
        for i in range(p_num):
            p1, p2, p3 = rng.integers(0, p_num, size=3)
            donor = pop[p1] + cmut * (pop[p2] - pop[p3])
            trial = pop[i].copy()
            forced = rng.integers(0, trial.size)
            mask = rng.random(trial.size) <= cr
            mask[forced] = True
            trial[mask] = donor[mask]
            if clip is not None:
                trial = clip(trial)
            f = float(objective(trial))
            if f > fvals[i]:
                pop[i] = trial
                fvals[i] = f
        log[ep] = float(np.max(fvals))
        if record:
            cands.append(pop[int(np.argmax(fvals))].copy())
    best = int(np.argmax(fvals))
    return OptRun(np.maximum.accumulate(log), pop[best], params.seed, params.episodes,
                  tuple(cands) if record else None)


def nm_run(objective, init, sampler, params: AlgoParams, normalize=None,
           record: bool = False) -> OptRun:
    """Nelder-Mead on normalized vectors (maximization).  Every affine
    combination is renormalized before evaluation."""
    if params.algorithm != "NM":
        raise ConfigError("nm_run requires NM parameters")
    rng = np.random.default_rng(params.seed)
    p_num = int(params.p_num)
    if p_num < 3:
        raise DomainError("Nelder-Mead needs at least three vertices")
    norm = normalize if normalize is not None else (lambda v: v)
    verts = [norm(c) for c in _fill_population(init, sampler, p_num, rng)]
    fvals = np.array([float(objective(v)) for v in verts])
    ar, ae, ac, as0 = (float(params.ar), float(params.ae), float(params.ac), float(params.as0))
    log = np.empty(params.episodes)
    cands = [] if record else None
    for ep in range(params.episodes):
        order = np.argsort(-fvals, kind="stable")
        verts = [verts[i] for i in order]
        fvals = fvals[order]
        centroid = np.mean(verts[:-1], axis=0)
        worst = verts[-1]
        refl = norm(centroid + ar * (centroid - worst))
        f_r = float(objective(refl))
        if f_r > fvals[0]:
            expd = norm(centroid + ae * (refl - centroid))
            f_e = float(objective(expd))
            if f_e > f_r:
                verts[-1], fvals[-1] = expd, f_e
            else:
                verts[-1], fvals[-1] = refl, f_r
        elif f_r > fvals[-2]:
            verts[-1], fvals[-1] = refl, f_r
        else:
            if f_r > fvals[-1]:
                cand = norm(centroid + ac * (refl - centroid))
            else:
                cand = norm(centroid - ac * (centroid - worst))
            f_c = float(objective(cand))
            if f_c > max(f_r, fvals[-1]):
                verts[-1], fvals[-1] = cand, f_c
            else:
                for i in range(1, p_num):
                    verts[i] = norm(verts[0] + as0 * (verts[i] - verts[0]))
                    fvals[i] = float(objective(verts[i]))
        log[ep] = float(np.max(fvals))
        if record:
            cands.append(verts[int(np.argmax(fvals))].copy())
    best = int(np.argmax(fvals))
    return OptRun(np.maximum.accumulate(log), verts[best], params.seed, params.episodes,
                  tuple(cands) if record else None)


def ri_run(ch, rho0, params: AlgoParams, record: bool = False) -> OptRun:
    """Reverse iteration for the optimal probe of a single-parameter channel.

    Alternates between evolving the current probe, reading off the SLD, and
    replacing the probe with the top eigenvector of the mapped-back
    information operator; the QFI sequence is monotonically nondecreasing
    and iteration stops when it stalls below 1e-8.
    """
    from .dynamics import KrausChannel, kraus_apply

    if params.algorithm != "RI":
        raise ConfigError("ri_run requires RI parameters")
    if not isinstance(ch, KrausChannel):
        ch = KrausChannel(*ch)
    if ch.n_params != 1:
        raise UnsupportedError("reverse iteration handles single-parameter channels only")
    rho = rho0.rho if isinstance(rho0, QuantumState) else np.asarray(rho0, dtype=complex)
    log = []
    cands = [] if record else None
    prev = None
    for _ in range(params.episodes):
        ds = kraus_apply(QuantumState(rho), ch)
        l = sld(ds, eps=1e-8).ops[0]
        f = float(np.trace(ds.state.rho @ l @ l).real)
        log.append(f)
        if record:
            cands.append(herm(rho))
        if prev is not None and abs(f - prev) < 1e-8:
            break
        prev = f
        mop = np.zeros_like(rho)
        for i, k in enumerate(ch.K):
            dk = ch.dK[i][0]
            mop = mop + 2.0 * (dagger(dk) @ l @ k + dagger(k) @ l @ dk) - dagger(k) @ (l @ l) @ k
        mop = herm(mop)
        w, u = np.linalg.eigh(mop)
        top = u[:, -1]
        rho = np.outer(top, top.conj())
    vals = np.maximum.accumulate(np.array(log))
    return OptRun(vals, QuantumState(herm(rho)), params.seed, len(log),
                  tuple(cands) if record else None)
