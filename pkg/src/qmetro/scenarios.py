"""Design-space searches over controls, probe states, and measurements.

Each scenario fixes everything except one (or several) design blocks,
encodes the free block as a flat real vector, and hands the resulting
objective to a gradient or population engine from engines.py.  The
objective is always the scalar figure of merit of scalar_objective:
information for one parameter, 1 / Tr(W F^-1) or 1 / HCRB otherwise, so
larger is better everywhere.

Codecs
    controls      (K, Nc) amplitude table, flattened row-major; population
                  candidates are clipped to the bound, gradient iterates
                  are projected after every ascent step
    probe state   complex coefficients c as [Re c, Im c]; decoded states
                  are normalized, so the objective is scale invariant
    projection    complex d x d matrix rows, orthonormalized in order
                  (Gram-Schmidt); degenerate residuals fall back to
                  canonical basis completion, which keeps decoding
                  deterministic
    LC            real (m, n_in) table B, clipped to [0, 1] and column
                  normalized; output i combines inputs as sum_j B_ij P_j
    rotation      angles s in [0, 2pi); the decoded POVM conjugates the
                  input by U = prod_k exp(i s_k lambda_k)

The zero-control table is always part of the initial population, so a
search can never end below the uncontrolled baseline (exact up to the
candidate bound clipping when 0 lies outside it).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DynamicsSpec,
    KrausChannel,
    adjust_steps,
    kraus_apply,
    lindblad_endpoint,
    total_propagator,
    uniform_tspan,
    _unpack,
)
from .engines import (
    AdamState,
    AlgoParams,
    ObjectiveSpec,
    OptRun,
    adam_step,
    de_run,
    grape_gradient,
    nm_run,
    pso_run,
    ri_run,
    scalar_objective,
    _pullback,
    _weighted,
)
from .errors import DimensionError, DomainError, UnsupportedError
from .linalg import dagger, expm, herm
from .operators import su_generators
from .states import DerivedState, Povm, QuantumState

__all__ = [
    "ControlProblem",
    "ControlResult",
    "StateProblem",
    "StateResult",
    "MeasurementProblem",
    "MeasurementResult",
    "ComprehensiveProblem",
    "ComprehensiveResult",
    "MinTimeResult",
    "control_opt",
    "state_opt",
    "measurement_opt",
    "comprehensive_opt",
    "mintime",
]

_GRADIENT = ("GRAPE", "AD")
_POPULATION = ("PSO", "DE", "NM")


# ----------------------------------------------------------------- helpers

def _expand_controls(table: np.ndarray, ns: int) -> np.ndarray:
    """(K, Nc) slot table -> (ns, K) per-step values."""
    return np.column_stack([np.repeat(row, ns // row.size) for row in table])


def _check_objective(obj: ObjectiveSpec, n: int, algorithm: str) -> None:
    if obj.kind == "HCRB":
        if n < 2:
            raise UnsupportedError(
                "the HCRB objective needs at least two parameters; for one "
                "parameter it coincides with 1/QFI, so use kind='QFIM'"
            )
        if algorithm in _GRADIENT:
            raise UnsupportedError(
                "the HCRB objective has no gradient engine; use PSO or DE"
            )


def _ds_key(ds: DerivedState) -> bytes:
    parts = [np.round(ds.state.rho, 12).tobytes()]
    parts.extend(np.round(dr, 12).tobytes() for dr in ds.derivs)
    return b"".join(parts)


def _cached_scalar(obj: ObjectiveSpec):
    """scalar_objective wrapper; HCRB values are memoized on the evaluated
    state, which spares repeat cone solves for duplicated candidates."""
    if obj.kind != "HCRB":
        return lambda ds: scalar_objective(ds, obj)
    cache: dict = {}

    def evaluate(ds: DerivedState) -> float:
        key = _ds_key(ds)
        if key not in cache:
            if len(cache) > 4096:
                cache.clear()
            cache[key] = scalar_objective(ds, obj)
        return cache[key]

    return evaluate


def _decode_state(flat: np.ndarray) -> np.ndarray:
    d = flat.size // 2
    c = flat[:d] + 1j * flat[d:]
    norm = float(np.linalg.norm(c))
    if norm < 1e-9:
        c = np.zeros(d, dtype=complex)
        c[0] = 1.0
        return c
    return c / norm


def _encode_state(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=complex).reshape(-1)
    return np.concatenate([c.real, c.imag])


def _pure_density(c: np.ndarray) -> QuantumState:
    return QuantumState(np.outer(c, c.conj()))


def _orthonormal_rows(cmat: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the rows, in order.  Rows that collapse are replaced
    by the first canonical basis vector with a nonvanishing residual."""
    d = cmat.shape[0]
    rows = []
    for i in range(d):
        v = cmat[i].astype(complex)
        for u in rows:
            v = v - np.vdot(u, v) * u
        nrm = float(np.linalg.norm(v))
        if nrm < 1e-10:
            for k in range(d):
                v = np.zeros(d, dtype=complex)
                v[k] = 1.0
                for u in rows:
                    v = v - np.vdot(u, v) * u
                nrm = float(np.linalg.norm(v))
                if nrm > 1e-6:
                    break
        rows.append(v / nrm)
    return np.array(rows)


def _decode_projection(flat: np.ndarray, d: int) -> Povm:
    cmat = (flat[: d * d] + 1j * flat[d * d :]).reshape(d, d)
    rows = _orthonormal_rows(cmat)
    return Povm([np.outer(r, r.conj()) for r in rows])


def _encode_projection(ops, d: int) -> np.ndarray:
    rows = []
    for op in ops:
        w, u = np.linalg.eigh(np.asarray(op, dtype=complex))
        rows.append(u[:, -1])
    cmat = np.array(rows, dtype=complex)
    if cmat.shape != (d, d):
        raise DimensionError(f"projective seed needs {d} rank-one operators")
    return np.concatenate([cmat.real.reshape(-1), cmat.imag.reshape(-1)])


def _decode_lc(flat: np.ndarray, m: int, inputs) -> tuple:
    """(B, ops): clipped column-normalized table and the combined POVM."""
    b = np.clip(flat.reshape(m, len(inputs)), 0.0, 1.0)
    sums = b.sum(axis=0)
    for j in range(b.shape[1]):
        if sums[j] < 1e-12:
            b[:, j] = 1.0 / m
        else:
            b[:, j] /= sums[j]
    ops = [sum(b[i, j] * inputs[j] for j in range(len(inputs))) for i in range(m)]
    return b, ops


def _rotation_unitary(s: np.ndarray, gens) -> tuple:
    """U = prod_k exp(i s_k lambda_k) together with the per-factor pieces."""
    factors = [expm(1j * s[k] * gens[k]) for k in range(len(gens))]
    d = gens[0].shape[0]
    u = np.eye(d, dtype=complex)
    for f in factors:
        u = u @ f
    return u, factors


def _evaluator(dynamics, rho0_fixed=None):
    """Callable rho0 -> endpoint DerivedState with the dynamics baked in.

    Lindblad specs collapse to a single precomputed propagator product, so
    population sweeps over probe states cost one matvec per candidate."""
    if isinstance(dynamics, KrausChannel):
        return lambda rho0: kraus_apply(rho0, dynamics)
    qtot = total_propagator(dynamics)
    d, n = dynamics.dim, dynamics.n_params

    def evaluate(rho0: QuantumState) -> DerivedState:
        z0 = np.zeros(qtot.shape[0], dtype=complex)
        z0[: d * d] = rho0.rho.reshape(-1)
        return _unpack(qtot @ z0, d, n)

    return evaluate


def _population_run(algo: AlgoParams, objective, init, sampler, clip=None,
                    normalize=None, record: bool = False) -> OptRun:
    if algo.algorithm == "PSO":
        return pso_run(objective, init, sampler, algo, clip=clip, record=record)
    if algo.algorithm == "DE":
        return de_run(objective, init, sampler, algo, clip=clip, record=record)
    if algo.algorithm == "NM":
        return nm_run(objective, init, sampler, algo, normalize=normalize, record=record)
    raise UnsupportedError(f"{algo.algorithm} is not a population engine")


def _with_decoded(run: OptRun, decode) -> OptRun:
    if run.candidates is None:
        return run
    return dataclasses.replace(run, candidates=tuple(decode(c) for c in run.candidates))


# ----------------------------------------------------------------- controls

@dataclass(frozen=True)
class ControlProblem:
    """Optimize control amplitudes for fixed probe and dynamics.

    spec        dynamics template; must carry control Hamiltonians and an
                empty ctrl (initial amplitudes go in u0)
    rho0        probe state
    obj         figure of merit
    ctrl_bound  (lo, hi) box for every amplitude, or None
    Nc          amplitude slots per control; "full" means one per step.
                When Nc does not divide the step count the grid is rebuilt
                uniformly on [t0, t1] with the smallest multiple of Nc at
                least the original step count.
    u0          optional initial (K, Nc) table
    """

    spec: DynamicsSpec
    rho0: QuantumState
    obj: ObjectiveSpec
    ctrl_bound: object = None
    Nc: object = "full"
    u0: object = None

    def __post_init__(self):
        if not self.spec.Hc:
            raise DomainError("control search needs at least one control Hamiltonian")
        if self.spec.ctrl:
            raise DomainError("leave spec.ctrl empty; pass initial amplitudes as u0")
        rho0 = self.rho0 if isinstance(self.rho0, QuantumState) else QuantumState(self.rho0)
        if rho0.dim != self.spec.dim:
            raise DimensionError("probe dimension does not match the dynamics")
        object.__setattr__(self, "rho0", rho0)
        if self.ctrl_bound is not None:
            lo, hi = (float(self.ctrl_bound[0]), float(self.ctrl_bound[1]))
            if not hi > lo:
                raise DomainError("control bound needs lo < hi")
            object.__setattr__(self, "ctrl_bound", (lo, hi))

        ns0 = self.spec.n_steps
        nc = ns0 if self.Nc == "full" else int(self.Nc)
        if nc < 1:
            raise DomainError("Nc must be at least 1")
        ns = adjust_steps(ns0, nc)
        spec = self.spec
        if ns != ns0:
            if isinstance(spec.H0, tuple):
                raise DomainError(
                    "per-step H0 cannot be regridded; pick Nc dividing the step count"
                )
            spec = dataclasses.replace(
                spec, tspan=uniform_tspan(spec.tspan[0], spec.tspan[-1], ns)
            )
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "Nc", nc)

        if self.u0 is not None:
            u0 = np.asarray(self.u0, dtype=float)
            if u0.shape != (len(spec.Hc), nc):
                raise DimensionError(
                    f"u0 has shape {u0.shape}, expected {(len(spec.Hc), nc)}"
                )
            object.__setattr__(self, "u0", self._clip(u0))

    def _clip(self, table: np.ndarray) -> np.ndarray:
        if self.ctrl_bound is None:
            return table
        return np.clip(table, self.ctrl_bound[0], self.ctrl_bound[1])


@dataclass(frozen=True)
class ControlResult:
    value: float
    controls: np.ndarray        # (K, Nc), within the bound
    tspan: np.ndarray           # possibly regridded
    run: OptRun


def _control_objective(prob: ControlProblem):
    k, nc, ns = len(prob.spec.Hc), prob.Nc, prob.spec.n_steps
    scalar = _cached_scalar(prob.obj)

    def objective(flat: np.ndarray) -> float:
        table = prob._clip(flat.reshape(k, nc))
        ds = lindblad_endpoint(prob.spec, prob.rho0, _expand_controls(table, ns))
        return scalar(ds)

    return objective


def _gradient_controls(prob: ControlProblem, algo: AlgoParams,
                       record: bool = False) -> ControlResult:
    k, nc = len(prob.spec.Hc), prob.Nc
    u = np.zeros((k, nc)) if prob.u0 is None else prob.u0.copy()
    u = prob._clip(u)
    state = AdamState(np.zeros(k * nc), np.zeros(k * nc)) if algo.adam else None
    log = np.empty(algo.episodes)
    best_f, best_u = -np.inf, u.copy()
    cands = []
    for ep in range(algo.episodes):
        spec = dataclasses.replace(prob.spec, ctrl=tuple(u))
        res = grape_gradient(spec, prob.rho0, prob.obj)
        log[ep] = res.value
        if res.value > best_f:
            best_f, best_u = res.value, u.copy()
        if record:
            cands.append(u.copy())
        flat, state = adam_step(
            u.reshape(-1), np.concatenate(res.grads), state,
            epsilon=algo.epsilon, beta1=algo.beta1, beta2=algo.beta2,
        )
        u = prob._clip(flat.reshape(k, nc))
    run = OptRun(log, best_u, algo.seed, algo.episodes,
                 tuple(cands) if record else None)
    return ControlResult(best_f, best_u, prob.spec.tspan, run)


def control_opt(prob: ControlProblem, algo: AlgoParams,
                record: bool = False) -> ControlResult:
    """Search for control amplitudes maximizing the figure of merit."""
    _check_objective(prob.obj, prob.spec.n_params, algo.algorithm)
    if algo.algorithm in _GRADIENT:
        return _gradient_controls(prob, algo, record=record)
    if algo.algorithm not in ("PSO", "DE"):
        raise UnsupportedError(
            "control search runs on GRAPE, AD, PSO, or DE"
        )
    k, nc = len(prob.spec.Hc), prob.Nc
    lo, hi = prob.ctrl_bound if prob.ctrl_bound is not None else (-1.0, 1.0)
    init = [prob._clip(np.zeros((k, nc))).reshape(-1)]
    if prob.u0 is not None:
        init.append(prob.u0.reshape(-1))
    run = _population_run(
        algo, _control_objective(prob), init,
        lambda rng: rng.uniform(lo, hi, size=k * nc),
        clip=lambda v: prob._clip(v.reshape(k, nc)).reshape(-1),
        record=record,
    )
    run = _with_decoded(run, lambda c: prob._clip(np.asarray(c).reshape(k, nc)))
    best_u = prob._clip(np.asarray(run.best_candidate).reshape(k, nc))
    return ControlResult(float(run.best_values[-1]), best_u, prob.spec.tspan, run)


# -------------------------------------------------------------- probe states

@dataclass(frozen=True)
class StateProblem:
    """Optimize the pure probe state for fixed dynamics.

    dynamics    DynamicsSpec (controls allowed, fixed) or KrausChannel
    obj         figure of merit
    psi0        optional initial coefficients
    """

    dynamics: object
    obj: ObjectiveSpec
    psi0: object = None

    def __post_init__(self):
        if not isinstance(self.dynamics, (DynamicsSpec, KrausChannel)):
            raise DomainError("dynamics must be a DynamicsSpec or a KrausChannel")
        if self.psi0 is not None:
            c = np.asarray(self.psi0, dtype=complex).reshape(-1)
            if c.size != self.dim:
                raise DimensionError("psi0 length does not match the dynamics")
            nrm = float(np.linalg.norm(c))
            if nrm < 1e-9:
                raise DomainError("psi0 must be a nonzero vector")
            object.__setattr__(self, "psi0", c / nrm)

    @property
    def dim(self) -> int:
        return self.dynamics.dim

    @property
    def n_params(self) -> int:
        return self.dynamics.n_params


@dataclass(frozen=True)
class StateResult:
    value: float
    state: QuantumState
    run: OptRun


def _kraus_rho0_grad(ch: KrausChannel, pb) -> np.ndarray:
    d = ch.dim
    g0 = np.zeros((d, d), dtype=complex)
    for i, k in enumerate(ch.K):
        g0 += dagger(k) @ pb.dF_drho @ k
        for a in range(ch.n_params):
            dk = ch.dK[i][a]
            g0 += dagger(k) @ pb.dF_ddrho[a] @ dk + dagger(dk) @ pb.dF_ddrho[a] @ k
    return herm(g0)


def _gradient_state(prob: StateProblem, algo: AlgoParams,
                    record: bool = False) -> StateResult:
    d = prob.dim
    lindblad = isinstance(prob.dynamics, DynamicsSpec)
    if lindblad:
        qtot = total_propagator(prob.dynamics)
        n = prob.dynamics.n_params

        def evaluate(rho0: QuantumState) -> DerivedState:
            z0 = np.zeros(qtot.shape[0], dtype=complex)
            z0[: d * d] = rho0.rho.reshape(-1)
            return _unpack(qtot @ z0, d, n)
    else:
        evaluate = _evaluator(prob.dynamics)

    c = prob.psi0 if prob.psi0 is not None else np.ones(d, dtype=complex) / np.sqrt(d)
    state = AdamState(np.zeros(2 * d), np.zeros(2 * d)) if algo.adam else None
    log = np.empty(algo.episodes)
    best_f, best_c = -np.inf, c.copy()
    cands = []
    for ep in range(algo.episodes):
        ds = evaluate(_pure_density(c))
        pb = _pullback(ds, prob.obj)
        log[ep] = pb.value
        if pb.value > best_f:
            best_f, best_c = pb.value, c.copy()
        if record:
            cands.append(c.copy())
        if lindblad:
            g = np.concatenate(
                [pb.dF_drho.reshape(-1)] + [ga.reshape(-1) for ga in pb.dF_ddrho]
            )
            w = dagger(qtot) @ g
            g0 = herm(w[: d * d].reshape(d, d))
        else:
            g0 = _kraus_rho0_grad(prob.dynamics, pb)
        gc = g0 @ c
        grad = np.concatenate([2.0 * gc.real, 2.0 * gc.imag])
        flat, state = adam_step(
            _encode_state(c), grad, state,
            epsilon=algo.epsilon, beta1=algo.beta1, beta2=algo.beta2,
        )
        c = _decode_state(flat)
    run = OptRun(log, best_c, algo.seed, algo.episodes,
                 tuple(cands) if record else None)
    return StateResult(best_f, _pure_density(best_c), run)


def _top_eigvec(rho: np.ndarray) -> np.ndarray:
    _, u = np.linalg.eigh(rho)
    return np.ascontiguousarray(u[:, -1])


def state_opt(prob: StateProblem, algo: AlgoParams,
              record: bool = False) -> StateResult:
    """Search for the pure probe state maximizing the figure of merit."""
    _check_objective(prob.obj, prob.n_params, algo.algorithm)
    d = prob.dim
    if algo.algorithm == "RI":
        if not isinstance(prob.dynamics, KrausChannel):
            raise UnsupportedError("reverse iteration needs a Kraus channel")
        if prob.obj.kind != "QFIM":
            raise UnsupportedError("reverse iteration maximizes the QFI only")
        rho0 = _pure_density(prob.psi0) if prob.psi0 is not None else QuantumState(np.eye(d) / d)
        run = ri_run(prob.dynamics, rho0, algo, record=record)
        run = _with_decoded(run, _top_eigvec)
        return StateResult(float(run.best_values[-1]), run.best_candidate, run)
    if algo.algorithm in _GRADIENT:
        return _gradient_state(prob, algo, record=record)
    if algo.algorithm not in _POPULATION:
        raise UnsupportedError("state search runs on AD, RI, NM, PSO, or DE")

    evaluate = _evaluator(prob.dynamics)
    scalar = _cached_scalar(prob.obj)

    def objective(flat: np.ndarray) -> float:
        return scalar(evaluate(_pure_density(_decode_state(flat))))

    def normalize(flat: np.ndarray) -> np.ndarray:
        return _encode_state(_decode_state(flat))

    init = [_encode_state(prob.psi0)] if prob.psi0 is not None else []
    run = _population_run(
        algo, objective, init,
        lambda rng: rng.standard_normal(2 * d),
        normalize=normalize,
        record=record,
    )
    run = _with_decoded(run, lambda c: _decode_state(np.asarray(c)))
    best_c = _decode_state(np.asarray(run.best_candidate))
    return StateResult(float(run.best_values[-1]), _pure_density(best_c), run)


# ------------------------------------------------------------- measurements

@dataclass(frozen=True)
class MeasurementProblem:
    """Optimize the measurement for fixed probe and dynamics.

    mtype "projection" searches rank-one projective measurements (minput, if
    given, seeds the population with the eigenbasis of its elements);
    "LC" searches convex recombinations of the minput elements into m
    outputs; "rotation" conjugates minput by a product of single-generator
    rotations.
    """

    dynamics: object
    rho0: QuantumState
    obj: ObjectiveSpec
    mtype: str = "projection"
    minput: tuple = ()
    m: object = None

    def __post_init__(self):
        if not isinstance(self.dynamics, (DynamicsSpec, KrausChannel)):
            raise DomainError("dynamics must be a DynamicsSpec or a KrausChannel")
        if self.obj.kind != "CFIM":
            raise UnsupportedError(
                "measurement search maximizes classical information; build the "
                "objective with kind='CFIM'"
            )
        if self.mtype not in ("projection", "LC", "rotation"):
            raise DomainError(f"unknown measurement type {self.mtype!r}")
        rho0 = self.rho0 if isinstance(self.rho0, QuantumState) else QuantumState(self.rho0)
        if rho0.dim != self.dynamics.dim:
            raise DimensionError("probe dimension does not match the dynamics")
        object.__setattr__(self, "rho0", rho0)

        d = self.dynamics.dim
        if self.mtype == "projection":
            if self.minput:
                object.__setattr__(self, "minput", tuple(Povm(self.minput).ops))
            object.__setattr__(self, "m", d)
        else:
            if not self.minput:
                raise DomainError(f"mtype={self.mtype!r} needs input POVM elements")
            pv = Povm(self.minput)
            object.__setattr__(self, "minput", tuple(pv.ops))
            if self.mtype == "rotation":
                object.__setattr__(self, "m", len(pv))
            else:
                m = len(pv) if self.m is None else int(self.m)
                if m < 1 or m > len(pv):
                    raise DomainError(
                        f"m={m} outputs must lie in 1..{len(pv)} (the input size)"
                    )
                object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class MeasurementResult:
    value: float
    povm: Povm
    run: OptRun
    params: object = None       # B table (LC) or angles (rotation)


def _povm_sensitivity(ds: DerivedState, ops, w_obj, eps: float):
    """(value, per-element gradients dF/dPi_y) for the classical objective."""
    n = ds.n_params
    rho = ds.state.rho
    p = np.array([float(np.trace(op @ rho).real) for op in ops])
    dp = np.array([[float(np.trace(op @ dr).real) for dr in ds.derivs] for op in ops])
    fmat = np.zeros((n, n))
    for y in range(p.size):
        if p[y] >= eps:
            fmat += np.outer(dp[y], dp[y]) / p[y]
    if n == 1:
        value, w = float(fmat[0, 0]), np.eye(1)
    else:
        value, w = _weighted(w_obj, fmat, eps)
    grads = []
    for y in range(p.size):
        if p[y] < eps:
            grads.append(np.zeros_like(rho))
            continue
        s = dp[y] / p[y]
        ws = w @ s
        mat = -float(s @ w @ s) * rho
        for a in range(n):
            mat = mat + 2.0 * ws[a] * ds.derivs[a]
        grads.append(herm(mat))
    return value, grads


def _gradient_measurement(prob: MeasurementProblem, ds: DerivedState,
                          algo: AlgoParams, record: bool = False) -> MeasurementResult:
    d = prob.dynamics.dim
    n = prob.dynamics.n_params
    w_obj = prob.obj.weight(n) if n > 1 else np.eye(1)
    eps = prob.obj.eps
    inputs = prob.minput

    if prob.mtype == "LC":
        m = prob.m
        params = np.zeros((m, len(inputs)))
        for j in range(len(inputs)):
            params[j % m, j] = 1.0
    else:
        gens = su_generators(d)
        params = np.zeros(len(gens))

    size = params.size
    state = AdamState(np.zeros(size), np.zeros(size)) if algo.adam else None
    log = np.empty(algo.episodes)
    best_f, best_p = -np.inf, params.copy()
    cands = []
    for ep in range(algo.episodes):
        if prob.mtype == "LC":
            b, ops = _decode_lc(params.reshape(-1), prob.m, inputs)
            params = b
            value, gops = _povm_sensitivity(ds, ops, w_obj, eps)
            grad = np.zeros((prob.m, len(inputs)))
            for i in range(prob.m):
                for j in range(len(inputs)):
                    grad[i, j] = float(np.trace(gops[i] @ inputs[j]).real)
        else:
            u, factors = _rotation_unitary(params, gens)
            ops = [u @ op @ dagger(u) for op in inputs]
            value, gops = _povm_sensitivity(ds, ops, w_obj, eps)
            grad = np.zeros(size)
            suffixes = [np.eye(d, dtype=complex)] * (size + 1)
            for k in range(size - 1, -1, -1):
                suffixes[k] = factors[k] @ suffixes[k + 1]
            prefix = np.eye(d, dtype=complex)
            for k in range(size):
                du = prefix @ (1j * gens[k]) @ suffixes[k]
                grad[k] = sum(
                    float(np.trace(gops[y] @ (du @ inputs[y] @ dagger(u)
                                              + u @ inputs[y] @ dagger(du))).real)
                    for y in range(len(inputs))
                )
                prefix = prefix @ factors[k]
        log[ep] = value
        if value > best_f:
            best_f, best_p = value, params.copy()
        if record:
            cands.append(tuple(op.copy() for op in ops))
        flat, state = adam_step(
            params.reshape(-1), grad.reshape(-1), state,
            epsilon=algo.epsilon, beta1=algo.beta1, beta2=algo.beta2,
        )
        if prob.mtype == "LC":
            params = flat.reshape(prob.m, len(inputs))
        else:
            params = np.mod(flat, 2.0 * np.pi)
    run = OptRun(log, best_p, algo.seed, algo.episodes,
                 tuple(cands) if record else None)
    if prob.mtype == "LC":
        b, ops = _decode_lc(best_p.reshape(-1), prob.m, inputs)
        return MeasurementResult(best_f, Povm(ops), run, b)
    u, _ = _rotation_unitary(best_p, gens)
    ops = [u @ op @ dagger(u) for op in inputs]
    return MeasurementResult(best_f, Povm(ops), run, best_p)


def measurement_opt(prob: MeasurementProblem, algo: AlgoParams,
                    record: bool = False) -> MeasurementResult:
    """Search for the measurement maximizing the classical figure of merit."""
    d = prob.dynamics.dim
    if isinstance(prob.dynamics, KrausChannel):
        ds = kraus_apply(prob.rho0, prob.dynamics)
    else:
        ds = lindblad_endpoint(prob.dynamics, prob.rho0)

    if algo.algorithm in _GRADIENT:
        if prob.mtype == "projection":
            raise UnsupportedError(
                "projective search has no gradient engine; use PSO or DE"
            )
        return _gradient_measurement(prob, ds, algo, record=record)
    if algo.algorithm not in ("PSO", "DE"):
        raise UnsupportedError("measurement search runs on AD, PSO, or DE")

    w_obj = prob.obj.weight(prob.dynamics.n_params) if prob.dynamics.n_params > 1 else np.eye(1)
    eps = prob.obj.eps

    if prob.mtype == "projection":
        def objective(flat: np.ndarray) -> float:
            povm = _decode_projection(flat, d)
            return _povm_sensitivity(ds, povm.ops, w_obj, eps)[0]

        if prob.minput:
            init = [_encode_projection(prob.minput, d)]
        else:
            init = [_encode_projection([np.outer(e, e.conj()) for e in np.eye(d)], d)]
        run = _population_run(
            algo, objective, init,
            lambda rng: rng.standard_normal(2 * d * d),
            record=record,
        )
        run = _with_decoded(run, lambda c: _decode_projection(np.asarray(c), d).ops)
        povm = _decode_projection(np.asarray(run.best_candidate), d)
        return MeasurementResult(float(run.best_values[-1]), povm, run)

    inputs = prob.minput
    if prob.mtype == "LC":
        m = prob.m

        def objective(flat: np.ndarray) -> float:
            _, ops = _decode_lc(flat, m, inputs)
            return _povm_sensitivity(ds, ops, w_obj, eps)[0]

        b0 = np.zeros((m, len(inputs)))
        for j in range(len(inputs)):
            b0[j % m, j] = 1.0
        run = _population_run(
            algo, objective, [b0.reshape(-1)],
            lambda rng: rng.uniform(0.0, 1.0, size=m * len(inputs)),
            clip=lambda v: np.clip(v, 0.0, 1.0),
            record=record,
        )
        run = _with_decoded(run, lambda c: tuple(_decode_lc(np.asarray(c), m, inputs)[1]))
        b, ops = _decode_lc(np.asarray(run.best_candidate), m, inputs)
        return MeasurementResult(float(run.best_values[-1]), Povm(ops), run, b)

    gens = su_generators(d)

    def objective(flat: np.ndarray) -> float:
        u, _ = _rotation_unitary(np.mod(flat, 2.0 * np.pi), gens)
        ops = [u @ op @ dagger(u) for op in inputs]
        return _povm_sensitivity(ds, ops, w_obj, eps)[0]

    run = _population_run(
        algo, objective, [np.zeros(len(gens))],
        lambda rng: rng.uniform(0.0, 2.0 * np.pi, size=len(gens)),
        clip=lambda v: np.mod(v, 2.0 * np.pi),
        record=record,
    )

    def _decode_rot(c):
        u, _ = _rotation_unitary(np.mod(np.asarray(c), 2.0 * np.pi), gens)
        return tuple(u @ op @ dagger(u) for op in inputs)

    run = _with_decoded(run, _decode_rot)
    s = np.mod(np.asarray(run.best_candidate), 2.0 * np.pi)
    u, _ = _rotation_unitary(s, gens)
    ops = [u @ op @ dagger(u) for op in inputs]
    return MeasurementResult(float(run.best_values[-1]), Povm(ops), run, s)


# ------------------------------------------------------------ comprehensive

@dataclass(frozen=True)
class ComprehensiveProblem:
    """Joint searches: SM (state+measurement), SC (state+control),
    CM (control+measurement), SCM (all three).

    Kraus dynamics admit SM only.  Measurement blocks are projective, so
    every kind containing M maximizes classical information and runs on
    population engines.  SC additionally runs on GRAPE/AD.
    """

    kind: str
    dynamics: object
    obj: ObjectiveSpec
    rho0: object = None         # fixed probe, CM only
    psi0: object = None
    ctrl_bound: object = None
    Nc: object = "full"
    u0: object = None
    minput: tuple = ()

    def __post_init__(self):
        if self.kind not in ("SM", "SC", "CM", "SCM"):
            raise DomainError(f"unknown comprehensive kind {self.kind!r}")
        if isinstance(self.dynamics, KrausChannel):
            if self.kind != "SM":
                raise UnsupportedError("Kraus dynamics support the SM search only")
        elif not isinstance(self.dynamics, DynamicsSpec):
            raise DomainError("dynamics must be a DynamicsSpec or a KrausChannel")
        if "M" in self.kind and self.obj.kind != "CFIM":
            raise UnsupportedError(
                "searches over measurements maximize classical information; "
                "build the objective with kind='CFIM'"
            )
        if "C" in self.kind:
            base = ControlProblem(
                self.dynamics, QuantumState(np.eye(self.dynamics.dim) / self.dynamics.dim),
                self.obj, self.ctrl_bound, self.Nc, self.u0,
            )
            object.__setattr__(self, "dynamics", base.spec)
            object.__setattr__(self, "Nc", base.Nc)
            object.__setattr__(self, "ctrl_bound", base.ctrl_bound)
            object.__setattr__(self, "u0", base.u0)
        if self.kind == "CM":
            if self.rho0 is None:
                raise DomainError("the CM search needs the fixed probe rho0")
            rho0 = self.rho0 if isinstance(self.rho0, QuantumState) else QuantumState(self.rho0)
            object.__setattr__(self, "rho0", rho0)
        if self.psi0 is not None:
            c = np.asarray(self.psi0, dtype=complex).reshape(-1)
            if c.size != self.dynamics.dim:
                raise DimensionError("psi0 length does not match the dynamics")
            object.__setattr__(self, "psi0", c / np.linalg.norm(c))
        if self.minput:
            object.__setattr__(self, "minput", tuple(Povm(self.minput).ops))


@dataclass(frozen=True)
class ComprehensiveResult:
    value: float
    run: OptRun
    state: object = None
    controls: object = None
    povm: object = None
    tspan: object = None


def _clip_box(vec, lo, hi, sl):
    out = np.asarray(vec, dtype=float).copy()
    out[sl] = np.clip(out[sl], lo, hi)
    return out


def comprehensive_opt(prob: ComprehensiveProblem, algo: AlgoParams,
                      record: bool = False) -> ComprehensiveResult:
    """Joint design search over the blocks named by prob.kind."""
    d = prob.dynamics.dim
    n = prob.dynamics.n_params
    _check_objective(prob.obj, n, algo.algorithm)

    with_s = "S" in prob.kind
    with_c = "C" in prob.kind
    with_m = "M" in prob.kind
    k = len(prob.dynamics.Hc) if with_c else 0
    nc = prob.Nc if with_c else 0
    ns = prob.dynamics.n_steps if isinstance(prob.dynamics, DynamicsSpec) else 0

    sizes = (2 * d if with_s else 0, k * nc, 2 * d * d if with_m else 0)
    off_u = sizes[0]
    off_m = sizes[0] + sizes[1]
    total = sum(sizes)
    sl_u = slice(off_u, off_m)
    lo, hi = prob.ctrl_bound if prob.ctrl_bound is not None else (-1.0, 1.0)

    if algo.algorithm in _GRADIENT:
        if prob.kind != "SC":
            raise UnsupportedError(
                f"the {prob.kind} search has no gradient engine; use PSO or DE"
            )
        return _gradient_sc(prob, algo, record=record)
    if algo.algorithm not in ("PSO", "DE"):
        raise UnsupportedError("comprehensive search runs on PSO or DE")

    eval_fixed = _evaluator(prob.dynamics) if not with_c else None
    w_obj = prob.obj.weight(n) if n > 1 else np.eye(1)
    scalar = _cached_scalar(prob.obj)

    def decode(flat):
        c = _decode_state(flat[: sizes[0]]) if with_s else None
        table = None
        if with_c:
            table = np.clip(flat[sl_u].reshape(k, nc), lo, hi) if prob.ctrl_bound \
                else flat[sl_u].reshape(k, nc)
        povm = _decode_projection(flat[off_m:], d) if with_m else None
        return c, table, povm

    def objective(flat: np.ndarray) -> float:
        c, table, povm = decode(flat)
        rho0 = _pure_density(c) if with_s else prob.rho0
        if with_c:
            ds = lindblad_endpoint(prob.dynamics, rho0, _expand_controls(table, ns))
        else:
            ds = eval_fixed(rho0)
        if with_m:
            return _povm_sensitivity(ds, povm.ops, w_obj, prob.obj.eps)[0]
        return scalar(ds)

    seed_parts = []
    if with_s:
        seed_parts.append(_encode_state(
            prob.psi0 if prob.psi0 is not None else np.ones(d, dtype=complex) / np.sqrt(d)
        ))
    if with_c:
        zero = np.clip(np.zeros((k, nc)), lo, hi) if prob.ctrl_bound else np.zeros((k, nc))
        seed_parts.append((prob.u0 if prob.u0 is not None else zero).reshape(-1))
    if with_m:
        seeds_m = prob.minput if prob.minput else [np.outer(e, e.conj()) for e in np.eye(d)]
        seed_parts.append(_encode_projection(seeds_m, d))
    init = [np.concatenate(seed_parts)]
    if with_c and prob.u0 is not None:
        alt = init[0].copy()
        alt[sl_u] = zero.reshape(-1)
        init.append(alt)

    def sampler(rng):
        parts = []
        if with_s:
            parts.append(rng.standard_normal(2 * d))
        if with_c:
            parts.append(rng.uniform(lo, hi, size=k * nc))
        if with_m:
            parts.append(rng.standard_normal(2 * d * d))
        return np.concatenate(parts)

    clip = (lambda v: _clip_box(v, lo, hi, sl_u)) if (with_c and prob.ctrl_bound) else None
    run = _population_run(algo, objective, init, sampler, clip=clip, record=record)
    run = _with_decoded(run, lambda cand: decode(np.asarray(cand)))

    c, table, povm = decode(np.asarray(run.best_candidate))
    return ComprehensiveResult(
        float(run.best_values[-1]), run,
        state=_pure_density(c) if with_s else None,
        controls=table,
        povm=povm,
        tspan=prob.dynamics.tspan if with_c else None,
    )


def _gradient_sc(prob: ComprehensiveProblem, algo: AlgoParams,
                 record: bool = False) -> ComprehensiveResult:
    """Joint state+control ascent; one adjoint sweep yields both gradients."""
    d = prob.dynamics.dim
    k, nc = len(prob.dynamics.Hc), prob.Nc
    lo, hi = prob.ctrl_bound if prob.ctrl_bound is not None else (None, None)

    c = prob.psi0 if prob.psi0 is not None else np.ones(d, dtype=complex) / np.sqrt(d)
    u = np.zeros((k, nc)) if prob.u0 is None else prob.u0.copy()
    if lo is not None:
        u = np.clip(u, lo, hi)
    st_c = AdamState(np.zeros(2 * d), np.zeros(2 * d)) if algo.adam else None
    st_u = AdamState(np.zeros(k * nc), np.zeros(k * nc)) if algo.adam else None
    log = np.empty(algo.episodes)
    best = (-np.inf, c.copy(), u.copy())
    cands = []
    for ep in range(algo.episodes):
        spec = dataclasses.replace(prob.dynamics, ctrl=tuple(u))
        res = grape_gradient(spec, _pure_density(c), prob.obj)
        log[ep] = res.value
        if res.value > best[0]:
            best = (res.value, c.copy(), u.copy())
        if record:
            cands.append((c.copy(), u.copy(), None))
        gc = res.rho0_grad @ c
        flat_c, st_c = adam_step(
            _encode_state(c), np.concatenate([2.0 * gc.real, 2.0 * gc.imag]), st_c,
            epsilon=algo.epsilon, beta1=algo.beta1, beta2=algo.beta2,
        )
        c = _decode_state(flat_c)
        flat_u, st_u = adam_step(
            u.reshape(-1), np.concatenate(res.grads), st_u,
            epsilon=algo.epsilon, beta1=algo.beta1, beta2=algo.beta2,
        )
        u = flat_u.reshape(k, nc)
        if lo is not None:
            u = np.clip(u, lo, hi)
    value, best_c, best_u = best
    run = OptRun(log, (best_c, best_u), algo.seed, algo.episodes,
                 tuple(cands) if record else None)
    return ComprehensiveResult(
        value, run, state=_pure_density(best_c), controls=best_u,
        tspan=prob.dynamics.tspan,
    )


# ----------------------------------------------------------------- min time

@dataclass(frozen=True)
class MinTimeResult:
    found: bool
    time: object                # earliest grid time reaching the target
    value: float                # at `time` if found, else best over probes
    controls: object
    tspan: object


def mintime(prob: ControlProblem, f_target: float, algo: AlgoParams,
            search: str = "binary") -> MinTimeResult:
    """Earliest tspan prefix whose optimized figure of merit reaches f_target.

    Every probe re-optimizes the controls from scratch on the prefix grid
    with one amplitude slot per step.  Binary search assumes the optimized
    value grows with the horizon; the forward scan does not.
    """
    if search not in ("binary", "forward"):
        raise DomainError(f"unknown search mode {search!r}")
    if prob.Nc != prob.spec.n_steps:
        raise DomainError("time search requires Nc='full' (one slot per step)")
    spec0 = prob.spec
    ns = spec0.n_steps

    def probe(j: int) -> ControlResult:
        h0 = spec0.H0[: j + 1] if isinstance(spec0.H0, tuple) else spec0.H0
        sub_spec = DynamicsSpec(
            spec0.tspan[: j + 1], h0, spec0.dH, spec0.Hc, (), spec0.decay
        )
        sub = ControlProblem(sub_spec, prob.rho0, prob.obj, prob.ctrl_bound, "full")
        return control_opt(sub, algo)

    if search == "forward":
        best = None
        for j in range(1, ns + 1):
            res = probe(j)
            if best is None or res.value > best[1].value:
                best = (j, res)
            if res.value >= f_target:
                return MinTimeResult(
                    True, float(spec0.tspan[j]), res.value, res.controls, res.tspan
                )
        j, res = best
        return MinTimeResult(False, None, res.value, res.controls, res.tspan)

    results = {}

    def value_at(j: int) -> ControlResult:
        if j not in results:
            results[j] = probe(j)
        return results[j]

    full = value_at(ns)
    if full.value < f_target:
        return MinTimeResult(False, None, full.value, full.controls, full.tspan)
    lo_j, hi_j = 1, ns
    while lo_j < hi_j:
        mid = (lo_j + hi_j) // 2
        if value_at(mid).value >= f_target:
            hi_j = mid
        else:
            lo_j = mid + 1
    res = value_at(lo_j)
    return MinTimeResult(True, float(spec0.tspan[lo_j]), res.value, res.controls, res.tspan)
