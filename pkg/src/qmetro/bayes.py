"""Bayesian estimation and Bayesian bounds on discretized priors.

Every integral is the trapezoidal rule on the stored grids; uniform and
non-uniform grids both work.  Grids of states carry one DerivedState per
point, so likelihoods and pointwise information matrices never re-propagate
dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import (
    DegeneracyError,
    DimensionError,
    DomainError,
    UnsupportedError,
)
from .fisher import cfim, qfim
from .states import DerivedState, Povm, QuantumState

__all__ = [
    "PriorGrid",
    "BiasSpec",
    "trapz_grid",
    "uniform_prior",
    "gaussian_prior",
    "grid_states",
    "simulate_outcomes",
    "bayes_update",
    "mle",
    "bayes_cost",
    "bcb",
    "bcrb",
    "bqcrb",
    "vtb",
    "qvtb",
    "qzzb",
    "avg_cfim",
    "avg_qfim",
]


def trapz_grid(arr, axes):
    """Trapezoidal integral over the leading len(axes) dimensions of arr."""
    out = np.asarray(arr, dtype=float) if not np.iscomplexobj(arr) else np.asarray(arr)
    for i in reversed(range(len(axes))):
        out = trapezoid(out, x=axes[i], axis=i)
    return out


@dataclass(frozen=True)
class PriorGrid:
    """Prior density on the outer product of 1-D axes, with optional gradient
    arrays dp[a] = d p / d x_a and a grid of propagated states."""

    axes: tuple
    p: np.ndarray
    states: object = None
    dp: object = None

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.axes)
        for a in axes:
            if a.size < 2:
                raise DomainError("each prior axis needs at least two points")
            if np.any(np.diff(a) <= 0):
                raise DomainError("prior axes must be strictly increasing")
        shape = tuple(a.size for a in axes)
        p = np.asarray(self.p, dtype=float)
        if p.shape != shape:
            raise DimensionError(f"prior array shape {p.shape} != grid shape {shape}")
        if np.any(p < 0):
            raise DomainError("prior density must be nonnegative")
        mass = float(trapz_grid(p, axes))
        if abs(mass - 1.0) > 1e-6:
            raise DomainError(f"prior integrates to {mass!r}, not 1 within 1e-6")
        if self.dp is not None:
            dp = np.asarray(self.dp, dtype=float)
            if dp.shape != (len(axes),) + shape:
                raise DimensionError("dp must have shape (n_params,) + grid shape")
            dp.setflags(write=False)
            object.__setattr__(self, "dp", dp)
        if self.states is not None:
            st = np.asarray(self.states, dtype=object)
            if st.shape != shape:
                raise DimensionError("states array shape differs from the grid")
            object.__setattr__(self, "states", st)
        p.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "p", p)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def n_params(self) -> int:
        return len(self.axes)

    def with_states(self, states) -> "PriorGrid":
        return PriorGrid(self.axes, self.p, states, self.dp)

    def point(self, idx) -> np.ndarray:
        return np.array([a[i] for a, i in zip(self.axes, idx)])

    def mesh(self):
        """Coordinate arrays X_a over the grid, shape (n,) + grid shape."""
        return np.array(np.meshgrid(*self.axes, indexing="ij"))

    def mean(self) -> np.ndarray:
        x = self.mesh()
        return np.array([float(trapz_grid(x[a] * self.p, self.axes)) for a in range(self.n_params)])


def uniform_prior(axes, states=None) -> PriorGrid:
    axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in axes)
    vol = 1.0
    for a in axes:
        vol *= a[-1] - a[0]
    p = np.full(tuple(a.size for a in axes), 1.0 / vol)
    dp = np.zeros((len(axes),) + p.shape)
    return PriorGrid(axes, p, states, dp)


def gaussian_prior(axis, mu: float, eta: float, states=None) -> PriorGrid:
    """Gaussian truncated to the axis range and renormalized on the grid.

    dp is the analytic derivative -(x-mu)/eta^2 * p.
    """
    axis = np.asarray(axis, dtype=float).reshape(-1)
    raw = np.exp(-((axis - mu) ** 2) / (2.0 * eta**2))
    mass = float(trapezoid(raw, x=axis))
    p = raw / mass
    dp = (-(axis - mu) / eta**2 * p)[None, :]
    return PriorGrid((axis,), p, states, dp)


def grid_states(mgrid, rho0, tspan, decay=()) -> np.ndarray:
    """Propagate rho0 under every grid Hamiltonian; endpoint DerivedState per point."""
    from .dynamics import DynamicsSpec, lindblad_propagate

    out = np.empty(mgrid.shape, dtype=object)
    for idx in np.ndindex(mgrid.shape):
        spec = DynamicsSpec(tspan=tspan, H0=mgrid.H[idx], dH=tuple(mgrid.dH[idx]), decay=decay)
        out[idx] = lindblad_propagate(spec, rho0)[-1]
    return out


def simulate_outcomes(state, M: Povm, n: int, rng=None) -> np.ndarray:
    """Draw n outcome indices from p(y) = Tr(rho Pi_y) with a seeded generator."""
    rho = state.state.rho if isinstance(state, DerivedState) else (
        state.rho if isinstance(state, QuantumState) else np.asarray(state, dtype=complex)
    )
    p = np.array([float(np.trace(op @ rho).real) for op in M.ops])
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return rng.choice(p.size, size=n, p=p)


def _likelihood_table(grid: PriorGrid, M: Povm) -> np.ndarray:
    if grid.states is None:
        raise DomainError("prior grid carries no states; build them first")
    shape = grid.shape
    table = np.empty((len(M),) + shape)
    for idx in np.ndindex(shape):
        rho = grid.states[idx].state.rho
        for y, op in enumerate(M.ops):
            table[(y,) + idx] = max(float(np.trace(op @ rho).real), 0.0)
    return table


def _map_estimate(grid: PriorGrid, p: np.ndarray) -> np.ndarray:
    idx = np.unravel_index(int(np.argmax(p)), p.shape)
    return grid.point(idx)


def _mean_estimate(grid: PriorGrid, p: np.ndarray) -> np.ndarray:
    x = grid.mesh()
    return np.array([float(trapz_grid(x[a] * p, grid.axes)) for a in range(grid.n_params)])


def bayes_update(grid: PriorGrid, M: Povm, y_seq, estimator: str = "mean", save_all: bool = False):
    """Sequential Bayesian updating over an outcome sequence.

    Returns (posterior, estimates); posterior is the final density, or one
    density per round when save_all.  Estimates has one row per round.  A
    likelihood that annihilates the posterior raises DegeneracyError.
    """
    if estimator not in ("mean", "MAP"):
        raise DomainError(f"unknown estimator {estimator!r}")
    table = _likelihood_table(grid, M)
    post = grid.p.copy()
    est = []
    saved = []
    for y in np.asarray(y_seq, dtype=int).reshape(-1):
        if not 0 <= y < len(M):
            raise DomainError(f"outcome index {y} outside the POVM")
        cand = post * table[y]
        mass = float(trapz_grid(cand, grid.axes))
        if mass <= 0.0 or not np.isfinite(mass):
            raise DegeneracyError(
                f"posterior annihilated by outcome {y}; prior support and "
                "likelihood are disjoint"
            )
        post = cand / mass
        est.append(_mean_estimate(grid, post) if estimator == "mean" else _map_estimate(grid, post))
        if save_all:
            saved.append(post.copy())
    estimates = np.array(est) if est else np.empty((0, grid.n_params))
    return (saved if save_all else post), estimates


def mle(grid: PriorGrid, M: Povm, y_seq, save_all: bool = False):
    """Maximum likelihood over the grid, accumulated in log space."""
    table = _likelihood_table(grid, M)
    with np.errstate(divide="ignore"):
        logs = np.log(table)
    ll = np.zeros(grid.shape)
    est = []
    saved = []
    for y in np.asarray(y_seq, dtype=int).reshape(-1):
        if not 0 <= y < len(M):
            raise DomainError(f"outcome index {y} outside the POVM")
        ll = ll + logs[y]
        est.append(_map_estimate(grid, ll))
        if save_all:
            saved.append(ll.copy())
    estimates = np.array(est) if est else np.empty((0, grid.n_params))
    return (saved if save_all else ll), estimates


def _weight(W, n: int) -> np.ndarray:
    if n == 1:
        return np.eye(1)   # single-parameter cost always uses W = 1
    if W is None:
        return np.eye(n)
    w = np.atleast_2d(np.asarray(W, dtype=float))
    if w.shape != (n, n):
        raise DimensionError(f"weight matrix must be {n}x{n}")
    return w


def bayes_cost(grid: PriorGrid, xest, M: Povm, W=None) -> float:
    """Average quadratic cost of a per-outcome estimator table."""
    n = grid.n_params
    w = _weight(W, n)
    xb = np.atleast_2d(np.asarray(xest, dtype=float))
    if xb.shape != (len(M), n):
        raise DimensionError(f"xest must be {(len(M), n)}, one estimate per outcome")
    table = _likelihood_table(grid, M)
    x = grid.mesh()
    total = np.zeros(grid.shape)
    for y in range(len(M)):
        diff = x - xb[y].reshape((n,) + (1,) * n)
        quad = np.einsum("a...,ab,b...->...", diff, w, diff)
        total += table[y] * quad
    return float(trapz_grid(grid.p * total, grid.axes))


def bcb(grid: PriorGrid, W=None, eps: float = 1e-8) -> float:
    """Lower bound on the average Bayesian cost.

    Solves rho_bar L_a + L_a rho_bar = 2 * integral(x_a p rho) per parameter
    and returns integral(p x^T W x) - sum_ab W_ab Re Tr(rho_bar L_a L_b).
    """
    from .linalg import sylvester_symmetric

    if grid.states is None:
        raise DomainError("prior grid carries no states")
    n = grid.n_params
    w = _weight(W, n)
    shape = grid.shape
    d = grid.states[next(iter(np.ndindex(shape)))].dim
    rho_stack = np.empty(shape + (d, d), dtype=complex)
    for idx in np.ndindex(shape):
        rho_stack[idx] = grid.states[idx].state.rho
    pw = grid.p[..., None, None]
    rho_bar = trapz_grid(pw * rho_stack, grid.axes)
    x = grid.mesh()
    ls = []
    for a in range(n):
        s_a = trapz_grid((grid.p * x[a])[..., None, None] * rho_stack, grid.axes)
        ls.append(sylvester_symmetric(rho_bar, 2.0 * s_a, eps=eps))
    quad = np.einsum("a...,ab,b...->...", x, w, x)
    first = float(trapz_grid(grid.p * quad, grid.axes))
    second = 0.0
    for a in range(n):
        for b in range(n):
            if w[a, b]:
                second += w[a, b] * float(np.trace(rho_bar @ ls[a] @ ls[b]).real)
    return first - second


@dataclass(frozen=True)
class BiasSpec:
    """Estimator biases b_a(x) and diagonal derivatives d b_a / d x_a on a grid."""

    b: np.ndarray
    db: np.ndarray

    @classmethod
    def zeros(cls, grid: PriorGrid) -> "BiasSpec":
        shape = (grid.n_params,) + grid.shape
        return cls(np.zeros(shape), np.zeros(shape))

    def validate(self, grid: PriorGrid):
        shape = (grid.n_params,) + grid.shape
        if np.asarray(self.b).shape != shape or np.asarray(self.db).shape != shape:
            raise DimensionError(f"bias arrays must have shape {shape}")


def _safe_inv(m: np.ndarray, eps: float):
    """Inverse with eigenvalue floor; flags when the pseudo-inverse kicked in."""
    w, u = np.linalg.eigh(0.5 * (m + m.T))
    if np.min(np.abs(w)) < eps:
        inv_w = np.where(np.abs(w) >= eps, 1.0 / np.where(w == 0, 1.0, w), 0.0)
        return (u * inv_w) @ u.T, True
    return (u * (1.0 / w)) @ u.T, False


def _pointwise_info(grid: PriorGrid, kind: str, M, ld_type: str, eps: float) -> np.ndarray:
    n = grid.n_params
    out = np.empty(grid.shape + (n, n))
    for idx in np.ndindex(grid.shape):
        ds = grid.states[idx]
        if kind == "cfim":
            out[idx] = cfim(ds, M, eps=eps).entries
        else:
            out[idx] = qfim(ds, ld_type=ld_type, eps=eps).entries
    return out


def _prior_info(grid: PriorGrid, eps: float) -> np.ndarray:
    """Pointwise [I_p]_ab = (d_a ln p)(d_b ln p), zero where p < eps."""
    if grid.dp is None:
        raise DomainError("prior gradient dp is required for this bound")
    n = grid.n_params
    p = grid.p
    mask = p >= eps
    scores = np.where(mask, grid.dp / np.where(p == 0, 1.0, p), 0.0)
    return np.einsum("a...,b...->...ab", scores, scores)


def _bcrb_generic(grid: PriorGrid, info: np.ndarray, bias: BiasSpec, btype: int, eps: float, return_info: bool):
    n = grid.n_params
    bias.validate(grid)
    b = np.asarray(bias.b, dtype=float)
    db = np.asarray(bias.db, dtype=float)
    flagged = False
    if btype == 1:
        acc = np.empty(grid.shape + (n, n))
        for idx in np.ndindex(grid.shape):
            inv, fl = _safe_inv(info[idx], eps)
            flagged |= fl
            bdiag = np.diag(1.0 + db[(slice(None),) + idx])
            bb = np.outer(b[(slice(None),) + idx], b[(slice(None),) + idx])
            acc[idx] = bdiag @ inv @ bdiag + bb
        out = trapz_grid(grid.p[..., None, None] * acc, grid.axes)
    elif btype == 2:
        info_bayes = trapz_grid(grid.p[..., None, None] * info, grid.axes)
        bmean = np.zeros((n, n))
        bbmean = np.zeros((n, n))
        bdiag_all = np.empty(grid.shape + (n, n))
        bb_all = np.empty(grid.shape + (n, n))
        for idx in np.ndindex(grid.shape):
            bdiag_all[idx] = np.diag(1.0 + db[(slice(None),) + idx])
            bb_all[idx] = np.outer(b[(slice(None),) + idx], b[(slice(None),) + idx])
        bmean = trapz_grid(grid.p[..., None, None] * bdiag_all, grid.axes)
        bbmean = trapz_grid(grid.p[..., None, None] * bb_all, grid.axes)
        inv, flagged = _safe_inv(info_bayes, eps)
        out = bmean @ inv @ bmean + bbmean
    elif btype == 3:
        ip = _prior_info(grid, eps)
        if grid.dp is None:
            raise DomainError("btype=3 needs the prior gradient dp")
        p = grid.p
        scores = np.where(p[None] >= eps, grid.dp / np.where(p == 0, 1.0, p)[None], 0.0)
        acc = np.empty(grid.shape + (n, n))
        for idx in np.ndindex(grid.shape):
            inv, fl = _safe_inv(ip[idx] + info[idx], eps)
            flagged |= fl
            gmat = np.outer(b[(slice(None),) + idx], scores[(slice(None),) + idx])
            gmat = gmat + np.diag(1.0 + db[(slice(None),) + idx])
            acc[idx] = gmat @ inv @ gmat.T
        out = trapz_grid(grid.p[..., None, None] * acc, grid.axes)
    else:
        raise DomainError(f"btype must be 1, 2 or 3, got {btype}")
    out = 0.5 * (out + out.T)
    return (out, {"pinv_used": flagged}) if return_info else out


def bcrb(grid: PriorGrid, M: Povm | None = None, bias: BiasSpec | None = None,
         btype: int = 1, eps: float = 1e-8, return_info: bool = False):
    """Bayesian classical Cramer-Rao bound, three conventions.

    Type 1 integrates B I^-1 B + b b^T pointwise; type 2 inverts the
    integrated information; type 3 uses the prior score through
    G_ab = (d_b ln p) b_a + B_aa delta_ab and the (I_p + I)^-1 kernel.
    """
    bias = bias if bias is not None else BiasSpec.zeros(grid)
    info = _pointwise_info(grid, "cfim", M, "SLD", eps)
    return _bcrb_generic(grid, info, bias, btype, eps, return_info)


def bqcrb(grid: PriorGrid, bias: BiasSpec | None = None, btype: int = 1,
          ld_type: str = "SLD", eps: float = 1e-8, return_info: bool = False):
    """Bayesian quantum Cramer-Rao bound; as bcrb with the QFIM."""
    bias = bias if bias is not None else BiasSpec.zeros(grid)
    info = _pointwise_info(grid, "qfim", None, ld_type, eps)
    return _bcrb_generic(grid, info, bias, btype, eps, return_info)


def avg_cfim(grid: PriorGrid, M: Povm | None = None, eps: float = 1e-8) -> np.ndarray:
    info = _pointwise_info(grid, "cfim", M, "SLD", eps)
    return trapz_grid(grid.p[..., None, None] * info, grid.axes)


def avg_qfim(grid: PriorGrid, ld_type: str = "SLD", eps: float = 1e-8) -> np.ndarray:
    info = _pointwise_info(grid, "qfim", None, ld_type, eps)
    return trapz_grid(grid.p[..., None, None] * info, grid.axes)


def vtb(grid: PriorGrid, M: Povm | None = None, eps: float = 1e-8, return_info: bool = False):
    """Van Trees bound (I_prior + I_Bayes)^-1."""
    ip = trapz_grid(grid.p[..., None, None] * _prior_info(grid, eps), grid.axes)
    ib = avg_cfim(grid, M, eps)
    inv, flagged = _safe_inv(ip + ib, eps)
    inv = 0.5 * (inv + inv.T)
    return (inv, {"pinv_used": flagged}) if return_info else inv


def qvtb(grid: PriorGrid, ld_type: str = "SLD", eps: float = 1e-8, return_info: bool = False):
    """Quantum Van Trees bound (I_prior + F_Bayes)^-1."""
    ip = trapz_grid(grid.p[..., None, None] * _prior_info(grid, eps), grid.axes)
    fb = avg_qfim(grid, ld_type, eps)
    inv, flagged = _safe_inv(ip + fb, eps)
    inv = 0.5 * (inv + inv.T)
    return (inv, {"pinv_used": flagged}) if return_info else inv


def qzzb(grid: PriorGrid, eps: float = 1e-8) -> float:
    """Quantum Ziv-Zakai bound for one parameter on a uniform grid.

    Z(tau) = integral over x of min(p(x), p(x+tau)) (1 - ||rho(x) -
    rho(x+tau)||_tr / 2); valley filling is a suffix running maximum over
    the tau grid; the bound is (1/2) integral tau V(tau) dtau.
    """
    if grid.n_params != 1:
        raise UnsupportedError("the Ziv-Zakai bound here is single-parameter only")
    if grid.states is None:
        raise DomainError("prior grid carries no states")
    axis = grid.axes[0]
    h = np.diff(axis)
    if np.max(np.abs(h - h[0])) > 1e-9 * max(abs(h[0]), 1e-30):
        raise DomainError("qzzb requires a uniformly spaced grid")
    npts = axis.size
    d = grid.states[0].dim
    rhos = np.empty((npts, d, d), dtype=complex)
    for i in range(npts):
        rhos[i] = grid.states[i].state.rho
    p = grid.p

    z = np.zeros(npts)
    z[0] = float(trapezoid(p, x=axis))
    for k in range(1, npts):
        diff = rhos[: npts - k] - rhos[k:]
        w = np.linalg.eigvalsh(diff)
        tn = np.sum(np.abs(w), axis=1)
        integrand = np.minimum(p[: npts - k], p[k:]) * (1.0 - 0.5 * tn)
        z[k] = float(trapezoid(integrand, x=axis[: npts - k]))
    filled = np.maximum.accumulate(z[::-1])[::-1]
    tau = (axis - axis[0])
    return 0.5 * float(trapezoid(tau * filled, x=tau))
