"""Adaptive estimation with a tunable working-point offset.

The session is a small state machine around a Bayesian posterior on a
parameter grid.  A working point x_opt is chosen once (the grid point
whose inverse information cost is smallest); afterwards every round
measures at the shifted parameter x + u, updates the posterior with the
shifted likelihood, re-estimates x, and retunes the offset so the next
round operates at u = x_opt - x_hat.

The likelihood at shifted coordinates reuses the propagated grid: outcome
probabilities are linearly interpolated between grid points, with
arguments clamped to the grid range, so no dynamics are re-solved once a
session exists.  Estimates use the posterior MAP by default; the mean is
available as a constructor flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import PriorGrid, bayes_update, trapz_grid
from .engines import AlgoParams, ObjectiveSpec
from .errors import DegeneracyError, DomainError, UnsupportedError
from .states import Povm

__all__ = ["XOptResult", "find_x_opt", "AdaptiveSession"]

_SCHEMA = "adaptive-session/1"


@dataclass(frozen=True)
class XOptResult:
    x_opt: np.ndarray           # coordinates of the chosen grid point
    index: tuple                # its multi-index
    cost: float                 # Tr(W I^-1) or Tr(W F^-1) there
    povm: object = None         # optimal measurement when one was searched


def _inverse_cost(f: np.ndarray, w: np.ndarray) -> float:
    evs = np.linalg.eigvalsh(f)
    if evs[0] <= 1e-12 * max(1.0, float(evs[-1])):
        return np.inf
    return float(np.trace(w @ np.linalg.inv(f)))


def find_x_opt(grid: PriorGrid, M: Povm = None, W=None, eps: float = 1e-8,
               model=None, rho0=None, tspan=None, decay=(),
               algo: AlgoParams = None, mtype: str = "projection") -> XOptResult:
    """Grid point minimizing Tr(W I^-1) (fixed M) or Tr(W F^-1) (M=None).

    Ties take the lowest flat index.  Passing model/rho0/tspan in the
    free-measurement case additionally optimizes a measurement at the
    chosen point and returns it.
    """
    from .fisher import cfim, qfim

    if grid.states is None:
        raise DomainError("prior grid carries no states; build them first")
    n = grid.n_params
    w = np.eye(n) if W is None else np.asarray(W, dtype=float)
    best = None
    for idx in np.ndindex(grid.shape):
        ds = grid.states[idx]
        f = (qfim(ds, eps=eps) if M is None else cfim(ds, M, eps=eps)).entries
        cost = _inverse_cost(f, w)
        if best is None or cost < best[0]:
            best = (cost, idx)
    if not np.isfinite(best[0]):
        raise DegeneracyError(
            "the information matrix is singular at every grid point"
        )
    cost, idx = best
    povm = None
    if M is None and model is not None:
        from .dynamics import DynamicsSpec
        from .scenarios import MeasurementProblem, measurement_opt

        spec = DynamicsSpec(tspan, model.H[idx], tuple(model.dH[idx]), decay=decay)
        prob = MeasurementProblem(spec, rho0, ObjectiveSpec("CFIM", W=W), mtype=mtype)
        povm = measurement_opt(prob, algo if algo is not None else AlgoParams("DE")).povm
    return XOptResult(grid.point(idx), idx, cost, povm)


class AdaptiveSession:
    """One adaptive estimation experiment over a single unknown.

    Rounds mutate the session only through pre_estimate and
    submit_outcome, and a failed update leaves it untouched.
    """

    def __init__(self, grid: PriorGrid, M: Povm, W=None, x_opt=None,
                 estimator: str = "MAP", pre_rounds: int = 500):
        if grid.n_params != 1:
            raise UnsupportedError("adaptive sessions track a single unknown")
        if grid.states is None:
            raise DomainError("prior grid carries no states; build them first")
        if estimator not in ("MAP", "mean"):
            raise DomainError(f"unknown estimator {estimator!r}")
        if pre_rounds < 0:
            raise DomainError("pre_rounds must be >= 0")
        self.grid = grid
        self.M = M if isinstance(M, Povm) else Povm(M)
        self.W = W
        self.estimator = estimator
        self.pre_rounds = int(pre_rounds)

        axis = grid.axes[0]
        table = np.empty((len(self.M), axis.size))
        for i in range(axis.size):
            rho = grid.states[i].state.rho
            for y, op in enumerate(self.M.ops):
                table[y, i] = max(float(np.trace(op @ rho).real), 0.0)
        self._table = table

        if x_opt is None:
            self._x_opt = float(find_x_opt(grid, self.M, W).x_opt[0])
        else:
            self._x_opt = float(x_opt)

        self._p = grid.p.copy()
        self._u = 0.0
        self._round = 0
        self._pre_done = 0
        self._history: list = []
        if self.pre_rounds == 0:
            self._phase = "adaptive"
            self._u = self._x_opt - self._estimate(self._p)
        else:
            self._phase = "pre-estimation"

    # ------------------------------------------------------------ queries

    @property
    def phase(self) -> str:
        return self._phase

    @property
    def x_opt(self) -> float:
        return self._x_opt

    @property
    def u(self) -> float:
        return self._u

    @property
    def round(self) -> int:
        return self._round

    @property
    def history(self) -> tuple:
        return tuple(self._history)

    @property
    def posterior(self) -> np.ndarray:
        return self._p.copy()

    def _estimate(self, p: np.ndarray) -> float:
        axis = self.grid.axes[0]
        if self.estimator == "MAP":
            return float(axis[int(np.argmax(p))])
        return float(trapz_grid(axis * p, self.grid.axes))

    def estimate(self) -> float:
        """Current point estimate of the unknown."""
        return self._estimate(self._p)

    def outcome_probabilities(self, x_value: float) -> np.ndarray:
        """p(y | x + u) from the interpolated grid, normalized."""
        axis = self.grid.axes[0]
        z = float(np.clip(x_value + self._u, axis[0], axis[-1]))
        p = np.array([np.interp(z, axis, self._table[y]) for y in range(len(self.M))])
        p = np.clip(p, 0.0, None)
        total = p.sum()
        if total <= 0.0:
            raise DegeneracyError(f"all outcomes have zero probability at x={z}")
        return p / total

    # ------------------------------------------------------------- rounds

    def pre_estimate(self, y_seq) -> "AdaptiveSession":
        """Offset-free Bayesian rounds; switches to the adaptive phase once
        the configured budget is spent."""
        if self._phase != "pre-estimation":
            raise DomainError("session is not in the pre-estimation phase")
        y_seq = np.asarray(y_seq, dtype=int).reshape(-1)
        if y_seq.size:
            work = PriorGrid(self.grid.axes, self._p, self.grid.states, self.grid.dp)
            post, est = bayes_update(work, self.M, y_seq, estimator=self.estimator)
            self._p = post
            for y, row in zip(y_seq, est):
                self._history.append({"y": int(y), "x_hat": float(row[0]), "u": 0.0})
            self._round += y_seq.size
            self._pre_done += y_seq.size
        if self._pre_done >= self.pre_rounds:
            self._phase = "adaptive"
            self._u = self._x_opt - self._estimate(self._p)
        return self

    def submit_outcome(self, y: int):
        """One adaptive round.  Returns (u_next, x_hat, posterior snapshot).

        The posterior is multiplied by the likelihood at x + u (current
        offset), renormalized, and the offset retuned to x_opt - x_hat.  An
        annihilated posterior raises DegeneracyError without mutating the
        session.
        """
        if self._phase != "adaptive":
            raise DomainError("session is still in pre-estimation")
        y = int(y)
        if not 0 <= y < len(self.M):
            raise DomainError(f"outcome index {y} outside the POVM")
        axis = self.grid.axes[0]
        z = np.clip(axis + self._u, axis[0], axis[-1])
        like = np.interp(z, axis, self._table[y])
        cand = self._p * np.clip(like, 0.0, None)
        mass = float(trapz_grid(cand, self.grid.axes))
        if mass <= 0.0 or not np.isfinite(mass):
            raise DegeneracyError(
                f"posterior annihilated by outcome {y}; session left unchanged"
            )
        post = cand / mass
        x_hat = self._estimate(post)
        u_used = self._u
        u_next = self._x_opt - x_hat

        self._p = post
        self._u = u_next
        self._round += 1
        self._history.append({"y": y, "x_hat": x_hat, "u": u_used})
        return u_next, x_hat, post.copy()

    def simulate_round(self, x_true: float, rng=None):
        """Draw an outcome at the true parameter and submit it."""
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        p = self.outcome_probabilities(float(x_true))
        y = int(rng.choice(p.size, p=p))
        u_next, x_hat, post = self.submit_outcome(y)
        return y, u_next, x_hat, post

    # ------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        """Dynamic state only; the grid is rebuilt by the caller on resume."""
        return {
            "schema": _SCHEMA,
            "axis": [float(v) for v in self.grid.axes[0]],
            "povm": [[[float(c.real), float(c.imag)] for c in op.reshape(-1)]
                     for op in self.M.ops],
            "estimator": self.estimator,
            "pre_rounds": self.pre_rounds,
            "x_opt": self._x_opt,
            "p": [float(v) for v in self._p],
            "u": self._u,
            "round": self._round,
            "pre_done": self._pre_done,
            "phase": self._phase,
            "history": list(self._history),
        }

    @classmethod
    def from_dict(cls, grid: PriorGrid, data: dict) -> "AdaptiveSession":
        if data.get("schema") != _SCHEMA:
            raise DomainError(f"unknown session schema {data.get('schema')!r}")
        axis = np.asarray(data["axis"], dtype=float)
        if (
            grid.n_params != 1
            or axis.size != grid.axes[0].size
            or not np.allclose(axis, grid.axes[0], atol=1e-12)
        ):
            raise DomainError("session grid does not match the serialized axis")
        d = grid.states[0].dim
        ops = [
            np.array([complex(re, im) for re, im in op], dtype=complex).reshape(d, d)
            for op in data["povm"]
        ]
        session = cls(
            grid, Povm(ops), x_opt=data["x_opt"], estimator=data["estimator"],
            pre_rounds=data["pre_rounds"],
        )
        session._p = np.asarray(data["p"], dtype=float)
        session._u = float(data["u"])
        session._round = int(data["round"])
        session._pre_done = int(data["pre_done"])
        session._phase = str(data["phase"])
        session._history = [dict(row) for row in data["history"]]
        return session
