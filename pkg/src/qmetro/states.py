"""Validated domain types shared across the package.

All values are immutable after construction; operations treat them as pure
data, so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .linalg import dagger
from .operators import operator_basis

__all__ = [
    "HermitianOperator",
    "QuantumState",
    "DerivedState",
    "Povm",
    "OperatorBasis",
    "as_operator",
    "ket_state",
]


def _as_square(entries, name: str):
    a = np.array(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HermitianOperator:
    """A dim x dim Hermitian matrix (Hamiltonians, collapse operators, observables)."""

    entries: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        a = _as_square(self.entries, "HermitianOperator.entries")
        if np.max(np.abs(a - dagger(a))) > 1e-12:
            raise DomainError("operator is not Hermitian within 1e-12")
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "dim", a.shape[0])


def as_operator(m) -> np.ndarray:
    """Accept a HermitianOperator or a bare matrix; return the ndarray."""
    if isinstance(m, HermitianOperator):
        return m.entries
    return np.asarray(m, dtype=complex)


@dataclass(frozen=True)
class QuantumState:
    """Density matrix: Hermitian, unit trace, PSD up to a -1e-10 eigenvalue slack.

    The slack exists because matrix-exponential propagation can leave
    eigenvalues a hair below zero; values are validated, never clamped.
    """

    rho: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        a = _as_square(self.rho, "QuantumState.rho")
        if np.max(np.abs(a - dagger(a))) > 1e-10:
            raise DomainError("density matrix is not Hermitian within 1e-10")
        tr = np.trace(a).real
        if abs(tr - 1.0) > 1e-8:
            raise DomainError(f"density matrix trace {tr!r} differs from 1 beyond 1e-8")
        wmin = float(np.min(np.linalg.eigvalsh(a)))
        if wmin < -1e-10:
            raise DomainError(f"density matrix has eigenvalue {wmin} < -1e-10")
        object.__setattr__(self, "rho", a)
        object.__setattr__(self, "dim", a.shape[0])

    def purity(self) -> float:
        return float(np.trace(self.rho @ self.rho).real)

    def is_pure(self, tol: float = 1e-9) -> bool:
        return abs(self.purity() - 1.0) <= tol

    def ket(self, tol: float = 1e-9) -> np.ndarray:
        """Coefficient vector of a pure state (largest component made real)."""
        if not self.is_pure(tol):
            raise DomainError("state is mixed; no ket representation")
        _, u = np.linalg.eigh(self.rho)
        v = u[:, -1]
        k = int(np.argmax(np.abs(v)))
        return np.ascontiguousarray(v * (abs(v[k]) / v[k]))


def ket_state(psi) -> QuantumState:
    """Normalize a ket and return the corresponding pure density matrix."""
    v = np.asarray(psi, dtype=complex).reshape(-1)
    n = np.linalg.norm(v)
    if n == 0:
        raise DomainError("zero vector cannot be normalized to a state")
    v = v / n
    return QuantumState(np.outer(v, v.conj()))


@dataclass(frozen=True)
class DerivedState:
    """An evolved state together with its parameter derivatives (one per unknown)."""

    state: QuantumState
    derivs: tuple

    def __init__(self, state: QuantumState, derivs):
        if not isinstance(state, QuantumState):
            state = QuantumState(np.asarray(state, dtype=complex))
        ds = []
        for i, d in enumerate(derivs):
            a = _as_square(d, f"DerivedState.derivs[{i}]")
            if a.shape[0] != state.dim:
                raise DimensionError("derivative dimension differs from the state")
            if np.max(np.abs(a - dagger(a))) > 1e-10:
                raise DomainError(f"derivative {i} is not Hermitian within 1e-10")
            if abs(np.trace(a)) > 1e-8:
                raise DomainError(f"derivative {i} is not traceless within 1e-8")
            ds.append(a)
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "derivs", tuple(ds))

    @property
    def n_params(self) -> int:
        return len(self.derivs)

    @property
    def dim(self) -> int:
        return self.state.dim


@dataclass(frozen=True)
class Povm:
    """Measurement: PSD elements summing to the identity."""

    ops: tuple
    dim: int = field(init=False)

    def __init__(self, ops):
        mats = []
        dim = None
        for i, op in enumerate(ops):
            a = _as_square(op, f"Povm.ops[{i}]")
            if dim is None:
                dim = a.shape[0]
            elif a.shape[0] != dim:
                raise DimensionError("POVM elements have mixed dimensions")
            if np.max(np.abs(a - dagger(a))) > 1e-10:
                raise DomainError(f"POVM element {i} is not Hermitian")
            if float(np.min(np.linalg.eigvalsh(a))) < -1e-10:
                raise DomainError(f"POVM element {i} is not PSD within 1e-10")
            mats.append(a)
        if dim is None:
            raise DomainError("POVM needs at least one element")
        total = sum(mats)
        if np.max(np.abs(total - np.eye(dim))) > 1e-8:
            raise DomainError("POVM elements do not sum to the identity within 1e-8")
        object.__setattr__(self, "ops", tuple(mats))
        object.__setattr__(self, "dim", dim)

    def __len__(self) -> int:
        return len(self.ops)

    def probabilities(self, rho) -> np.ndarray:
        r = rho.rho if isinstance(rho, QuantumState) else np.asarray(rho, dtype=complex)
        return np.array([float(np.trace(op @ r).real) for op in self.ops])


@dataclass(frozen=True)
class OperatorBasis:
    """d^2 Hermitian matrices orthonormal under Tr(b_i b_j) = δij.

    Element 0 is I/sqrt(d), the remainder are scaled su(d) generators.  This
    normalization is distinct from su_generators' Tr = 2 δij; the two sets
    are never mixed.
    """

    dim: int
    elems: tuple = field(init=False)

    def __post_init__(self):
        elems = tuple(operator_basis(self.dim))
        for e in elems:
            e.setflags(write=False)
        object.__setattr__(self, "elems", elems)

    def __len__(self) -> int:
        return len(self.elems)

    def expand(self, a) -> np.ndarray:
        """Real coefficients c_i = Tr(b_i A) for Hermitian A."""
        a = np.asarray(a, dtype=complex)
        return np.array([np.trace(b @ a).real for b in self.elems])
