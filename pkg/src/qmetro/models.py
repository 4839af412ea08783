"""Bundled physical models and parameter-grid evaluation.

Presets cover a dissipative qubit frequency standard, a qubit with an
x-dependent rotation axis for Bayesian work, two coupled qubits with an XX
interaction, an electron-nuclear spin system (NV-center style), and the
Lipkin-Meshkov-Glick collective spin model.  Constants follow the usual
literature values; rewrite any field through keyword overrides.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError, DimensionError, DomainError
from .linalg import expm
from .operators import (
    paulis,
    sigma_minus,
    sigma_plus,
    spin_operators,
)
from .states import Povm, QuantumState, ket_state

__all__ = [
    "Model",
    "ModelGrid",
    "preset",
    "model_grid",
    "coherent_spin_state",
]

_sx, _sy, _sz = paulis()


@dataclass(frozen=True)
class Model:
    """A ready-to-propagate scenario: Hamiltonian pieces plus probe and POVM."""

    name: str
    H0: np.ndarray
    dH: tuple
    rho0: QuantumState
    Hc: tuple = ()
    decay: tuple = ()
    povm: object = None
    ctrl_bound: object = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.H0.shape[0]


def _plus() -> QuantumState:
    return ket_state([1.0, 1.0])


def _qubit_frequency(omega=1.0, gamma_plus=0.0, gamma_minus=0.1, with_controls=False):
    h0 = 0.5 * omega * _sz
    decay = ((sigma_plus, gamma_plus), (sigma_minus, gamma_minus))
    hc = (_sx, _sy, _sz) if with_controls else ()
    proj = Povm([np.outer(v, v.conj()) for v in (np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2))])
    return Model(
        name="qubit-frequency",
        H0=h0,
        dH=(0.5 * _sz,),
        rho0=_plus(),
        Hc=hc,
        decay=decay,
        povm=proj,
        meta={"omega": omega},
    )


def _qubit_phase_h(x, kappa=1.0, omega0=1.0):
    c = 0.5 * kappa * omega0
    return c * (_sx * np.cos(x) + _sz * np.sin(x))


def _qubit_phase_dh(x, kappa=1.0, omega0=1.0):
    c = 0.5 * kappa * omega0
    return c * (-_sx * np.sin(x) + _sz * np.cos(x))


def _qubit_phase(x=0.0, kappa=1.0, omega0=1.0):
    proj = Povm([np.outer(v, v.conj()) for v in (np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2))])
    return Model(
        name="qubit-phase",
        H0=_qubit_phase_h(x, kappa, omega0),
        dH=(_qubit_phase_dh(x, kappa, omega0),),
        rho0=_plus(),
        povm=proj,
        meta={"kappa": kappa, "omega0": omega0, "x": x},
    )


def _two_qubit_xx(omega1=1.0, omega2=1.0, g=0.1, gamma1=0.05, gamma2=0.05):
    eye = np.eye(2)
    h0 = (
        omega1 * np.kron(_sz, eye)
        + omega2 * np.kron(eye, _sz)
        + g * np.kron(_sx, _sx)
    )
    dh = (np.kron(eye, _sz), np.kron(_sx, _sx))   # estimate (omega2, g)
    bell = ket_state([1, 0, 0, 1])
    decay = ((np.kron(_sz, eye), gamma1), (np.kron(eye, _sz), gamma2))
    v00 = np.zeros(4)
    v00[0] = 1.0
    vpp = np.ones(4) / 2.0
    p1 = 0.85 * np.outer(v00, v00)
    p2 = 0.1 * np.outer(vpp, vpp)
    povm = Povm([p1, p2, np.eye(4) - p1 - p2])
    return Model(
        name="two-qubit-xx",
        H0=h0,
        dH=dh,
        rho0=bell,
        decay=decay,
        povm=povm,
        meta={"omega1": omega1, "omega2": omega2, "g": g},
    )


def _nv_center(B=(0.5, 0.5, 0.5), gamma=2 * np.pi):
    """Electron (spin 1) + nucleus (spin 1/2); units rad/us with B in mT."""
    D = 2 * np.pi * 2870.0
    gS = 2 * np.pi * 28.03       # per mT
    gI = 2 * np.pi * 4.32e-3     # per mT
    A1 = 2 * np.pi * 3.65
    A2 = 2 * np.pi * 3.03

    s1 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / np.sqrt(2)
    s2 = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / np.sqrt(2)
    s3 = np.diag([1.0, 0.0, -1.0]).astype(complex)
    eye2 = np.eye(2)
    eye3 = np.eye(3)
    S = [np.kron(s, eye2) for s in (s1, s2, s3)]
    I = [np.kron(eye3, p) for p in paulis()]

    h0 = D * (S[2] @ S[2])
    for i in range(3):
        h0 = h0 + gS * B[i] * S[i] + gI * B[i] * I[i]
    h0 = h0 + A1 * (S[0] @ I[0] + S[1] @ I[1]) + A2 * (S[2] @ I[2])
    dh = tuple(gS * S[i] + gI * I[i] for i in range(3))   # d/dB_i

    up = np.array([1.0, 0.0])
    elec = np.zeros(3)
    elec[0] = elec[2] = 1.0 / np.sqrt(2)   # (|1> + |-1>)/sqrt(2) in s3 basis
    probe = ket_state(np.kron(elec, up))
    return Model(
        name="nv-center",
        H0=h0,
        dH=dh,
        rho0=probe,
        Hc=tuple(S),
        decay=((S[2], gamma),),
        ctrl_bound=(-2 * np.pi * 20.0, 2 * np.pi * 20.0),
        meta={"B": tuple(B)},
    )


def coherent_spin_state(j: float, theta: float, phi: float) -> QuantumState:
    """|theta, phi> = exp(-(theta/2)e^{-i phi} J+ + (theta/2)e^{i phi} J-) |J, J>."""
    jx, jy, jz = spin_operators(j)
    jp = jx + 1j * jy
    jm = jx - 1j * jy
    dim = jz.shape[0]
    top = np.zeros(dim, dtype=complex)
    top[0] = 1.0   # m = +J is the first basis vector
    g = -(theta / 2) * np.exp(-1j * phi) * jp + (theta / 2) * np.exp(1j * phi) * jm
    return ket_state(expm(g) @ top)


def _lmg(N=8, lam=1.0, g=0.5, h=0.1, gamma=0.1, theta=np.pi / 2, phi=np.pi / 2):
    j = N / 2.0
    jx, jy, jz = spin_operators(j)
    h0 = -(lam / N) * (jx @ jx + g * (jy @ jy)) - h * jz
    dh = (-(lam / N) * (jy @ jy), -jz.astype(complex))   # d/dg, d/dh
    return Model(
        name="lmg",
        H0=h0,
        dH=dh,
        rho0=coherent_spin_state(j, theta, phi),
        decay=((jz, gamma),),
        meta={"N": N, "lambda": lam, "g": g, "h": h},
    )


_PRESETS = {
    "qubit-frequency": _qubit_frequency,
    "qubit-phase": _qubit_phase,
    "two-qubit-xx": _two_qubit_xx,
    "nv-center": _nv_center,
    "lmg": _lmg,
}


def preset(name: str, **overrides) -> Model:
    """Build a bundled model by name; keyword arguments override its constants."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown model preset {name!r}; known: {sorted(_PRESETS)}") from None
    try:
        return factory(**overrides)
    except TypeError as exc:
        raise ConfigError(f"bad constants for preset {name!r}: {exc}") from None


def _grid_cells(items, shape) -> np.ndarray:
    """Coerce nested/flat cell sequences into an object array of `shape`.

    asarray would merge same-shape matrices into one numeric block, so the
    cells are placed one by one.
    """
    out = np.empty(shape, dtype=object)
    if isinstance(items, np.ndarray) and items.dtype == object:
        if items.shape == shape:
            src = items
        elif items.size == out.size:
            src = items.reshape(shape)
        else:
            raise DimensionError(
                f"grid arrays must have shape {shape} (outer product of axis lengths)"
            )
        for idx in np.ndindex(shape):
            out[idx] = src[idx]
        return out
    flat = _flatten_cells(items, len(shape))
    if len(flat) != out.size:
        raise DimensionError(
            f"grid arrays must have shape {shape} (outer product of axis lengths)"
        )
    for cell, idx in zip(flat, np.ndindex(shape)):
        out[idx] = cell
    return out


def _flatten_cells(items, depth: int) -> list:
    seq = list(items)
    if depth <= 1 or not seq:
        return seq
    if isinstance(seq[0], (list, tuple)) or (
        isinstance(seq[0], np.ndarray) and seq[0].dtype == object
    ):
        flat: list = []
        for sub in seq:
            flat.extend(_flatten_cells(sub, depth - 1))
        return flat
    return seq   # already flat, C order


@dataclass(frozen=True)
class ModelGrid:
    """H(x) and dH(x) tabulated over the outer product of 1-D parameter axes."""

    axes: tuple
    H: np.ndarray
    dH: np.ndarray

    def __init__(self, axes, H, dH):
        axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in axes)
        if not axes:
            raise DomainError("ModelGrid needs at least one axis")
        shape = tuple(a.size for a in axes)
        h = np.empty(shape, dtype=object)
        dh = np.empty(shape, dtype=object)
        ha = _grid_cells(H, shape)
        dha = _grid_cells(dH, shape)
        for idx in np.ndindex(shape):
            h[idx] = np.asarray(ha[idx], dtype=complex)
            dh[idx] = [np.asarray(m, dtype=complex) for m in dha[idx]]
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "dH", dh)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def n_params(self) -> int:
        return len(self.axes)

    def points(self):
        """Iterate (index tuple, parameter vector)."""
        for idx in np.ndindex(self.shape):
            yield idx, np.array([a[i] for a, i in zip(self.axes, idx)])


_GRID_TEMPLATES = {
    "qubit-phase": (_qubit_phase_h, _qubit_phase_dh),
    "qubit-frequency": (
        lambda x: 0.5 * x * _sz,
        lambda x: 0.5 * _sz,
    ),
}


def model_grid(template, axes, **constants) -> ModelGrid:
    """Tabulate a named single-parameter family over the given axes.

    template is a known id, or a pair (H_list, dH_list) of pre-tabulated
    arrays matching the grid shape.
    """
    if isinstance(template, tuple) and len(template) == 2 and not isinstance(template[0], str):
        return ModelGrid(axes, template[0], [[m] for m in template[1]] if _flat(template[1]) else template[1])
    if template not in _GRID_TEMPLATES:
        raise ConfigError(
            f"unknown grid template {template!r}; known: {sorted(_GRID_TEMPLATES)}"
        )
    hf, dhf = _GRID_TEMPLATES[template]
    axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in axes)
    if len(axes) != 1:
        raise ConfigError(f"template {template!r} is single-parameter, got {len(axes)} axes")
    hs = np.empty(axes[0].size, dtype=object)
    dhs = np.empty(axes[0].size, dtype=object)
    for i, x in enumerate(axes[0]):
        hs[i] = hf(x, **constants)
        dhs[i] = [dhf(x, **constants)]
    return ModelGrid(axes, hs, dhs)


def _flat(seq) -> bool:
    first = seq[0]
    return isinstance(first, np.ndarray) and first.ndim == 2
