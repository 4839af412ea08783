"""Declarative scenario configuration.

A config is a single TOML document (or the equivalent JSON object over
the service API) with sections model / dynamics / objective / algorithm /
task / output and a top-level `schema = 1`.  Complex matrix entries are
written as [re, im] pairs; plain numbers are read as real entries.
Unknown keys anywhere are rejected with their dotted path, so typos
cannot silently change an experiment.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import tomli

from .engines import AlgoParams, ObjectiveSpec
from .errors import ConfigError
from .fisher import WeightMatrix
from .models import Model, preset
from .states import Povm, QuantumState, ket_state

__all__ = ["ScenarioConfig", "load_config", "parse_config", "config_hash"]

CONFIG_SCHEMA = 1

_TASKS = ("bounds", "bayes", "copt", "sopt", "mopt", "compopt", "mintime", "adapt")


class _Section:
    """One config table: typed key extraction plus leftover rejection."""

    def __init__(self, table, path: str):
        if not isinstance(table, dict):
            raise ConfigError(f"{path} must be a table")
        self._t = dict(table)
        self._path = path

    def take(self, key: str, parse, default=None, required: bool = False):
        if key not in self._t:
            if required:
                raise ConfigError(f"{self._path}.{key} is required")
            return default
        raw = self._t.pop(key)
        try:
            return parse(raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"{self._path}.{key}: {exc}") from exc

    def subtable(self, key: str, required: bool = False):
        if key not in self._t:
            if required:
                raise ConfigError(f"{self._path}.{key} is required")
            return None
        raw = self._t.pop(key)
        return _Section(raw, f"{self._path}.{key}")

    def remainder(self) -> dict:
        out, self._t = self._t, {}
        return out

    def finish(self):
        if self._t:
            key = sorted(self._t)[0]
            raise ConfigError(f"unknown key {self._path}.{key}")


def _float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _str(v) -> str:
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _entry(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex entry needs [re, im], got {v!r}")
        return complex(_float(v[0]), _float(v[1]))
    return complex(_float(v), 0.0)


def _cmatrix(v) -> np.ndarray:
    rows = [[_entry(e) for e in row] for row in v]
    mat = np.array(rows, dtype=complex)
    if mat.ndim != 2:
        raise ValueError("matrix must be a list of rows")
    return mat


def _cmatrix_list(v) -> tuple:
    return tuple(_cmatrix(m) for m in v)


def _cvector(v) -> np.ndarray:
    return np.array([_entry(e) for e in v], dtype=complex)


def _rmatrix(v) -> np.ndarray:
    return np.array([[_float(e) for e in row] for row in v], dtype=float)


def _pair(v) -> tuple:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError(f"expected [lo, hi], got {v!r}")
    return (_float(v[0]), _float(v[1]))


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, resolved configuration for one task run."""

    model: Model
    tspan: object
    objective: ObjectiveSpec
    algo: object                 # AlgoParams or None
    task: str
    options: dict                # task-specific keys (including "prior")
    ctrl0: object = None
    output_dir: str = "out"
    save_all: bool = False
    sha256: str = ""
    raw: dict = field(default_factory=dict)
    m_choice: str = "model"      # "model" | "sic" | "explicit"

    def povm(self) -> Povm:
        """The measurement this config performs (objective M resolution)."""
        m = self.objective.M
        if m is not None:
            return m if isinstance(m, Povm) else Povm(m)
        if self.m_choice != "sic" and self.model.povm is not None:
            return self.model.povm
        from .operators import sic_povm

        return Povm(sic_povm(self.model.dim))


def _build_model(sec: _Section) -> Model:
    name = sec.take("preset", _str)
    if name is not None:
        constants = sec.remainder()
        try:
            return preset(name, **constants)
        except ConfigError as exc:
            raise ConfigError(f"model: {exc}") from exc
    h0 = sec.take("H0", _cmatrix, required=True)
    dh = sec.take("dH", _cmatrix_list, required=True)
    psi0 = sec.take("psi0", _cvector)
    rho0 = sec.take("rho0", _cmatrix)
    if psi0 is not None and rho0 is not None:
        raise ConfigError("model.psi0 and model.rho0 are mutually exclusive")
    state = None
    if psi0 is not None:
        state = ket_state(psi0)
    elif rho0 is not None:
        state = QuantumState(rho0)
    hc = sec.take("Hc", _cmatrix_list, default=())
    povm = sec.take("povm", _cmatrix_list)
    decay_raw = sec.take("decay", lambda v: list(v), default=[])
    decay = []
    for i, item in enumerate(decay_raw):
        dsec = _Section(item, f"model.decay[{i}]")
        op = dsec.take("op", _cmatrix, required=True)
        rate = dsec.take("rate", _float, required=True)
        dsec.finish()
        decay.append((op, rate))
    bound = sec.take("ctrl_bound", _pair)
    sec.finish()
    try:
        return Model(
            name="inline", H0=h0, dH=dh, rho0=state, Hc=hc,
            decay=tuple(decay), povm=Povm(povm) if povm is not None else None,
            ctrl_bound=bound,
        )
    except Exception as exc:
        raise ConfigError(f"model: {exc}") from exc


def _build_tspan(sec: _Section):
    points = sec.take("points", lambda v: np.array([_float(x) for x in v]))
    t0 = sec.take("t0", _float, default=0.0)
    t1 = sec.take("t1", _float)
    steps = sec.take("steps", _int)
    if points is not None:
        if np.any(np.diff(points) <= 0):
            raise ConfigError("dynamics.points must be strictly increasing")
        return points
    if t1 is None or steps is None:
        raise ConfigError("dynamics needs either points or t1 + steps")
    if not t1 > t0:
        raise ConfigError("dynamics.t1 must exceed dynamics.t0")
    if steps < 1:
        raise ConfigError("dynamics.steps must be >= 1")
    return np.linspace(t0, t1, steps + 1)


def _build_objective(sec: _Section):
    kind = sec.take("kind", _str, default="QFIM")
    w = sec.take("W", _rmatrix)
    ld = sec.take("ld_type", _str, default="SLD")
    eps = sec.take("eps", _float, default=1e-8)
    m_raw = sec.take("M", lambda v: v)
    sec.finish()
    if w is not None:
        try:
            w = WeightMatrix(w)
        except Exception as exc:
            raise ConfigError(f"objective.W: {exc}") from exc
    m = None
    if isinstance(m_raw, str):
        if m_raw not in ("model", "sic"):
            raise ConfigError(f"objective.M: unknown choice {m_raw!r}")
        m = None   # resolved later through ScenarioConfig.povm
    elif m_raw is not None:
        try:
            m = Povm(_cmatrix_list(m_raw))
        except Exception as exc:
            raise ConfigError(f"objective.M: {exc}") from exc
    try:
        return ObjectiveSpec(kind=kind, W=w, M=m, ld_type=ld, eps=eps), m_raw
    except Exception as exc:
        raise ConfigError(f"objective.kind: {exc}") from exc


def _build_prior(sec: _Section) -> dict:
    kind = sec.take("type", _str, default="uniform")
    if kind not in ("uniform", "gaussian"):
        raise ConfigError(f"task.prior.type: unknown type {kind!r}")
    rng = sec.take("range", _pair, required=True)
    pts = sec.take("points", _int, required=True)
    if pts < 2:
        raise ConfigError("task.prior.points must be >= 2")
    if not rng[1] > rng[0]:
        raise ConfigError("task.prior.range must be increasing")
    out = {"type": kind, "range": rng, "points": pts}
    if kind == "gaussian":
        out["mu"] = sec.take("mu", _float, required=True)
        out["eta"] = sec.take("eta", _float, required=True)
    sec.finish()
    return out


def _build_task(sec: _Section) -> tuple:
    name = sec.take("name", _str, required=True)
    if name not in _TASKS:
        raise ConfigError(f"task.name: unknown task {name!r}; known: {list(_TASKS)}")
    opts: dict = {}
    if name == "bayes":
        opts["x_true"] = sec.take("x_true", _float, required=True)
        opts["rounds"] = sec.take("rounds", _int, required=True)
        opts["estimator"] = sec.take("estimator", _str, default="MAP")
        opts["seed"] = sec.take("seed", _int, default=0)
        opts["prior"] = _build_prior(sec.subtable("prior", required=True))
    elif name == "adapt":
        opts["pre_rounds"] = sec.take("pre_rounds", _int, default=500)
        opts["estimator"] = sec.take("estimator", _str, default="MAP")
        opts["x_opt"] = sec.take("x_opt", _float)
        opts["seed"] = sec.take("seed", _int, default=0)
        opts["prior"] = _build_prior(sec.subtable("prior", required=True))
    elif name == "copt":
        opts["Nc"] = sec.take("Nc", lambda v: v if v == "full" else _int(v), default="full")
    elif name == "mopt":
        opts["mtype"] = sec.take("mtype", _str, default="projection")
        opts["m"] = sec.take("m", _int)
    elif name == "compopt":
        opts["kind"] = sec.take("kind", _str, required=True)
        opts["Nc"] = sec.take("Nc", lambda v: v if v == "full" else _int(v), default="full")
    elif name == "mintime":
        opts["target"] = sec.take("target", _float, required=True)
        opts["search"] = sec.take("search", _str, default="binary")
    if name in ("bayes", "adapt") and opts["estimator"] not in ("MAP", "mean"):
        raise ConfigError(f"task.estimator: unknown estimator {opts['estimator']!r}")
    sec.finish()
    return name, opts


def parse_config(doc: dict, sha256: str = "") -> ScenarioConfig:
    root = _Section(doc, "config")
    schema = root.take("schema", _int, required=True)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"config.schema: expected {CONFIG_SCHEMA}, got {schema}")

    model = _build_model(root.subtable("model", required=True))

    dyn = root.subtable("dynamics", required=True)
    tspan = _build_tspan(dyn)
    ctrl0 = dyn.take("ctrl0", _rmatrix)
    bound = dyn.take("ctrl_bound", _pair)
    dyn.finish()
    if bound is not None:
        model = Model(
            name=model.name, H0=model.H0, dH=model.dH, rho0=model.rho0,
            Hc=model.Hc, decay=model.decay, povm=model.povm,
            ctrl_bound=bound, meta=model.meta,
        )

    obj_sec = root.subtable("objective")
    m_raw = None
    if obj_sec is not None:
        objective, m_raw = _build_objective(obj_sec)
    else:
        objective = ObjectiveSpec()
    m_choice = m_raw if isinstance(m_raw, str) else \
        ("explicit" if m_raw is not None else "model")

    algo_sec = root.subtable("algorithm")
    algo = None
    if algo_sec is not None:
        name = algo_sec.take("name", _str, required=True)
        fields = algo_sec.remainder()
        try:
            algo = AlgoParams(name, **fields)
        except ConfigError as exc:
            raise ConfigError(f"algorithm: {exc}") from exc

    task, opts = _build_task(root.subtable("task", required=True))

    out_sec = root.subtable("output")
    output_dir, save_all = "out", False
    if out_sec is not None:
        output_dir = out_sec.take("directory", _str, default="out")
        save_all = out_sec.take("save_all", _bool, default=False)
        out_sec.finish()

    root.finish()
    return ScenarioConfig(
        model=model, tspan=tspan, objective=objective, algo=algo,
        task=task, options=opts, ctrl0=ctrl0,
        output_dir=output_dir, save_all=save_all, sha256=sha256, raw=doc,
        m_choice=m_choice,
    )


def config_hash(doc: dict) -> str:
    """Canonical hash for configs that did not arrive as a file."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config(path: str) -> ScenarioConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        doc = tomli.loads(data.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, sha256=hashlib.sha256(data).hexdigest())
