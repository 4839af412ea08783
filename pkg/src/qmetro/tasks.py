"""Task runners: one function per batch capability, shared by the CLI
and the service.

Every runner takes a validated ScenarioConfig, writes its artifact files
into the output directory, and returns a TaskReport with printable
summary rows.  A manifest (config hash, effective seed, artifact
checksums) is written last so a finished directory is self-describing.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from . import artifacts
from .adaptive import AdaptiveSession
from .bayes import (
    PriorGrid,
    bayes_update,
    gaussian_prior,
    grid_states,
    mle,
    simulate_outcomes,
    uniform_prior,
)
from .config import ScenarioConfig
from .dynamics import DynamicsSpec, lindblad_endpoint
from .engines import AlgoParams, ObjectiveSpec, scalar_objective
from .errors import ConfigError
from .fisher import cfim, qfim
from .holevo import hcrb
from .models import model_grid
from .scenarios import (
    ComprehensiveProblem,
    ControlProblem,
    MeasurementProblem,
    StateProblem,
    comprehensive_opt,
    control_opt,
    measurement_opt,
    mintime,
    state_opt,
)
from .states import QuantumState

__all__ = [
    "TaskReport",
    "run_task",
    "build_prior_grid",
    "build_session",
    "write_session_artifacts",
]


@dataclass(frozen=True)
class TaskReport:
    task: str
    summary: tuple              # (label, value string) rows
    artifacts: tuple            # file names written, relative to directory
    directory: str
    found: bool = True          # False marks a missed search target (mintime)


def _num(v) -> str:
    return f"{float(v):.10g}"


def _probe(cfg: ScenarioConfig) -> QuantumState:
    if cfg.model.rho0 is None:
        raise ConfigError(f"task {cfg.task!r} needs model.psi0 or model.rho0")
    return cfg.model.rho0


def _spec(cfg: ScenarioConfig, controlled: bool = False) -> DynamicsSpec:
    m = cfg.model
    return DynamicsSpec(
        tspan=cfg.tspan,
        H0=m.H0,
        dH=m.dH,
        Hc=m.Hc if controlled else (),
        ctrl=(),
        decay=m.decay,
    )


def _objective(cfg: ScenarioConfig, force_cfim: bool = False) -> ObjectiveSpec:
    """Config objective with the measurement resolved to concrete operators.

    Tasks that search measurements or score classical information need the
    model POVM when the objective section named none; force_cfim switches
    an unspecified kind to CFIM for those tasks.
    """
    obj = cfg.objective
    if force_cfim and "objective" not in cfg.raw:
        obj = dataclasses.replace(obj, kind="CFIM")
    if obj.kind == "CFIM" and obj.M is None:
        obj = dataclasses.replace(obj, M=cfg.povm())
    return obj


def _algo(cfg: ScenarioConfig, default: str, seed) -> AlgoParams:
    algo = cfg.algo if cfg.algo is not None else AlgoParams(default)
    if seed is not None:
        algo = AlgoParams(algo.algorithm, **{**algo.fields, "seed": int(seed)})
    return algo


_GRID_CONSTANTS = {"qubit-phase": ("kappa", "omega0")}


def _model_grid(cfg: ScenarioConfig, axis: np.ndarray):
    name = cfg.model.name
    consts = {
        k: cfg.model.meta[k]
        for k in _GRID_CONSTANTS.get(name, ())
        if k in cfg.model.meta
    }
    try:
        return model_grid(name, (axis,), **consts)
    except ConfigError as exc:
        raise ConfigError(
            f"task {cfg.task!r} needs a model preset with a parameter grid: {exc}"
        ) from exc


def build_prior_grid(cfg: ScenarioConfig) -> PriorGrid:
    """Prior density plus propagated states on the configured axis."""
    popts = cfg.options["prior"]
    lo, hi = popts["range"]
    axis = np.linspace(lo, hi, popts["points"])
    mgrid = _model_grid(cfg, axis)
    states = grid_states(mgrid, _probe(cfg), cfg.tspan, cfg.model.decay)
    if popts["type"] == "gaussian":
        return gaussian_prior(axis, popts["mu"], popts["eta"], states)
    return uniform_prior((axis,), states)


def build_session(cfg: ScenarioConfig) -> AdaptiveSession:
    opts = cfg.options
    grid = build_prior_grid(cfg)
    w = cfg.objective.W.W if cfg.objective.W is not None else None
    return AdaptiveSession(
        grid,
        cfg.povm(),
        W=w,
        x_opt=opts.get("x_opt"),
        estimator=opts.get("estimator", "MAP"),
        pre_rounds=opts.get("pre_rounds", 500),
    )


def write_session_artifacts(session: AdaptiveSession, directory: str,
                            posteriors=None) -> tuple:
    """y/xout/pout files from a session's history; pout holds the final
    posterior unless per-round snapshots are passed in."""
    hist = session.history
    artifacts.write_y(os.path.join(directory, "y.csv"), [h["y"] for h in hist])
    artifacts.write_xout(
        os.path.join(directory, "xout.csv"),
        [h["x_hat"] for h in hist],
        [h["u"] for h in hist],
    )
    artifacts.write_pout(
        os.path.join(directory, "pout.csv"),
        posteriors if posteriors is not None else [session.posterior],
    )
    return ("y.csv", "xout.csv", "pout.csv")


# ------------------------------------------------------------------- tasks

def _run_bounds(cfg, outdir, seed, save_all):
    ds = lindblad_endpoint(_spec(cfg), _probe(cfg))
    n = ds.n_params
    obj = _objective(cfg)
    fval = scalar_objective(ds, obj)
    artifacts.write_f(os.path.join(outdir, "f.csv"), [fval])

    w = obj.weight(n)
    fq = qfim(ds, ld_type=obj.ld_type, eps=obj.eps).entries
    fc = cfim(ds, cfg.povm(), eps=obj.eps).entries
    rows = []
    if n == 1:
        rows.append(("QFI", _num(fq[0, 0])))
        rows.append(("CFI", _num(fc[0, 0])))
        rows.append(("HCRB", _num(1.0 / fq[0, 0])))
    else:
        rows.append(("Tr(W F^-1)", _num(np.trace(w @ np.linalg.pinv(fq)))))
        rows.append(("Tr(W I^-1)", _num(np.trace(w @ np.linalg.pinv(fc)))))
        rows.append(("HCRB", _num(hcrb(ds, obj.W, eps=obj.eps))))
    rows.append(("objective", _num(fval)))
    return rows, ("f.csv",), None, True


def _run_bayes(cfg, outdir, seed, save_all):
    opts = cfg.options
    eff_seed = opts["seed"] if seed is None else int(seed)
    grid = build_prior_grid(cfg)
    m = cfg.povm()

    x_true = float(opts["x_true"])
    tg = _model_grid(cfg, np.array([x_true]))
    true_spec = DynamicsSpec(
        tspan=cfg.tspan, H0=tg.H[0], dH=tuple(tg.dH[0]), decay=cfg.model.decay
    )
    ds_true = lindblad_endpoint(true_spec, _probe(cfg))
    rng = np.random.default_rng(eff_seed)
    y = simulate_outcomes(ds_true, m, int(opts["rounds"]), rng)

    posts, est = bayes_update(grid, m, y, estimator=opts["estimator"], save_all=True)
    _, est_mle = mle(grid, m, y)

    artifacts.write_y(os.path.join(outdir, "y.csv"), y)
    artifacts.write_xout(os.path.join(outdir, "xout.csv"), est[:, 0])
    artifacts.write_pout(
        os.path.join(outdir, "pout.csv"), posts if save_all else [posts[-1]]
    )
    rows = [
        ("x_true", _num(x_true)),
        ("rounds", str(y.size)),
        ("estimate (Bayes)", _num(est[-1, 0])),
        ("estimate (MLE)", _num(est_mle[-1, 0])),
        ("seed", str(eff_seed)),
    ]
    return rows, ("y.csv", "xout.csv", "pout.csv"), eff_seed, True


def _run_copt(cfg, outdir, seed, save_all):
    algo = _algo(cfg, "GRAPE", seed)
    prob = ControlProblem(
        _spec(cfg, controlled=True), _probe(cfg), _objective(cfg),
        cfg.model.ctrl_bound, cfg.options.get("Nc", "full"), cfg.ctrl0,
    )
    res = control_opt(prob, algo, record=save_all)
    artifacts.write_f(os.path.join(outdir, "f.csv"), res.run.best_values)
    blocks = list(res.run.candidates) if save_all else [res.controls]
    artifacts.write_controls(os.path.join(outdir, "controls.csv"), blocks)
    rows = [
        ("algorithm", algo.algorithm),
        ("episodes", str(res.run.episodes)),
        ("best objective", _num(res.value)),
        ("Nc", str(prob.Nc)),
    ]
    return rows, ("f.csv", "controls.csv"), algo.seed, True


def _run_sopt(cfg, outdir, seed, save_all):
    algo = _algo(cfg, "AD", seed)
    psi0 = None
    if cfg.model.rho0 is not None and cfg.model.rho0.is_pure():
        psi0 = cfg.model.rho0.ket()
    prob = StateProblem(_spec(cfg), _objective(cfg), psi0)
    res = state_opt(prob, algo, record=save_all)
    artifacts.write_f(os.path.join(outdir, "f.csv"), res.run.best_values)
    final = res.state.ket() if res.state.is_pure() else _dominant(res.state.rho)
    coeffs = list(res.run.candidates) if save_all else [final]
    artifacts.write_states(os.path.join(outdir, "states.csv"), coeffs)
    rows = [
        ("algorithm", algo.algorithm),
        ("episodes", str(res.run.episodes)),
        ("best objective", _num(res.value)),
    ]
    return rows, ("f.csv", "states.csv"), algo.seed, True


def _dominant(rho: np.ndarray) -> np.ndarray:
    _, u = np.linalg.eigh(rho)
    return np.ascontiguousarray(u[:, -1])


def _run_mopt(cfg, outdir, seed, save_all):
    algo = _algo(cfg, "DE", seed)
    obj = _objective(cfg, force_cfim=True)
    mtype = cfg.options.get("mtype", "projection")
    minput = () if mtype == "projection" and cfg.model.povm is None \
        else tuple(cfg.povm().ops)
    prob = MeasurementProblem(
        _spec(cfg), _probe(cfg), obj, mtype, minput, cfg.options.get("m"),
    )
    res = measurement_opt(prob, algo, record=save_all)
    artifacts.write_f(os.path.join(outdir, "f.csv"), res.run.best_values)
    povms = list(res.run.candidates) if save_all else [res.povm.ops]
    artifacts.write_measurements(os.path.join(outdir, "measurements.csv"), povms)
    rows = [
        ("algorithm", algo.algorithm),
        ("mtype", mtype),
        ("episodes", str(res.run.episodes)),
        ("best objective", _num(res.value)),
        ("outputs", str(len(res.povm))),
    ]
    return rows, ("f.csv", "measurements.csv"), algo.seed, True


def _run_compopt(cfg, outdir, seed, save_all):
    kind = cfg.options["kind"]
    algo = _algo(cfg, "DE" if "M" in kind else "GRAPE", seed)
    obj = _objective(cfg, force_cfim="M" in kind)
    model = cfg.model
    psi0 = None
    if model.rho0 is not None and model.rho0.is_pure():
        psi0 = model.rho0.ket()
    prob = ComprehensiveProblem(
        kind=kind,
        dynamics=_spec(cfg, controlled="C" in kind),
        obj=obj,
        rho0=model.rho0 if kind == "CM" else None,
        psi0=psi0,
        ctrl_bound=model.ctrl_bound,
        Nc=cfg.options.get("Nc", "full"),
        u0=cfg.ctrl0,
        minput=tuple(model.povm.ops) if ("M" in kind and model.povm is not None) else (),
    )
    res = comprehensive_opt(prob, algo, record=save_all)
    artifacts.write_f(os.path.join(outdir, "f.csv"), res.run.best_values)
    written = ["f.csv"]

    cands = res.run.candidates if save_all else None
    if "S" in kind:
        final = res.state.ket() if res.state.is_pure() else _dominant(res.state.rho)
        coeffs = [c[0] for c in cands] if cands else [final]
        artifacts.write_states(os.path.join(outdir, "states.csv"), coeffs)
        written.append("states.csv")
    if "C" in kind:
        blocks = [c[1] for c in cands] if cands else [res.controls]
        artifacts.write_controls(os.path.join(outdir, "controls.csv"), blocks)
        written.append("controls.csv")
    if "M" in kind:
        povms = [c[2].ops for c in cands] if cands else [res.povm.ops]
        artifacts.write_measurements(os.path.join(outdir, "measurements.csv"), povms)
        written.append("measurements.csv")
    rows = [
        ("kind", kind),
        ("algorithm", algo.algorithm),
        ("episodes", str(res.run.episodes)),
        ("best objective", _num(res.value)),
    ]
    return rows, tuple(written), algo.seed, True


def _run_mintime(cfg, outdir, seed, save_all):
    algo = _algo(cfg, "GRAPE", seed)
    prob = ControlProblem(
        _spec(cfg, controlled=True), _probe(cfg), _objective(cfg),
        cfg.model.ctrl_bound, "full", cfg.ctrl0,
    )
    res = mintime(prob, float(cfg.options["target"]), algo,
                  search=cfg.options.get("search", "binary"))
    artifacts.write_f(os.path.join(outdir, "f.csv"), [res.value])
    artifacts.write_controls(os.path.join(outdir, "controls.csv"), [res.controls])
    artifacts.write_mtspan(os.path.join(outdir, "mtspan.csv"), res.tspan)
    rows = [
        ("target", _num(cfg.options["target"])),
        ("reached", "yes" if res.found else "no"),
        ("time", _num(res.time) if res.found else "-"),
        ("best objective", _num(res.value)),
    ]
    return rows, ("f.csv", "controls.csv", "mtspan.csv"), algo.seed, res.found


def _run_adapt(cfg, outdir, seed, save_all, outcomes):
    if outcomes is None:
        raise ConfigError(
            "the adapt task replays a recorded outcome file; pass one "
            "(the live loop runs through `serve`)"
        )
    session = build_session(cfg)
    y = np.asarray(outcomes, dtype=int).reshape(-1)
    posts = []
    for yi in y:
        if session.phase == "pre-estimation":
            session.pre_estimate([int(yi)])
        else:
            session.submit_outcome(int(yi))
        if save_all:
            posts.append(session.posterior)
    files = write_session_artifacts(
        session, outdir, posteriors=posts if save_all else None
    )
    rows = [
        ("rounds", str(session.round)),
        ("phase", session.phase),
        ("x_opt", _num(session.x_opt)),
        ("estimate", _num(session.estimate())),
        ("u next", _num(session.u)),
    ]
    return rows, files, None, True


_RUNNERS = {
    "bounds": _run_bounds,
    "bayes": _run_bayes,
    "copt": _run_copt,
    "sopt": _run_sopt,
    "mopt": _run_mopt,
    "compopt": _run_compopt,
    "mintime": _run_mintime,
}


def run_task(cfg: ScenarioConfig, seed=None, output_dir=None, save_all=None,
             outcomes=None) -> TaskReport:
    """Run the configured task; flags override the config's output section.

    outcomes feeds the adapt task its recorded y sequence.
    """
    outdir = cfg.output_dir if output_dir is None else str(output_dir)
    saving = cfg.save_all if save_all is None else bool(save_all)
    os.makedirs(outdir, exist_ok=True)

    if cfg.task == "adapt":
        rows, files, eff_seed, found = _run_adapt(cfg, outdir, seed, saving, outcomes)
    else:
        rows, files, eff_seed, found = _RUNNERS[cfg.task](cfg, outdir, seed, saving)

    artifacts.write_manifest(outdir, cfg.sha256, eff_seed, files)
    return TaskReport(
        task=cfg.task,
        summary=tuple(rows),
        artifacts=tuple(files) + ("manifest.json",),
        directory=outdir,
        found=found,
    )
