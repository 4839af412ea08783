"""Short-grid sanity run of the electron-nuclear spin preset.

The full magnetometry sweeps are expensive; this keeps the 6-dim model
honest on a reduced time grid: physical trajectory, finite bounds.
"""

import numpy as np
import pytest

from qmetro.dynamics import DynamicsSpec, lindblad_propagate
from qmetro.fisher import cfim, qfim
from qmetro.models import preset
from qmetro.operators import sic_povm
from qmetro.states import Povm


@pytest.fixture(scope="module")
def endpoint():
    m = preset("nv-center")
    tspan = np.linspace(0.0, 0.01, 21)
    spec = DynamicsSpec(tspan=tspan, H0=m.H0, dH=m.dH, decay=m.decay)
    traj = lindblad_propagate(spec, m.rho0)
    return m, traj


def test_trajectory_stays_physical(endpoint):
    _, traj = endpoint
    for ds in traj:
        rho = ds.state.rho
        assert float(np.trace(rho).real) == pytest.approx(1.0, abs=1e-8)
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-9
        assert np.min(np.linalg.eigvalsh(rho)) > -1e-9


def test_field_qfim_is_finite_and_psd(endpoint):
    _, traj = endpoint
    f = qfim(traj[-1]).entries
    assert f.shape == (3, 3)
    assert np.all(np.isfinite(f))
    assert np.min(np.linalg.eigvalsh(f)) >= -1e-8
    assert np.trace(f) > 0.0


def test_sic_cfim_dominated_and_bound_finite(endpoint):
    _, traj = endpoint
    ds = traj[-1]
    fq = qfim(ds).entries
    fc = cfim(ds, Povm(sic_povm(6))).entries
    assert np.all(np.isfinite(fc))
    assert np.min(np.linalg.eigvalsh(fq - fc)) >= -1e-7
    # scalar bound at the endpoint exists (weighted trace of the inverse)
    cost = float(np.trace(np.linalg.pinv(fq)))
    assert np.isfinite(cost) and cost > 0.0
