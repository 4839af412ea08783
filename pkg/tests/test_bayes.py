"""Bayesian estimation tests.

The synthetic family rho(x) = diag(x, 1-x) with the computational-basis
measurement gives hand-computable posteriors: after observing y=0 once on
a uniform [0,1] prior the posterior is 2x, with mean 2/3 and MAP at 1.
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from qmetro.bayes import (
    PriorGrid,
    avg_cfim,
    avg_qfim,
    bayes_cost,
    bayes_update,
    bcb,
    bcrb,
    bqcrb,
    gaussian_prior,
    grid_states,
    mle,
    qvtb,
    qzzb,
    simulate_outcomes,
    trapz_grid,
    uniform_prior,
    vtb,
)
from qmetro.dynamics import DynamicsSpec, lindblad_endpoint
from qmetro.errors import DegeneracyError, DomainError
from qmetro.fisher import cfim, qfim
from qmetro.models import model_grid
from qmetro.states import DerivedState, Povm, QuantumState, ket_state

Z_POVM = Povm([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])


def _linear_family(points=201):
    """rho(x) = diag(x, 1-x) on [0,1]; derivative diag(1, -1)."""
    axis = np.linspace(0.0, 1.0, points)
    states = np.empty(points, dtype=object)
    d1 = np.diag([1.0, -1.0]).astype(complex)
    for i, x in enumerate(axis):
        states[i] = DerivedState(QuantumState(np.diag([x, 1 - x]).astype(complex)), [d1])
    return uniform_prior((axis,), states)


def _constant_family(points=201):
    axis = np.linspace(0.0, 1.0, points)
    states = np.empty(points, dtype=object)
    rho = ket_state([1, 1])
    for i in range(points):
        states[i] = DerivedState(rho, [np.zeros((2, 2), dtype=complex)])
    return uniform_prior((axis,), states)


def test_trapz_grid_matches_scipy():
    axis = np.linspace(0, 2, 37)
    f = np.sin(axis)
    assert trapz_grid(f, (axis,)) == pytest.approx(trapezoid(f, x=axis))
    ax2 = np.linspace(0, 1, 11)
    g = np.outer(np.sin(axis), ax2**2)
    ref = trapezoid(trapezoid(g, x=ax2, axis=1), x=axis)
    assert trapz_grid(g, (axis, ax2)) == pytest.approx(ref)


def test_uniform_prior_normalized():
    grid = uniform_prior((np.linspace(0, 2, 51),))
    assert trapz_grid(grid.p, grid.axes) == pytest.approx(1.0)
    assert np.allclose(grid.dp, 0.0)


def test_gaussian_prior_normalized_with_score():
    axis = np.linspace(-1.5, 1.5, 301)
    grid = gaussian_prior(axis, mu=0.2, eta=0.3)
    assert trapz_grid(grid.p, grid.axes) == pytest.approx(1.0, abs=1e-12)
    # analytic score: dp/dx = -(x-mu)/eta^2 p (finite differences are O(h^2))
    fd = np.gradient(grid.p, axis)
    assert np.max(np.abs(grid.dp[0][5:-5] - fd[5:-5])) < 5e-3


def test_prior_grid_rejects_bad_mass():
    axis = np.linspace(0, 1, 11)
    with pytest.raises(DomainError):
        PriorGrid((axis,), np.full(11, 3.0))


def test_single_round_posterior_hand_values():
    grid = _linear_family()
    post, est = bayes_update(grid, Z_POVM, [0], estimator="mean")
    assert trapz_grid(post, grid.axes) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(post - 2.0 * grid.axes[0])) < 1e-9
    assert est[0, 0] == pytest.approx(2 / 3, abs=1e-4)
    _, est_map = bayes_update(grid, Z_POVM, [0], estimator="MAP")
    assert est_map[0, 0] == pytest.approx(1.0)


def test_posterior_stays_normalized_each_round(rng):
    grid = _linear_family()
    ys = rng.integers(0, 2, 60)
    saved, _ = bayes_update(grid, Z_POVM, ys, save_all=True)
    assert len(saved) == 60
    for post in saved:
        assert trapz_grid(post, grid.axes) == pytest.approx(1.0, abs=1e-8)


def test_map_equals_mle_under_uniform_prior(rng):
    grid = _linear_family()
    ys = rng.integers(0, 2, 40)
    _, est_map = bayes_update(grid, Z_POVM, ys, estimator="MAP")
    _, est_mle = mle(grid, Z_POVM, ys)
    assert np.allclose(est_map, est_mle)


def test_degenerate_update_raises():
    # point mass incompatible with the observed outcome
    axis = np.linspace(0.0, 1.0, 11)
    states = np.empty(11, dtype=object)
    for i in range(11):
        states[i] = DerivedState(
            QuantumState(np.diag([0.0, 1.0]).astype(complex)), [np.zeros((2, 2), complex)]
        )
    grid = uniform_prior((axis,), states)
    with pytest.raises(DegeneracyError):
        bayes_update(grid, Z_POVM, [0])


def test_simulate_outcomes_seeded_and_distributed():
    state = QuantumState(np.diag([0.8, 0.2]).astype(complex))
    a = simulate_outcomes(state, Z_POVM, 500, rng=123)
    b = simulate_outcomes(state, Z_POVM, 500, rng=123)
    assert np.array_equal(a, b)
    assert np.mean(a == 0) == pytest.approx(0.8, abs=0.05)


def test_grid_states_match_direct_propagation():
    axis = np.linspace(0.1, 1.2, 4)
    mg = model_grid("qubit-phase", (axis,))
    tspan = np.linspace(0.0, 1.0, 60)
    rho0 = ket_state([1, 1])
    states = grid_states(mg, rho0, tspan)
    for i in range(axis.size):
        spec = DynamicsSpec(tspan=tspan, H0=mg.H[i], dH=tuple(mg.dH[i]))
        ref = lindblad_endpoint(spec, rho0)
        assert np.allclose(states[i].state.rho, ref.state.rho, atol=1e-12)
        assert np.allclose(states[i].derivs[0], ref.derivs[0], atol=1e-12)


def test_bayes_cost_and_bcb_ordering():
    grid = _linear_family()
    # one-shot optimal estimator: posterior mean per outcome, E[x|0]=2/3, E[x|1]=1/3
    xest = np.array([[2 / 3], [1 / 3]])
    cost = bayes_cost(grid, xest, Z_POVM)
    bound = bcb(grid)
    assert bound <= cost + 1e-9
    assert cost == pytest.approx(1 / 18, abs=1e-4)  # 1/12 prior var minus 1/36 gain


def test_avg_information_matches_manual_average():
    grid = _linear_family(81)
    man_c = np.zeros((1, 1))
    man_q = np.zeros((1, 1))
    weights = grid.p
    cs = np.array([cfim(ds, Z_POVM).entries for ds in grid.states])
    qs = np.array([qfim(ds).entries for ds in grid.states])
    man_c = trapz_grid(weights[:, None, None] * cs, grid.axes)
    man_q = trapz_grid(weights[:, None, None] * qs, grid.axes)
    assert np.allclose(avg_cfim(grid, Z_POVM), man_c, atol=1e-10)
    assert np.allclose(avg_qfim(grid), man_q, atol=1e-10)


def test_vtb_dominates_qvtb():
    axis = np.linspace(0.2, 1.3, 30)
    mg = model_grid("qubit-phase", (axis,))
    states = grid_states(mg, ket_state([1, 1]), np.linspace(0, 1, 40))
    grid = gaussian_prior(axis, mu=0.75, eta=0.4, states=states)
    m = Povm([ket_state([1, 1]).rho, ket_state([1, -1]).rho])
    v = vtb(grid, m)[0, 0]
    qv = qvtb(grid)[0, 0]
    assert v >= qv - 1e-12
    assert qv > 0


def test_bcrb_type1_dominates_type2():
    axis = np.linspace(0.2, 1.3, 30)
    mg = model_grid("qubit-phase", (axis,))
    states = grid_states(mg, ket_state([1, 1]), np.linspace(0, 1, 40))
    grid = gaussian_prior(axis, mu=0.75, eta=0.4, states=states)
    m = Povm([ket_state([1, 1]).rho, ket_state([1, -1]).rho])
    b1 = bcrb(grid, m, btype=1)[0, 0]
    b2 = bcrb(grid, m, btype=2)[0, 0]
    assert b1 >= b2 - 1e-12
    b3 = bcrb(grid, m, btype=3)[0, 0]
    assert b3 > 0
    q1 = bqcrb(grid, btype=1)[0, 0]
    q2 = bqcrb(grid, btype=2)[0, 0]
    assert q1 >= q2 - 1e-12


def test_qzzb_constant_family_equals_prior_variance():
    # no information in the states: the bound collapses to Var[uniform] = 1/12
    grid = _constant_family(401)
    assert qzzb(grid) == pytest.approx(1 / 12, abs=1e-3)


def test_qzzb_positive_and_below_variance_when_informative():
    axis = np.linspace(0.2, 1.3, 40)
    mg = model_grid("qubit-phase", (axis,))
    states = grid_states(mg, ket_state([1, 1]), np.linspace(0, 1, 40))
    grid = uniform_prior((axis,), states)
    z = qzzb(grid)
    var = 1.1**2 / 12
    assert 0 < z < var
