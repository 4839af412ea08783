"""Interior-point SDP solver checks.

The eigenvalue instances have a closed-form answer; the box-bounded random
instances are cross-checked against cvxpy, which stays test-side only.
"""

import numpy as np
import pytest

from qmetro.sdp import solve_sdp

cvxpy = pytest.importorskip("cvxpy")


def _sym(rng, m):
    g = rng.normal(size=(m, m))
    return 0.5 * (g + g.T).astype(complex)


def test_diagonal_lmi_reduces_to_lp():
    # minimize x subject to diag(x - 1, x - 3) >= 0  =>  x = 3
    c = np.array([1.0])
    f0 = np.diag([-1.0, -3.0]).astype(complex)
    fs = [np.eye(2, dtype=complex)]
    res = solve_sdp(c, f0, fs, np.array([5.0]))
    assert res.objective == pytest.approx(3.0, abs=1e-6)
    assert res.gap < 1e-6


@pytest.mark.parametrize("m", [3, 5])
def test_largest_eigenvalue_instance(m):
    # min t  s.t.  t I - A >= 0  has optimum exactly lambda_max(A)
    rng = np.random.default_rng(m)
    a = _sym(rng, m)
    lmax = float(np.linalg.eigvalsh(a)[-1])
    res = solve_sdp(np.array([1.0]), -a, [np.eye(m, dtype=complex)], np.array([lmax + 5.0]))
    assert res.objective == pytest.approx(lmax, abs=1e-6)


def test_matches_cvxpy_on_box_bounded_instances():
    rng = np.random.default_rng(42)
    m = 3
    for trial in range(3):
        a1, a2 = _sym(rng, m), _sym(rng, m)

        def blk(core, d1, d2, d3, d4):
            out = np.zeros((m + 4, m + 4), dtype=complex)
            out[:m, :m] = core
            out[m, m], out[m + 1, m + 1] = d1, d2
            out[m + 2, m + 2], out[m + 3, m + 3] = d3, d4
            return out

        # |x_i| <= 10 box keeps the problem bounded in every direction
        f0 = blk(np.eye(m), 10, 10, 10, 10)
        f1 = blk(a1, -1, 0, 1, 0)
        f2 = blk(a2, 0, -1, 0, 1)
        c = np.array([1.0, -0.5])
        res = solve_sdp(c, f0, [f1, f2], np.zeros(2))

        x = cvxpy.Variable(2)
        lmi = cvxpy.Constant(f0.real) + x[0] * cvxpy.Constant(f1.real) + x[1] * cvxpy.Constant(f2.real)
        prob = cvxpy.Problem(cvxpy.Minimize(c @ x), [lmi >> 0])
        prob.solve(solver="SCS", eps=1e-9, max_iters=50000)
        assert res.objective == pytest.approx(prob.value, abs=5e-5)

        total = f0 + res.x[0] * f1 + res.x[1] * f2
        assert float(np.min(np.linalg.eigvalsh(total))) >= -1e-7
