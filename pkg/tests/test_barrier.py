import numpy as np
import pytest

from relayplan import barrier
from relayplan.barrier import BallBlock, BoxBlock, LinearBlock, concave_max


def quadratic(q, lin=None):
    """objective -z'Qz/2 + lin'z as a barrier-style callable."""
    q = np.asarray(q, dtype=float)
    lin = np.zeros(q.shape[0]) if lin is None else np.asarray(lin, dtype=float)

    def f(z, order):
        val = -0.5 * z @ q @ z + lin @ z
        if order == 0:
            return (val,)
        grad = -q @ z + lin
        if order == 1:
            return val, grad
        return val, grad, -q

    return f


def test_box_quadratic_reaches_origin():
    n = 4
    blocks = [BoxBlock(np.arange(n), -2.0, 3.0)]
    z, info = concave_max(quadratic(np.eye(n)), blocks, np.full(n, 1.5))
    assert info.converged
    assert np.all(np.abs(z) <= 1e-6)


def test_log_budget_equal_split():
    n, budget = 5, 2.0

    def f(z, order):
        if np.any(z <= -1):
            return None
        val = float(np.sum(np.log1p(z)))
        if order == 0:
            return (val,)
        grad = 1.0 / (1.0 + z)
        if order == 1:
            return val, grad
        return val, grad, np.diag(-1.0 / (1.0 + z) ** 2)

    blocks = [
        BoxBlock(np.arange(n), 0.0, np.inf, label="nonneg"),
        LinearBlock(-np.ones((1, n)), np.array([budget]), label="budget"),
    ]
    z, info = concave_max(f, blocks, np.full(n, 0.1))
    assert info.converged
    assert np.allclose(z, budget / n, atol=1e-5)


def test_random_qp_against_grid_on_2d_slices():
    rng = np.random.default_rng(19)
    for _ in range(5):
        m = rng.normal(size=(2, 2))
        q = m @ m.T + 0.5 * np.eye(2)
        lin = rng.normal(size=2)
        blocks = [BoxBlock(np.arange(2), -1.0, 1.0)]
        z, info = concave_max(quadratic(q, lin), blocks, np.zeros(2))
        assert info.converged
        grid = np.linspace(-1, 1, 401)
        xx, yy = np.meshgrid(grid, grid)
        vals = (
            -0.5 * (q[0, 0] * xx**2 + 2 * q[0, 1] * xx * yy + q[1, 1] * yy**2)
            + lin[0] * xx
            + lin[1] * yy
        )
        best = np.unravel_index(np.argmax(vals), vals.shape)
        assert abs(z[0] - grid[best[1]]) <= 2.0 / 400 + 1e-9
        assert abs(z[1] - grid[best[0]]) <= 2.0 / 400 + 1e-9
        assert -0.5 * z @ q @ z + lin @ z >= vals[best] - 1e-6


def test_ball_constraint_projects_along_gradient():
    # maximize 1'z inside unit ball at origin -> z = 1/sqrt(2) * (1,1)
    lin = np.ones(2)

    def f(z, order):
        val = lin @ z
        if order == 0:
            return (val,)
        if order == 1:
            return val, lin.copy()
        return val, lin.copy(), np.zeros((2, 2))

    blocks = [BallBlock(np.arange(2), np.zeros(2), 1.0)]
    z, info = concave_max(f, blocks, np.zeros(2))
    assert info.converged
    assert np.allclose(z, 1 / np.sqrt(2), atol=1e-4)


def test_infeasible_start_raises_with_block_label():
    blocks = [BoxBlock(np.arange(2), 0.0, 1.0, label="powers")]
    with pytest.raises(barrier.InfeasibleStartError, match="powers"):
        concave_max(quadratic(np.eye(2)), blocks, np.array([-0.5, 0.5]))
    # on-the-boundary start is not strictly interior either
    with pytest.raises(barrier.InfeasibleStartError):
        concave_max(quadratic(np.eye(2)), blocks, np.array([0.0, 0.5]))


def test_objective_domain_start_rejected():
    def f(z, order):
        return None

    with pytest.raises(barrier.InfeasibleStartError, match="domain"):
        concave_max(f, [BoxBlock(np.arange(1), -1.0, 1.0)], np.zeros(1))


def test_unconstrained_pure_newton():
    z, info = concave_max(quadratic(np.diag([1.0, 4.0]), np.array([1.0, 2.0])), [], np.zeros(2))
    assert info.converged and info.stages == 1
    assert np.allclose(z, [1.0, 0.5], atol=1e-8)


def test_barrier_stage_schedule_counts():
    n = 3
    blocks = [BoxBlock(np.arange(n), -1.0, 1.0)]  # n_c = 6
    z, info = concave_max(quadratic(np.eye(n), np.array([0.3, 0.0, -0.2])), blocks, np.zeros(n))
    assert info.stages == 9
    assert info.mu_final == pytest.approx(6 * 1e-8)
    assert info.newton_steps > 0


def test_domain_rejection_shrinks_steps():
    """A spiky domain hole forces halvings but the solve still lands."""
    calls = {"rejected": 0}

    def f(z, order):
        if z[0] > 0.6:  # pretend the bound's log argument went nonpositive
            calls["rejected"] += 1
            return None
        val = z[0]
        if order == 0:
            return (val,)
        if order == 1:
            return val, np.array([1.0])
        return val, np.array([1.0]), np.zeros((1, 1))

    blocks = [BoxBlock(np.array([0]), -1.0, 2.0)]
    z, info = concave_max(f, blocks, np.array([0.0]))
    assert z[0] <= 0.6
    assert calls["rejected"] > 0
    assert z[0] == pytest.approx(0.6, abs=1e-3)


def test_feasibility_violations_reporting():
    blocks = [BoxBlock(np.arange(2), 0.0, 1.0, label="p")]
    assert barrier.feasibility_violations(blocks, np.array([0.5, 0.5])) == []
    out = barrier.feasibility_violations(blocks, np.array([-0.2, 0.5]))
    assert len(out) == 1 and out[0].startswith("p[")
