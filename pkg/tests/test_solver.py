import numpy as np
import pytest
import scipy.sparse as sp

from alsgt.errors import EmptyTrajectory, SingularSystem
from alsgt.factors import Factor
from alsgt.geom import RigidTransform, State
from alsgt.solver import (GraphConfig, LMConfig, PoseGraph, assemble_graph,
                          build_normal_equations, lm_solve, total_cost)
from oracles import dense_normal_equations, random_state, random_transform, rot_exp


def chain_states(n, step=1.0):
    return [State(RigidTransform(rot_exp([0, 0, 0.1 * k]), [step * k, 0.2 * k, 0.0]),
                  timestamp=0.1 * k) for k in range(n)]


def odometry_chain(states):
    return [(k, k + 1, states[k].pose.inverse() @ states[k + 1].pose)
            for k in range(len(states) - 1)]


def mixed_graph(rng, n):
    states = [random_state(rng, 0.1 * k) for k in range(n)]
    factors = []
    for k in range(n - 1):
        factors.append(Factor("odometry", (k, k + 1), random_transform(rng), 100 * np.eye(6)))
    for k in range(0, n, 3):
        factors.append(Factor("gnss", (k,), (rng.normal(size=3), rng.normal(size=3)), np.eye(3)))
    for k in range(0, n, 4):
        factors.append(Factor("aerial", (k,), random_transform(rng), 50 * np.eye(6), robust=True))
    if n > 5:
        factors.append(Factor("loop", (0, n - 1), random_transform(rng), 10 * np.eye(6),
                              robust=True))
    return PoseGraph(states, factors)


@pytest.mark.parametrize("n", [2, 4, 9, 20])
def test_sparse_matches_dense_assembly(rng, n):
    g = mixed_graph(rng, n)
    H, b, _ = build_normal_equations(g)
    Hd, bd = dense_normal_equations(g, g.states)
    scale = max(1.0, np.abs(Hd).max())
    assert np.abs(H.toarray() - Hd).max() / scale < 1e-10
    assert np.abs(b - bd).max() / max(1.0, np.abs(bd).max()) < 1e-10


def test_single_gnss_block_structure(rng):
    g = PoseGraph([random_state(rng) for _ in range(3)],
                  [Factor("gnss", (1,), (np.zeros(3), [0.1, 0.2, 0.3]), np.eye(3))])
    H = build_normal_equations(g)[0].toarray()
    nz = [(i, j) for i in range(3) for j in range(3)
          if np.any(H[15 * i:15 * i + 15, 15 * j:15 * j + 15])]
    assert nz == [(1, 1)]
    assert np.linalg.matrix_rank(H[15:30, 15:30]) <= 3


def test_odometry_chain_is_block_tridiagonal():
    s = chain_states(6)
    g = PoseGraph(s, [Factor("odometry", (i, j), T, np.eye(6)) for i, j, T in odometry_chain(s)])
    H = build_normal_equations(g)[0]
    assert isinstance(H, sp.csr_matrix)
    Hd = H.toarray()
    for i in range(6):
        for j in range(6):
            blk = Hd[15 * i:15 * i + 15, 15 * j:15 * j + 15]
            assert (abs(i - j) <= 1) or not blk.any()


def test_optimum_terminates_immediately():
    s = chain_states(5)
    g = assemble_graph(s, odometry=odometry_chain(s), config=GraphConfig(fix_first=True))
    _, rep = lm_solve(g)
    assert rep.iterations == 1 and rep.termination == "converged"
    assert rep.final_cost == pytest.approx(rep.initial_cost, abs=1e-20)


def test_three_state_chain_recovers_exact_states(rng):
    truth = chain_states(3)
    g_true = assemble_graph(truth, odometry=odometry_chain(truth),
                            config=GraphConfig(fix_first=True))
    init = [truth[0]] + [s.retract(np.r_[0.05 * rng.normal(size=6), np.zeros(9)])
                         for s in truth[1:]]
    g = PoseGraph(init, g_true.factors, g_true.fixed)
    out, rep = lm_solve(g, cost_tol=0.0, step_tol=1e-14)
    for a, b in zip(out, truth):
        assert a.pose.allclose(b.pose, atol=1e-8)
    assert np.all(np.diff(rep.cost_trace) <= 0)


def test_free_floating_graph_is_singular():
    s = chain_states(4)
    g = PoseGraph(s, [Factor("odometry", (i, j), T, np.eye(6)) for i, j, T in odometry_chain(s)])
    assert not g.has_gauge()
    with pytest.raises(SingularSystem):
        lm_solve(g)


def test_cost_trace_monotone_on_random_problem(rng):
    g = mixed_graph(rng, 12)
    _, rep = lm_solve(g)
    assert np.all(np.diff(rep.cost_trace) <= 0)
    assert rep.final_cost <= rep.initial_cost
    assert total_cost(g) == pytest.approx(rep.initial_cost)


def test_assemble_graph_counts():
    s = chain_states(10)
    odo = odometry_chain(s)
    from alsgt.preint import preintegrate
    from oracles import imu_batch
    d = preintegrate(imu_batch([0.0, 0.1], np.zeros((2, 3)), np.tile([0, 0, 9.81], (2, 1))))
    imu = [(k, k + 1, d) for k in range(9)]
    gnss = [(k, s[k].t, 0.5) for k in range(10)]
    g = assemble_graph(s, odometry=odo, imu=imu, gnss=gnss,
                       loops=[(0, 9, RigidTransform.identity(), 0.8)],
                       aerial=[(3, s[3].pose, 0.9)])
    assert [g.count(k) for k in ("odometry", "imu", "gnss", "loop", "aerial")] == [9, 9, 10, 1, 1]
    assert not g.fixed


def test_assemble_graph_gauge_fallbacks():
    s = chain_states(4)
    g = assemble_graph(s, odometry=odometry_chain(s))
    assert g.fixed == {0}
    g = assemble_graph(s, odometry=odometry_chain(s), aerial=[(2, s[2].pose, 1.0)])
    assert not g.fixed and g.has_gauge()
    with pytest.raises(EmptyTrajectory):
        assemble_graph([])


def test_graph_validation():
    with pytest.raises(IndexError):
        PoseGraph([State()], [Factor("gnss", (3,), (np.zeros(3), np.zeros(3)), np.eye(3))])
    with pytest.raises(ValueError):
        PoseGraph([State()])


def test_lm_config_defaults():
    c = LMConfig()
    assert (c.max_iter, c.lambda0, c.cost_tol, c.step_tol) == (50, 1e-4, 1e-6, 1e-8)
    assert (c.lambda_up, c.lambda_down, c.lambda_max) == (5.0, 3.0, 1e8)
