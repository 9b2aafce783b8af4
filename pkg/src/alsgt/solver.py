"""Batch Levenberg-Marquardt over the pose graph with block-sparse normal equations."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EmptyTrajectory, SingularSystem
from .factors import (Factor, ROBUST_KINDS, aerial_information, gnss_information, huber,
                      loop_information, odometry_information)
from .geom import STATE_DIM
from .preint import GRAVITY, imu_information

log = logging.getLogger(__name__)

ABSOLUTE_KINDS = ("gnss", "aerial")

_BLOCK_ROWS, _BLOCK_COLS = (a.ravel() for a in np.meshgrid(
    np.arange(STATE_DIM), np.arange(STATE_DIM), indexing="ij"))


@dataclass
class PoseGraph:
    states: list
    factors: list = field(default_factory=list)
    fixed: frozenset = frozenset()

    def __post_init__(self):
        self.fixed = frozenset(int(i) for i in self.fixed)
        n = len(self.states)
        for f in self.factors:
            if any(i < 0 or i >= n for i in f.indices):
                raise IndexError(f"{f.kind} factor references state outside [0, {n})")
        if any(i < 0 or i >= n for i in self.fixed):
            raise IndexError("fixed state index out of range")
        if not self.factors and not self.fixed:
            raise ValueError("graph needs at least one factor or one fixed state")

    @property
    def n_states(self):
        return len(self.states)

    def count(self, kind):
        return sum(1 for f in self.factors if f.kind == kind)

    def has_gauge(self):
        return bool(self.fixed) or any(f.kind in ABSOLUTE_KINDS for f in self.factors)


@dataclass
class SolveReport:
    iterations: int
    initial_cost: float
    final_cost: float
    cost_trace: list
    termination: str
    final_lambda: float
    gradient_norm: float = float("nan")
    accepted: int = 0

    def as_dict(self):
        return {
            "iterations": self.iterations, "initial_cost": self.initial_cost,
            "final_cost": self.final_cost, "termination": self.termination,
            "final_lambda": self.final_lambda, "gradient_norm": self.gradient_norm,
            "accepted_steps": self.accepted,
        }


@dataclass(frozen=True)
class LMConfig:
    max_iter: int = 50
    lambda0: float = 1e-4
    cost_tol: float = 1e-6
    step_tol: float = 1e-8
    gradient_tol: float = 1e-10
    lambda_up: float = 5.0
    lambda_down: float = 3.0
    lambda_max: float = 1e8
    ordering: str = "NATURAL"


def factor_cost_and_weight(factor, r):
    s = float(r @ factor.information @ r)
    if factor.robust and factor.kind in ROBUST_KINDS:
        return huber(s)
    return s, 1.0


def total_cost(graph, states=None):
    states = graph.states if states is None else states
    return sum(factor_cost_and_weight(f, f.residual(states))[0] for f in graph.factors)


def build_normal_equations(graph, states=None):
    """Assemble ``H = sum J^T W J`` and ``b = sum J^T W r`` in sparse form.

    ``W`` is the information matrix scaled by the robust-loss weight. H is
    returned as CSR with one 15x15 block per connected state pair.
    """
    states = graph.states if states is None else states
    n = len(states) * STATE_DIM
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    cost = 0.0
    for f in graph.factors:
        r, Js = f.linearize(states)
        c, w = factor_cost_and_weight(f, r)
        cost += c
        W = w * f.information
        WJ = [W @ J for J in Js]
        for ia, Ja in zip(f.indices, Js):
            sa = ia * STATE_DIM
            b[sa:sa + STATE_DIM] += Ja.T @ (W @ r)
            for ib, WJb in zip(f.indices, WJ):
                blk = Ja.T @ WJb
                sb = ib * STATE_DIM
                rows.append(_BLOCK_ROWS + sa)
                cols.append(_BLOCK_COLS + sb)
                vals.append(blk.ravel())
    if rows:
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
    else:
        H = sp.csr_matrix((n, n))
    H.sum_duplicates()
    return H, b, cost


def _free_mask(graph, H):
    n = graph.n_states * STATE_DIM
    free = np.ones(n, dtype=bool)
    for i in graph.fixed:
        free[i * STATE_DIM:(i + 1) * STATE_DIM] = False
    # dimensions touched by no factor (e.g. velocity without IMU) stay put
    free &= H.diagonal() > 0
    return free


def solve_damped(H, b, lam, free, ordering="NATURAL"):
    """Solve ``(H + lam diag(H)) delta = -b`` on the free variables."""
    idx = np.flatnonzero(free)
    Hf = H[idx][:, idx].tocsc()
    d = Hf.diagonal()
    A = (Hf + sp.diags(lam * d)).tocsc()
    delta = np.zeros(H.shape[0])
    with np.errstate(all="ignore"):
        try:
            lu = spla.splu(A, permc_spec=ordering)
            x = lu.solve(-b[idx])
        except RuntimeError:
            return None
    if not np.all(np.isfinite(x)):
        return None
    delta[idx] = x
    return delta


def retract_all(states, delta):
    return [s.retract(delta[k * STATE_DIM:(k + 1) * STATE_DIM]) for k, s in enumerate(states)]


def lm_solve(graph, config=None, **overrides):
    """Levenberg-Marquardt with Marquardt diagonal damping.

    Accepted steps divide lambda by 3, rejected ones multiply it by 5.
    Returns ``(states, SolveReport)``.
    """
    cfg = config or LMConfig()
    if overrides:
        cfg = LMConfig(**{**cfg.__dict__, **overrides})
    if not graph.has_gauge():
        raise SingularSystem("graph has no fixed state and no absolute (GNSS/aerial) factor")

    states = list(graph.states)
    lam = cfg.lambda0
    H, b, cost = build_normal_equations(graph, states)
    initial = cost
    trace = [cost]
    termination = "max_iter"
    accepted = 0
    it = 0
    free = _free_mask(graph, H)
    grad = float(np.abs(b[free]).max()) if free.any() else 0.0
    while it < cfg.max_iter:
        it += 1
        if grad <= cfg.gradient_tol:
            termination = "converged"
            break
        delta = solve_damped(H, b, lam, free, cfg.ordering)
        if delta is None:
            lam *= cfg.lambda_up
            if lam > cfg.lambda_max:
                raise SingularSystem("normal equations singular up to maximum damping")
            continue
        step_norm = float(np.linalg.norm(delta))
        trial = retract_all(states, delta)
        new_cost = total_cost(graph, trial)
        if np.isfinite(new_cost) and new_cost < cost:
            accepted += 1
            rel = (cost - new_cost) / max(cost, 1e-300)
            states = trial
            lam = max(lam / cfg.lambda_down, 1e-15)
            H, b, cost = build_normal_equations(graph, states)
            trace.append(cost)
            free = _free_mask(graph, H)
            grad = float(np.abs(b[free]).max()) if free.any() else 0.0
            if rel < cfg.cost_tol or step_norm < cfg.step_tol:
                termination = "converged"
                break
        else:
            lam *= cfg.lambda_up
            if step_norm < cfg.step_tol:
                termination = "converged"
                break
            if lam > cfg.lambda_max:
                termination = "stalled"
                break
    report = SolveReport(iterations=it, initial_cost=initial, final_cost=cost,
                         cost_trace=trace, termination=termination, final_lambda=lam,
                         gradient_norm=grad, accepted=accepted)
    log.info("LM %s after %d iterations: cost %.6g -> %.6g", termination, it, initial, cost)
    return states, report


@dataclass(frozen=True)
class GraphConfig:
    odom_rot: float = 100.0
    odom_trans: float = 50.0
    aerial_rot: float = 50.0
    aerial_trans: float = 25.0
    acc_noise: float = 0.01
    gyro_noise: float = 1e-4
    acc_bias_rw: float = 1e-3
    gyro_bias_rw: float = 1e-4
    robust: bool = True
    fix_first: bool = False


def assemble_graph(states, odometry=(), imu=(), gnss=(), loops=(), aerial=(),
                   lever_arm=(0.0, 0.0, 0.0), config=None, gravity=GRAVITY):
    """Build a PoseGraph with one state per LiDAR frame.

    odometry: ``(i, j, RigidTransform)``; imu: ``(i, j, PreintegratedDelta)``;
    gnss: ``(i, position, sigma)``; loops: ``(i, j, RigidTransform, inlier_fraction)``;
    aerial: ``(i, RigidTransform, inlier_fraction)``. When there is neither a
    GNSS nor an aerial factor the first state is fixed.
    """
    cfg = config or GraphConfig()
    states = list(states)
    if not states:
        raise EmptyTrajectory("no states to optimize")
    factors = []
    info_odom = odometry_information(cfg.odom_rot, cfg.odom_trans)
    for i, j, T in odometry:
        factors.append(Factor("odometry", (i, j), T, info_odom))
    for i, j, delta in imu:
        info = imu_information(delta.dt_total, cfg.acc_noise, cfg.gyro_noise,
                               cfg.acc_bias_rw, cfg.gyro_bias_rw)
        factors.append(Factor("imu", (i, j), delta, info, gravity=np.asarray(gravity, float)))
    lever = np.asarray(lever_arm, dtype=float)
    for i, pos, sigma in gnss:
        factors.append(Factor("gnss", (i,), (np.asarray(pos, float), lever), gnss_information(sigma)))
    for i, j, T, frac in loops:
        factors.append(Factor("loop", (i, j), T,
                              loop_information(frac, cfg.aerial_rot, cfg.aerial_trans), robust=cfg.robust))
    for i, T, frac in aerial:
        factors.append(Factor("aerial", (i,), T,
                              aerial_information(frac, cfg.aerial_rot, cfg.aerial_trans), robust=cfg.robust))
    fixed = set()
    if cfg.fix_first or not any(f.kind in ABSOLUTE_KINDS for f in factors):
        fixed.add(0)
    return PoseGraph(states, factors, frozenset(fixed))
