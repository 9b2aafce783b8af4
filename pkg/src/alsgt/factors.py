"""Residuals and analytic Jacobians of the five pose-graph factor kinds.

Every Jacobian is taken with respect to the 15-dim state tangent
``[dtheta, dt, dv, dba, dbg]`` with the rotation perturbed on the right.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import BA, BG, POS, ROT, STATE_DIM, VEL, right_jacobian, right_jacobian_inv, skew, so3_exp, so3_log
from .preint import GRAVITY, correct_for_bias

HUBER_DELTA = 1.0

KIND_DIMS = {"loop": 6, "aerial": 6, "odometry": 6, "imu": 15, "gnss": 3}
ROBUST_KINDS = ("loop", "aerial")


def _relative_pose_residual(Xi, Xj, meas):
    Ri, Rj = Xi.R, Xj.R
    E = meas.rotation.T @ Ri.T @ Rj
    e = so3_log(E)
    u = Ri.T @ (Xj.t - Xi.t)
    r = np.concatenate([e, u - meas.translation])

    Jr_inv = right_jacobian_inv(e)
    Ji = np.zeros((6, STATE_DIM))
    Jj = np.zeros((6, STATE_DIM))
    Ji[0:3, ROT] = -Jr_inv @ Rj.T @ Ri
    Jj[0:3, ROT] = Jr_inv
    Ji[3:6, ROT] = skew(u)
    Ji[3:6, POS] = -Ri.T
    Jj[3:6, POS] = Ri.T
    return r, Ji, Jj


def residual_loop(Xi, Xj, measurement):
    """Loop residual ``[log(M^-1 Ri^-1 Rj); Ri^-1 (tj - ti) - t_meas]``."""
    return _relative_pose_residual(Xi, Xj, measurement)


def residual_odometry(Xi, Xi1, measurement):
    return _relative_pose_residual(Xi, Xi1, measurement)


def residual_aerial(Xi, measurement):
    e = so3_log(measurement.rotation.T @ Xi.R)
    r = np.concatenate([e, Xi.t - measurement.translation])
    J = np.zeros((6, STATE_DIM))
    J[0:3, ROT] = right_jacobian_inv(e)
    J[3:6, POS] = np.eye(3)
    return r, J


def residual_gnss(Xi, antenna_position, lever_arm):
    lever_arm = np.asarray(lever_arm, dtype=float)
    r = Xi.t + Xi.R @ lever_arm - np.asarray(antenna_position, dtype=float)
    J = np.zeros((3, STATE_DIM))
    J[:, POS] = np.eye(3)
    J[:, ROT] = -Xi.R @ skew(lever_arm)
    return r, J


def residual_imu(Xi, Xj, delta, gravity=GRAVITY):
    """15-row inertial residual between consecutive states.

    ``gravity`` is the gravitational acceleration in the map frame
    (pointing down), so the position row reads
    ``Ri^T (tj - ti - vi dt - g dt^2 / 2) - alpha``.
    """
    g = np.asarray(gravity, dtype=float)
    dt = delta.dt_total
    if dt <= 0:
        raise ValueError("preintegrated interval must be positive")
    corr = correct_for_bias(delta, Xi.bias_acc, Xi.bias_gyro)
    dbg = Xi.bias_gyro - delta.bias_gyro
    Ri, Rj = Xi.R, Xj.R
    RiT = Ri.T

    p = Xj.t - Xi.t - Xi.velocity * dt - 0.5 * g * dt * dt
    v = Xj.velocity - Xi.velocity - g * dt
    ra = RiT @ p - corr.alpha
    rb = RiT @ v - corr.beta
    E = corr.gamma.T @ RiT @ Rj
    rg = so3_log(E)
    r = np.concatenate([ra, rb, rg, Xj.bias_acc - Xi.bias_acc, Xj.bias_gyro - Xi.bias_gyro])

    Ji = np.zeros((15, STATE_DIM))
    Jj = np.zeros((15, STATE_DIM))
    Jr_inv = right_jacobian_inv(rg)

    Ji[0:3, ROT] = skew(RiT @ p)
    Ji[0:3, POS] = -RiT
    Jj[0:3, POS] = RiT
    Ji[0:3, VEL] = -RiT * dt
    Ji[0:3, BA] = -delta.d_alpha_d_ba
    Ji[0:3, BG] = -delta.d_alpha_d_bg

    Ji[3:6, ROT] = skew(RiT @ v)
    Ji[3:6, VEL] = -RiT
    Jj[3:6, VEL] = RiT
    Ji[3:6, BA] = -delta.d_beta_d_ba
    Ji[3:6, BG] = -delta.d_beta_d_bg

    Ji[6:9, ROT] = -Jr_inv @ Rj.T @ Ri
    Jj[6:9, ROT] = Jr_inv
    phi = delta.d_gamma_d_bg @ dbg
    Ji[6:9, BG] = -Jr_inv @ so3_exp(rg).T @ right_jacobian(phi) @ delta.d_gamma_d_bg

    Ji[9:12, BA] = -np.eye(3)
    Jj[9:12, BA] = np.eye(3)
    Ji[12:15, BG] = -np.eye(3)
    Jj[12:15, BG] = np.eye(3)
    return r, Ji, Jj


def huber(s, delta=HUBER_DELTA):
    """Huber loss on a squared Mahalanobis norm ``s``; returns (rho, rho')."""
    d2 = delta * delta
    if s <= d2:
        return s, 1.0
    root = np.sqrt(s)
    return 2.0 * delta * root - d2, delta / root


@dataclass(frozen=True, eq=False)
class Factor:
    """One pose-graph constraint.

    ``measurement`` depends on ``kind``: a RigidTransform for loop, odometry
    and aerial; a PreintegratedDelta for imu; ``(position, lever_arm)`` for
    gnss.
    """

    kind: str
    indices: tuple
    measurement: object
    information: np.ndarray
    robust: bool = False
    gravity: np.ndarray = GRAVITY

    def __post_init__(self):
        if self.kind not in KIND_DIMS:
            raise ValueError(f"unknown factor kind {self.kind!r}")
        n_idx = 1 if self.kind in ("aerial", "gnss") else 2
        if len(self.indices) != n_idx:
            raise ValueError(f"{self.kind} factor needs {n_idx} state indices")
        info = np.asarray(self.information, dtype=float)
        dim = KIND_DIMS[self.kind]
        if info.shape != (dim, dim):
            raise ValueError(f"{self.kind} information must be {dim}x{dim}")
        if not np.allclose(info, info.T, atol=1e-9 * max(1.0, np.abs(info).max())):
            raise ValueError("information matrix must be symmetric")
        object.__setattr__(self, "information", info)
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def dim(self):
        return KIND_DIMS[self.kind]

    def linearize(self, states):
        """Residual and one (dim x 15) Jacobian block per involved state."""
        xs = [states[i] for i in self.indices]
        if self.kind == "loop":
            r, Ji, Jj = residual_loop(xs[0], xs[1], self.measurement)
            return r, [Ji, Jj]
        if self.kind == "odometry":
            r, Ji, Jj = residual_odometry(xs[0], xs[1], self.measurement)
            return r, [Ji, Jj]
        if self.kind == "imu":
            r, Ji, Jj = residual_imu(xs[0], xs[1], self.measurement, self.gravity)
            return r, [Ji, Jj]
        if self.kind == "aerial":
            r, J = residual_aerial(xs[0], self.measurement)
            return r, [J]
        position, lever_arm = self.measurement
        r, J = residual_gnss(xs[0], position, lever_arm)
        return r, [J]

    def residual(self, states):
        return self.linearize(states)[0]


def weighted_cost(factor, residual):
    """``r^T Lambda r``, Huber-wrapped for robust loop/aerial factors."""
    r = np.asarray(residual, dtype=float)
    s = float(r @ factor.information @ r)
    if factor.robust and factor.kind in ROBUST_KINDS:
        return huber(s)[0]
    return s


# Default information matrices; none of these are fixed by the method itself.
def odometry_information(rot=100.0, trans=50.0):
    return np.diag([rot ** 2] * 3 + [trans ** 2] * 3)


def aerial_information(inlier_fraction=1.0, rot=50.0, trans=25.0):
    return inlier_fraction * np.diag([rot ** 2] * 3 + [trans ** 2] * 3)


def loop_information(inlier_fraction=1.0, rot=50.0, trans=25.0):
    return aerial_information(inlier_fraction, rot, trans)


def gnss_information(sigma=0.5):
    return np.eye(3) / sigma ** 2
