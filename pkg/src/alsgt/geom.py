"""SO(3)/SE(3) helpers and the per-frame navigation state.

Rotations are plain 3x3 numpy arrays. Increments are applied on the right,
``R <- R @ so3_exp(dtheta)``, which is the convention every Jacobian in
:mod:`alsgt.factors` is written against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AngleNearPi

# Layout of the 15-dim tangent vector of a State.
ROT = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BA = slice(9, 12)
BG = slice(12, 15)
STATE_DIM = 15

_SMALL_ANGLE = 1e-8
_NEAR_PI_TRACE = -1.0 + 1e-6


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(W):
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def so3_exp(omega):
    """Rodrigues' formula for a rotation vector (radians)."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    W = skew(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * (W @ W)
    K = W / theta
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def so3_log(R):
    """Principal-branch logarithm; raises AngleNearPi when the angle is ~pi."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr <= _NEAR_PI_TRACE:
        raise AngleNearPi(f"rotation trace {tr:.9f} too close to -1")
    v = 0.5 * vee(R - R.T)
    s = np.linalg.norm(v)
    c = 0.5 * (tr - 1.0)
    theta = np.arctan2(s, c)
    if s < 1e-12:
        # theta ~ 0: first-order series of theta / sin(theta)
        return v * (1.0 + theta * theta / 6.0)
    return v * (theta / s)


def right_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * W + (W @ W) / 6.0
    t2 = theta * theta
    return (np.eye(3) - (1.0 - np.cos(theta)) / t2 * W
            + (theta - np.sin(theta)) / (t2 * theta) * (W @ W))


def right_jacobian_inv(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * W + (W @ W) / 12.0
    t2 = theta * theta
    coef = 1.0 / t2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * W + coef * (W @ W)


def orthonormalize(R):
    """Nearest rotation matrix in the Frobenius sense (SVD projection)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return (np.abs(R @ R.T - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _frozen(a, shape):
    a = np.array(a, dtype=float)
    if a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def from_rotvec(cls, omega, translation=(0.0, 0.0, 0.0)):
        return cls(so3_exp(omega), translation)

    def as_matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other):
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def apply(self, points):
        """Transform a single point (3,) or an (N, 3) array."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def rotation_angle(self):
        c = np.clip(0.5 * (np.trace(self.rotation) - 1.0), -1.0, 1.0)
        return float(np.arccos(c))

    def allclose(self, other, atol=1e-9):
        return (np.allclose(self.rotation, other.rotation, atol=atol)
                and np.allclose(self.translation, other.translation, atol=atol))

    def __repr__(self):
        rv = np.degrees(self.rotation_angle())
        return f"RigidTransform(t={np.round(self.translation, 4).tolist()}, angle={rv:.4f}deg)"


def transform_point(T: RigidTransform, p):
    return T.apply(p)


@dataclass(frozen=True, eq=False)
class State:
    """Navigation state of one LiDAR frame: pose, velocity and IMU biases."""

    pose: RigidTransform = field(default_factory=RigidTransform)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    timestamp: float = 0.0

    def __post_init__(self):
        for name in ("velocity", "bias_acc", "bias_gyro"):
            object.__setattr__(self, name, _frozen(getattr(self, name), (3,)))
        object.__setattr__(self, "timestamp", float(self.timestamp))

    @property
    def R(self):
        return self.pose.rotation

    @property
    def t(self):
        return self.pose.translation

    def retract(self, delta):
        """Apply a 15-dim tangent increment (rotation on the right, rest additive)."""
        delta = np.asarray(delta, dtype=float)
        pose = RigidTransform(self.R @ so3_exp(delta[ROT]), self.t + delta[POS])
        return State(pose, self.velocity + delta[VEL], self.bias_acc + delta[BA],
                     self.bias_gyro + delta[BG], self.timestamp)

    def replace(self, **changes):
        kw = dict(pose=self.pose, velocity=self.velocity, bias_acc=self.bias_acc,
                  bias_gyro=self.bias_gyro, timestamp=self.timestamp)
        kw.update(changes)
        return State(**kw)


def check_increasing(states):
    ts = np.array([s.timestamp for s in states])
    return bool(np.all(np.diff(ts) > 0))
