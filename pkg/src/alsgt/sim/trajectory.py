"""Continuous-time ground-truth trajectory for the simulator.

Position is a cubic spline in time through xy waypoints (periodic for
closed loops), lifted onto the ground surface at a fixed sensor height.
Orientation is the heading of the horizontal velocity, so the body
angular velocity is exactly ``(0, 0, dyaw/dt)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..geom import RigidTransform, State, rot_z
from ..preint import GRAVITY


@dataclass(frozen=True, eq=False)
class TrajectoryTruth:
    spline: CubicSpline
    duration: float
    gradient: np.ndarray
    z0: float
    height: float
    bias_acc: np.ndarray
    bias_gyro: np.ndarray

    @classmethod
    def from_waypoints(cls, waypoints, speed, scene, height=1.8, closed=True,
                       bias_acc=(0.0, 0.0, 0.0), bias_gyro=(0.0, 0.0, 0.0)):
        wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
        if closed and not np.allclose(wp[0], wp[-1]):
            wp = np.vstack([wp, wp[:1]])
        seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
        t = np.concatenate([[0.0], np.cumsum(seg)]) / float(speed)
        spline = CubicSpline(t, wp, bc_type="periodic" if closed else "natural")
        return cls(spline, float(t[-1]), np.asarray(scene.gradient, float), float(scene.z0),
                   float(height), np.asarray(bias_acc, float), np.asarray(bias_gyro, float))

    def _xyz(self, t, nu):
        xy = self.spline(t, nu)
        xy = np.atleast_2d(xy)
        dz = xy @ self.gradient
        if nu == 0:
            dz = dz + self.z0 + self.height
        return np.column_stack([xy, dz])

    def position(self, t):
        return self._xyz(np.atleast_1d(t), 0)

    def velocity(self, t):
        return self._xyz(np.atleast_1d(t), 1)

    def acceleration(self, t):
        return self._xyz(np.atleast_1d(t), 2)

    def yaw(self, t):
        v = self.velocity(t)
        return np.unwrap(np.arctan2(v[:, 1], v[:, 0]))

    def yaw_rate(self, t):
        v = self.velocity(t)
        a = self.acceleration(t)
        sq = v[:, 0] ** 2 + v[:, 1] ** 2
        num = v[:, 0] * a[:, 1] - v[:, 1] * a[:, 0]
        # heading is frozen while the platform stands still
        return np.where(sq > 1e-12, num / np.maximum(sq, 1e-12), 0.0)

    def rotation(self, t):
        return [rot_z(y) for y in self.yaw(t)]

    def angular_velocity_body(self, t):
        w = np.zeros((len(np.atleast_1d(t)), 3))
        w[:, 2] = self.yaw_rate(t)
        return w

    def specific_force_body(self, t, gravity=GRAVITY):
        a = self.acceleration(t) - gravity
        return np.array([R.T @ ai for R, ai in zip(self.rotation(t), a)])

    def pose(self, t):
        return RigidTransform(rot_z(self.yaw(t)[0]), self.position(t)[0])

    def frame_times(self, rate):
        n = int(np.floor(self.duration * rate + 1e-9))
        return np.arange(n + 1) / float(rate)

    def states(self, rate):
        ts = self.frame_times(rate)
        pos, vel, yaw = self.position(ts), self.velocity(ts), self.yaw(ts)
        return [State(RigidTransform(rot_z(y), p), v, self.bias_acc, self.bias_gyro, t)
                for t, p, v, y in zip(ts, pos, vel, yaw)]

    def path_length(self, n=20000):
        ts = np.linspace(0.0, self.duration, n)
        return float(np.linalg.norm(np.diff(self.position(ts), axis=0), axis=1).sum())
