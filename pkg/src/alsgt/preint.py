"""IMU preintegration between two LiDAR frames.

Increments are expressed in the body frame of the first frame and exclude
gravity; gravity only enters the IMU residual. Integration is midpoint
(trapezoidal) and the bias Jacobians are the exact first-order derivatives
of that discrete scheme.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyBatch, NonMonotonicTimestamps
from .geom import right_jacobian, skew, so3_exp

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    gyro: np.ndarray
    acc: np.ndarray


@dataclass(frozen=True, eq=False)
class ImuBatch:
    """Column storage for a sequence of IMU samples."""

    timestamps: np.ndarray
    gyro: np.ndarray
    acc: np.ndarray

    @classmethod
    def from_samples(cls, samples):
        if isinstance(samples, ImuBatch):
            return samples
        samples = list(samples)
        if not samples:
            return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(np.array([s.timestamp for s in samples], dtype=float),
                   np.array([s.gyro for s in samples], dtype=float),
                   np.array([s.acc for s in samples], dtype=float))

    def __len__(self):
        return len(self.timestamps)

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return ImuSample(float(self.timestamps[idx]), self.gyro[idx], self.acc[idx])
        return ImuBatch(self.timestamps[idx], self.gyro[idx], self.acc[idx])

    def samples(self):
        return [self[i] for i in range(len(self))]

    def slice_interval(self, t0, t1):
        """Samples covering [t0, t1], linearly interpolated at both ends."""
        ts = self.timestamps
        inner = np.flatnonzero((ts > t0) & (ts < t1))
        t_new = np.concatenate([[t0], ts[inner], [t1]])
        gyro = np.column_stack([np.interp(t_new, ts, self.gyro[:, k]) for k in range(3)])
        acc = np.column_stack([np.interp(t_new, ts, self.acc[:, k]) for k in range(3)])
        return ImuBatch(t_new, gyro, acc)


def _zeros33():
    return np.zeros((3, 3))


@dataclass(frozen=True, eq=False)
class PreintegratedDelta:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    dt_total: float
    bias_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d_alpha_d_ba: np.ndarray = field(default_factory=_zeros33)
    d_alpha_d_bg: np.ndarray = field(default_factory=_zeros33)
    d_beta_d_ba: np.ndarray = field(default_factory=_zeros33)
    d_beta_d_bg: np.ndarray = field(default_factory=_zeros33)
    d_gamma_d_bg: np.ndarray = field(default_factory=_zeros33)

    def compose(self, other):
        """Delta over this interval followed by ``other`` (same linearization biases)."""
        g1 = self.gamma
        a2 = other.alpha
        b2 = other.beta
        dt1 = self.dt_total
        # rotation Jacobian of g1 @ x w.r.t. bg enters through g1 Exp(J eps)
        ga2 = -g1 @ skew(a2) @ self.d_gamma_d_bg
        gb2 = -g1 @ skew(b2) @ self.d_gamma_d_bg
        return PreintegratedDelta(
            alpha=self.alpha + self.beta * other.dt_total + g1 @ a2,
            beta=self.beta + g1 @ b2,
            gamma=g1 @ other.gamma,
            dt_total=dt1 + other.dt_total,
            bias_acc=self.bias_acc, bias_gyro=self.bias_gyro,
            d_alpha_d_ba=self.d_alpha_d_ba + self.d_beta_d_ba * other.dt_total + g1 @ other.d_alpha_d_ba,
            d_alpha_d_bg=self.d_alpha_d_bg + self.d_beta_d_bg * other.dt_total + ga2 + g1 @ other.d_alpha_d_bg,
            d_beta_d_ba=self.d_beta_d_ba + g1 @ other.d_beta_d_ba,
            d_beta_d_bg=self.d_beta_d_bg + gb2 + g1 @ other.d_beta_d_bg,
            d_gamma_d_bg=other.gamma.T @ self.d_gamma_d_bg + other.d_gamma_d_bg,
        )


def _check_batch(batch):
    if len(batch) < 2:
        raise EmptyBatch(f"need at least 2 IMU samples, got {len(batch)}")
    if not np.all(np.diff(batch.timestamps) > 0):
        raise NonMonotonicTimestamps("IMU timestamps must be strictly increasing")


def preintegrate(samples, bias_acc=None, bias_gyro=None):
    """Midpoint preintegration of bias-corrected samples."""
    batch = ImuBatch.from_samples(samples)
    _check_batch(batch)
    ba = np.zeros(3) if bias_acc is None else np.asarray(bias_acc, dtype=float)
    bg = np.zeros(3) if bias_gyro is None else np.asarray(bias_gyro, dtype=float)

    alpha = np.zeros(3)
    beta = np.zeros(3)
    gamma = np.eye(3)
    Jaa, Jag, Jba, Jbg, Jgg = (np.zeros((3, 3)) for _ in range(5))

    ts, w, a = batch.timestamps, batch.gyro - bg, batch.acc - ba
    for k in range(len(ts) - 1):
        dt = ts[k + 1] - ts[k]
        theta = 0.5 * (w[k] + w[k + 1]) * dt
        dR = so3_exp(theta)
        gamma_next = gamma @ dR
        Jgg_next = dR.T @ Jgg - right_jacobian(theta) * dt

        f0 = gamma @ a[k]
        f1 = gamma_next @ a[k + 1]
        acc_mid = 0.5 * (f0 + f1)
        dacc_dba = -0.5 * (gamma + gamma_next)
        dacc_dbg = -0.5 * (gamma @ skew(a[k]) @ Jgg + gamma_next @ skew(a[k + 1]) @ Jgg_next)

        alpha = alpha + beta * dt + 0.5 * acc_mid * dt * dt
        Jaa = Jaa + Jba * dt + 0.5 * dacc_dba * dt * dt
        Jag = Jag + Jbg * dt + 0.5 * dacc_dbg * dt * dt
        beta = beta + acc_mid * dt
        Jba = Jba + dacc_dba * dt
        Jbg = Jbg + dacc_dbg * dt
        gamma, Jgg = gamma_next, Jgg_next

    return PreintegratedDelta(alpha, beta, gamma, float(ts[-1] - ts[0]), ba.copy(), bg.copy(),
                              Jaa, Jag, Jba, Jbg, Jgg)


def correct_for_bias(delta, new_bias_acc, new_bias_gyro):
    """First-order bias update using the stored Jacobians (no re-integration)."""
    dba = np.asarray(new_bias_acc, dtype=float) - delta.bias_acc
    dbg = np.asarray(new_bias_gyro, dtype=float) - delta.bias_gyro
    return PreintegratedDelta(
        alpha=delta.alpha + delta.d_alpha_d_ba @ dba + delta.d_alpha_d_bg @ dbg,
        beta=delta.beta + delta.d_beta_d_ba @ dba + delta.d_beta_d_bg @ dbg,
        gamma=delta.gamma @ so3_exp(delta.d_gamma_d_bg @ dbg),
        dt_total=delta.dt_total,
        bias_acc=delta.bias_acc, bias_gyro=delta.bias_gyro,
        d_alpha_d_ba=delta.d_alpha_d_ba, d_alpha_d_bg=delta.d_alpha_d_bg,
        d_beta_d_ba=delta.d_beta_d_ba, d_beta_d_bg=delta.d_beta_d_bg,
        d_gamma_d_bg=delta.d_gamma_d_bg,
    )


def imu_information(dt, acc_noise=0.01, gyro_noise=1e-4, acc_bias_rw=1e-3, gyro_bias_rw=1e-4):
    """Diagonal 15x15 information for an IMU factor from white-noise densities.

    Densities are per sqrt(Hz); variances grow with the interval length.
    """
    dt = max(float(dt), 1e-6)
    var = np.concatenate([
        np.full(3, acc_noise ** 2 * dt ** 3 / 3.0),
        np.full(3, acc_noise ** 2 * dt),
        np.full(3, gyro_noise ** 2 * dt),
        np.full(3, acc_bias_rw ** 2 * dt),
        np.full(3, gyro_bias_rw ** 2 * dt),
    ])
    return np.diag(1.0 / var)
