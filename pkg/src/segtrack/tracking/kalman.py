"""Constant-velocity Kalman filter over ``(cx, cy, aspect, height)`` boxes.

Noise standard deviations scale with the box height, in the usual SORT /
DeepSORT fashion. Every routine has a batched form working on stacked
``(n, 8)`` means and ``(n, 8, 8)`` covariances; the tracker uses those.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFinite
from ..geometry import BoundingBox

NDIM = 4
MIN_HEIGHT = 1e-3

_F = np.eye(2 * NDIM)
_F[:NDIM, NDIM:] = np.eye(NDIM)
_H = np.eye(NDIM, 2 * NDIM)
_I8 = np.eye(2 * NDIM)

# chi-square 0.95 quantile, 4 degrees of freedom
CHI2_4DOF_95 = 9.4877


class NonFiniteState(NonFinite):
    pass


@dataclass(frozen=True)
class KalmanConfig:
    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    std_aspect: float = 1e-2
    std_aspect_velocity: float = 1e-5
    std_aspect_measurement: float = 1e-1
    init_position_scale: float = 2.0
    init_velocity_scale: float = 10.0
    process_scale: float = 1.0
    measurement_scale: float = 1.0

    @classmethod
    def noiseless(cls) -> "KalmanConfig":
        """Exact dynamics and exact measurements; only the prior is uncertain."""
        return cls(process_scale=0.0, measurement_scale=0.0)


@dataclass
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def to_box(self) -> BoundingBox:
        return xyah_to_box(self.mean[:NDIM])


def box_to_xyah(box: BoundingBox) -> np.ndarray:
    w = box.x_max - box.x_min
    h = box.y_max - box.y_min
    return np.array([box.x_min + w / 2.0, box.y_min + h / 2.0, w / h, h], dtype=np.float64)


def boxes_to_xyah(boxes: np.ndarray) -> np.ndarray:
    """``(n, 4)`` box rows to ``(n, 4)`` xyah rows."""
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    w = b[:, 2] - b[:, 0]
    h = b[:, 3] - b[:, 1]
    return np.stack([b[:, 0] + w / 2.0, b[:, 1] + h / 2.0, w / h, h], axis=1)


def xyah_to_box(xyah) -> BoundingBox:
    cx, cy, a, h = (float(v) for v in xyah[:NDIM])
    w = a * h
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def xyah_to_boxes(xyah: np.ndarray) -> np.ndarray:
    """``(n, 4)`` xyah rows to ``(n, 4)`` ``[x_min, y_min, x_max, y_max]`` rows."""
    cywh = xyah[:, :NDIM].copy()
    cywh[:, 2] *= cywh[:, 3]
    return cywh @ _CXYWH_TO_BOX


_IDX8 = np.arange(2 * NDIM)
# rows (cx, cy, w, h) -> (x_min, y_min, x_max, y_max)
_CXYWH_TO_BOX = np.array([[1, 0, 1, 0], [0, 1, 0, 1], [-0.5, 0, 0.5, 0], [0, -0.5, 0, 0.5]], dtype=np.float64)


def _diag_batch(std: np.ndarray) -> np.ndarray:
    n, d = std.shape
    out = np.zeros((n, d, d))
    idx = np.arange(d)
    out[:, idx, idx] = std * std
    return out


class KalmanFilter:
    def __init__(self, config: KalmanConfig | None = None):
        self.config = c = config or KalmanConfig()
        # std = h * slope + offset, per state (or measurement) component
        wp, wv = c.std_weight_position, c.std_weight_velocity
        self._q_slope = c.process_scale * np.array([wp, wp, 0, wp, wv, wv, 0, wv])
        self._q_offset = c.process_scale * np.array([0, 0, c.std_aspect, 0, 0, 0, c.std_aspect_velocity, 0])
        self._r_slope = c.measurement_scale * np.array([wp, wp, 0, wp])
        self._r_offset = c.measurement_scale * np.array([0, 0, c.std_aspect_measurement, 0])

    def _process_std(self, h: np.ndarray) -> np.ndarray:
        return h[:, None] * self._q_slope + self._q_offset

    def _measurement_std(self, h: np.ndarray) -> np.ndarray:
        return h[:, None] * self._r_slope + self._r_offset

    def initiate_many(self, measurements: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.config
        z = np.asarray(measurements, dtype=np.float64).reshape(-1, NDIM)
        mean = np.concatenate([z, np.zeros_like(z)], axis=1)
        h = z[:, 3]
        pos = c.init_position_scale * c.std_weight_position * h
        vel = c.init_velocity_scale * c.std_weight_velocity * h
        one = np.ones_like(h)
        std = np.stack([pos, pos, c.std_aspect * one, pos, vel, vel, c.std_aspect_velocity * one, vel], axis=1)
        return mean, _diag_batch(std)

    def initiate(self, box: BoundingBox) -> KalmanState:
        mean, cov = self.initiate_many(box_to_xyah(box)[None])
        return KalmanState(mean[0], cov[0])

    def predict_many(self, means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not (np.isfinite(means).all() and np.isfinite(covs).all()):
            raise NonFiniteState("state has non-finite entries")
        q_std = self._process_std(means[:, 3])
        means = means @ _F.T
        means[:, 3] = np.maximum(means[:, 3], MIN_HEIGHT)
        covs = _F @ covs @ _F.T
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        covs[:, _IDX8, _IDX8] += q_std * q_std
        return means, covs

    def predict(self, state: KalmanState) -> KalmanState:
        m, p = self.predict_many(state.mean[None].copy(), state.covariance[None])
        return KalmanState(m[0], p[0])

    def project_many(self, means: np.ndarray, covs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Measurement-space mean and innovation covariance ``S``."""
        r = _diag_batch(self._measurement_std(means[:, 3]))
        return means[:, :NDIM], covs[:, :NDIM, :NDIM] + r

    def update_many(self, means: np.ndarray, covs: np.ndarray, measurements: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(measurements, dtype=np.float64).reshape(-1, NDIM)
        if not np.isfinite(z).all():
            raise NonFinite("measurement has non-finite entries")
        r_std = self._measurement_std(means[:, 3])
        r_var = r_std * r_std
        s = covs[:, :NDIM, :NDIM].copy()
        s[:, _IDX8[:NDIM], _IDX8[:NDIM]] += r_var
        pht = covs[:, :, :NDIM]  # P H^T
        try:
            gain = np.linalg.solve(s, pht.transpose(0, 2, 1)).transpose(0, 2, 1)
        except np.linalg.LinAlgError:
            # exact measurements of an already certain state: S can be singular
            gain = pht @ np.linalg.pinv(s, hermitian=True)
        innovation = z - means[:, :NDIM]
        means = means + np.einsum("nij,nj->ni", gain, innovation)
        # Joseph form keeps the covariance symmetric positive semidefinite
        ikh = np.broadcast_to(_I8, covs.shape).copy()
        ikh[:, :, :NDIM] -= gain
        covs = ikh @ covs @ ikh.transpose(0, 2, 1) + (gain * r_var[:, None, :]) @ gain.transpose(0, 2, 1)
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        return means, covs

    def update(self, state: KalmanState, measurement: BoundingBox) -> KalmanState:
        m, p = self.update_many(state.mean[None], state.covariance[None], box_to_xyah(measurement)[None])
        return KalmanState(m[0], p[0])

    def gating_distance(self, mean: np.ndarray, cov: np.ndarray, measurements: np.ndarray) -> np.ndarray:
        """Squared Mahalanobis distance of each measurement row to one state."""
        proj, s = self.project_many(mean[None], cov[None])
        d = np.asarray(measurements, dtype=np.float64).reshape(-1, NDIM) - proj[0]
        chol = np.linalg.cholesky(s[0])
        sol = np.linalg.solve(chol, d.T)
        return np.sum(sol * sol, axis=0)


_default = KalmanFilter()


def kalman_predict(state: KalmanState, config: KalmanConfig | None = None) -> KalmanState:
    return (KalmanFilter(config) if config else _default).predict(state)


def kalman_update(state: KalmanState, measurement: BoundingBox, config: KalmanConfig | None = None) -> KalmanState:
    return (KalmanFilter(config) if config else _default).update(state, measurement)
