"""Continuous-discrete EKF over the augmented state (vehicle pose plus dropped
landmark positions), with dynamic augmentation and position-uncertainty metrics.

The two landmarks known at the tunnel start are exact constants, not state
entries; dropped landmarks enter the state at drop time with full cross
correlation to the vehicle position estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

PSD_FLOOR = -1e-9


@dataclass
class RangeMeasurement:
    """One range measurement; landmark_id is 'a', 'b', or a dropped index."""

    landmark_id: object
    rho: float
    t: float = 0.0

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("range measurement must be nonnegative")


@dataclass
class UncertaintyTrace:
    """Sampled P(t) series with its running maximum."""

    t: list[float] = field(default_factory=list)
    p: list[float] = field(default_factory=list)
    p_running_max: list[float] = field(default_factory=list)

    def append(self, t: float, p: float):
        prev = self.p_running_max[-1] if self.p_running_max else 0.0
        self.t.append(t)
        self.p.append(p)
        self.p_running_max.append(max(prev, p))

    @property
    def p_max(self) -> float:
        return self.p_running_max[-1] if self.p_running_max else 0.0


class EkfState:
    """Estimate vector [x, y, psi, l1x, l1y, ...] with covariance and the
    registry of dropped landmarks."""

    def __init__(self, xhat, cov, known_a, known_b):
        self.xhat = np.asarray(xhat, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.known_a = np.asarray(known_a, dtype=float)
        self.known_b = np.asarray(known_b, dtype=float)
        self.drop_times: list[float] = []

    @property
    def n_landmarks(self) -> int:
        return len(self.drop_times)

    @property
    def dim(self) -> int:
        return len(self.xhat)

    def landmark_estimate(self, i: int) -> np.ndarray:
        return self.xhat[3 + 2 * i: 5 + 2 * i]

    def position_covariance(self) -> np.ndarray:
        return self.cov[0:2, 0:2].copy()


def _check_psd(mat, name: str):
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T, atol=1e-9):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() < PSD_FLOOR:
        raise ValueError(f"{name} must be positive semidefinite")
    return mat


def ekf_init(pose_estimate, pose_covariance, known_a, known_b) -> EkfState:
    """Initialize the filter with the vehicle pose only; the two known
    landmarks are stored as exact constants."""
    pose = np.asarray(pose_estimate, dtype=float)
    if pose.shape != (3,):
        raise ValueError("pose estimate must be (x, y, psi)")
    cov = _check_psd(pose_covariance, "initial pose covariance")
    if cov.shape != (3, 3):
        raise ValueError("initial covariance must be 3x3")
    a = np.asarray(known_a, dtype=float)
    b = np.asarray(known_b, dtype=float)
    if np.hypot(*(a - b)) < 1e-9:
        raise ValueError("known landmarks must be distinct")
    return EkfState(pose.copy(), cov.copy(), a, b)


def ekf_predict(state: EkfState, v: float, omega: float, dt: float,
                sigma_v: float, sigma_omega: float, substeps: int = 1) -> EkfState:
    """Propagate estimate and covariance over dt (in place; returns state)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    kernels.ekf_predict(state.xhat, state.cov, v, omega,
                        sigma_v, sigma_omega, dt, substeps)
    return state


def ekf_update_range(state: EkfState, z: RangeMeasurement,
                     sigma_range: float) -> bool:
    """Scalar range update (in place). Returns False when skipped because the
    predicted range is within 1e-6 of zero."""
    if z.landmark_id == "a":
        idx, lx, ly = -1, state.known_a[0], state.known_a[1]
    elif z.landmark_id == "b":
        idx, lx, ly = -1, state.known_b[0], state.known_b[1]
    elif isinstance(z.landmark_id, (int, np.integer)) and \
            0 <= z.landmark_id < state.n_landmarks:
        idx, lx, ly = 3 + 2 * int(z.landmark_id), 0.0, 0.0
    else:
        raise ValueError(f"unknown landmark id {z.landmark_id!r}")
    rho_hat = kernels.ekf_range_update(state.xhat, state.cov, idx, lx, ly,
                                       z.rho, sigma_range * sigma_range)
    return rho_hat >= 0.0


def ekf_augment_landmark(state: EkfState, drop_estimate, drop_covariance,
                         t: float = 0.0) -> EkfState:
    """Append a dropped landmark (in place).

    The drop point is a rigid offset of the pose estimate, so the new block is
    the vehicle position covariance plus the placement covariance and the
    cross terms are copied from the vehicle position rows.
    """
    dcov = _check_psd(drop_covariance, "drop covariance")
    if dcov.shape != (2, 2):
        raise ValueError("drop covariance must be 2x2")
    est = np.asarray(drop_estimate, dtype=float)
    n = state.dim
    xh2 = np.empty(n + 2)
    xh2[:n] = state.xhat
    xh2[n:] = est
    cv2 = np.empty((n + 2, n + 2))
    cv2[:n, :n] = state.cov
    cv2[n:, :n] = state.cov[0:2, :]
    cv2[:n, n:] = state.cov[:, 0:2]
    cv2[n:, n:] = state.cov[0:2, 0:2] + dcov
    state.xhat = xh2
    state.cov = cv2
    state.drop_times.append(t)
    return state


def ekf_linear_update(state: EkfState, h_indices, h_values, innovation: float,
                      r_var: float) -> EkfState:
    """Generic scalar update with a sparse measurement row (in place)."""
    h = np.zeros(state.dim)
    h[list(h_indices)] = h_values
    c = state.cov @ h
    s = float(h @ c) + r_var
    k = c / s
    state.xhat += k * innovation
    state.cov -= np.outer(k, c)
    state.cov[:, :] = (state.cov + state.cov.T) * 0.5
    return state


def sqrt_2x2(cov) -> np.ndarray:
    """Principal square root of a symmetric PSD 2x2 matrix, closed form."""
    cov = np.asarray(cov, dtype=float)
    tr = cov[0, 0] + cov[1, 1]
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    s = math.sqrt(max(det, 0.0))
    t2 = tr + 2.0 * s
    if t2 <= 0.0:
        return np.zeros((2, 2))
    t = math.sqrt(t2)
    return (cov + s * np.eye(2)) / t


def position_uncertainty(cov_p) -> float:
    """P = trace of the square root of the 2x2 position covariance."""
    cov_p = np.asarray(cov_p, dtype=float)
    tr = cov_p[0, 0] + cov_p[1, 1]
    det = cov_p[0, 0] * cov_p[1, 1] - cov_p[0, 1] * cov_p[1, 0]
    # analytic eigenvalues; reject genuinely indefinite inputs, clamp noise
    disc = math.sqrt(max((tr * 0.5) ** 2 - det, 0.0))
    lo = tr * 0.5 - disc
    if lo < PSD_FLOOR:
        raise ValueError("position covariance has a negative eigenvalue")
    det = max(det, 0.0)
    tr = max(tr, 0.0)
    return math.sqrt(max(tr + 2.0 * math.sqrt(det), 0.0))


def directional_uncertainty(cov_p, direction) -> float:
    """Uncertainty v^T Sigma_p^(1/2) v along a unit direction v."""
    v = np.asarray(direction, dtype=float)
    if abs(np.hypot(v[0], v[1]) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    root = sqrt_2x2(cov_p)
    return float(v @ root @ v)
