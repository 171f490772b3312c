"""Planar differential-drive vehicle kinematics, Jacobians, and noise bundles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(psi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(psi + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass
class VehicleState:
    x: float
    y: float
    psi: float  # heading, kept in (-pi, pi]


@dataclass
class ControlInput:
    v: float      # speed, m/s, >= 0
    omega: float  # yaw rate, rad/s


@dataclass
class NoiseParams:
    """Standard deviations of all simulated noise sources (all >= 0)."""

    sigma_v: float = 0.3       # speed, m/s
    sigma_omega: float = 0.005  # yaw rate, rad/s
    sigma_range: float = 0.1   # range measurement, m
    sigma_wall: float = 0.05   # wall-distance sensor, m
    sigma_drop: float = 0.0    # landmark placement, m

    def __post_init__(self):
        for name in ("sigma_v", "sigma_omega", "sigma_range", "sigma_wall", "sigma_drop"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def vehicle_derivative(state: VehicleState, u: ControlInput):
    """Time derivative (xdot, ydot, psidot) of the unicycle model."""
    return (u.v * math.cos(state.psi), u.v * math.sin(state.psi), u.omega)


def state_jacobian(state: VehicleState, u: ControlInput) -> np.ndarray:
    """Jacobian of the state equation w.r.t. (x, y, psi)."""
    return np.array([
        [0.0, 0.0, -u.v * math.sin(state.psi)],
        [0.0, 0.0, u.v * math.cos(state.psi)],
        [0.0, 0.0, 0.0],
    ])


def control_jacobian(state: VehicleState) -> np.ndarray:
    """Jacobian of the state equation w.r.t. (v, omega); maps control-space
    noise covariance diag(sigma_v^2, sigma_omega^2) into state space."""
    return np.array([
        [math.cos(state.psi), 0.0],
        [math.sin(state.psi), 0.0],
        [0.0, 1.0],
    ])


def step_exact(x: float, y: float, psi: float, v: float, omega: float, dt: float):
    """Exact constant-control arc step of the unicycle model."""
    if abs(omega) < 1e-12:
        return (x + v * dt * math.cos(psi), y + v * dt * math.sin(psi), psi)
    psi1 = psi + omega * dt
    r = v / omega
    return (x + r * (math.sin(psi1) - math.sin(psi)),
            y - r * (math.cos(psi1) - math.cos(psi)),
            wrap_angle(psi1))
