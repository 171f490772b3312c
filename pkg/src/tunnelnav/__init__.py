"""Range-beacon navigation for GPS-denied tunnels: EKF mission simulation,
an uncertainty surrogate with exact MILP inversion, and drop-schedule
planning for three levels of tunnel information."""

from .geometry import TunnelTopology, Turn, build_tunnel, has_los, pose_at
from .inverse import InverseSolution, solve_inverse
from .kernels import BACKEND
from .planner import (DropEvent, DropSchedule, adjust_full_topology,
                      plan_straight, plan_with_turn_count, stagger_schedule)
from .simulator import MissionParams, run_mission, run_monte_carlo
from .surrogate import MlpNetwork, generate_dataset, load_weights, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DropEvent", "DropSchedule", "InverseSolution",
    "MissionParams", "MlpNetwork", "TunnelTopology", "Turn",
    "adjust_full_topology", "build_tunnel", "generate_dataset", "has_los",
    "load_weights", "plan_straight", "plan_with_turn_count", "pose_at",
    "run_mission", "run_monte_carlo", "solve_inverse", "stagger_schedule",
    "train",
]
