import math

import numpy as np
import pytest

from tunnelnav import surrogate
from tunnelnav.geometry import build_tunnel
from tunnelnav.simulator import MissionParams


def zigzag_waypoints(lengths, angles_deg):
    pts = [(0.0, 0.0)]
    heading = 0.0
    angles = [None] + list(angles_deg)
    for length, ang in zip(lengths, angles):
        if ang is not None:
            heading += math.radians(ang)
        pts.append((pts[-1][0] + length * math.cos(heading),
                    pts[-1][1] + length * math.sin(heading)))
    return pts


# canonical 3-turn, 400 m acceptance tunnel (see decisions ledger)
TURNS_400_WAYPOINTS = zigzag_waypoints([110, 95, 105, 90], [55, -55, 55])


@pytest.fixture(scope="session")
def straight_400():
    return build_tunnel([(0.0, 0.0), (400.0, 0.0)], 30.0)


@pytest.fixture(scope="session")
def turns_400():
    return build_tunnel(TURNS_400_WAYPOINTS, 30.0)


@pytest.fixture(scope="session")
def l_tunnel():
    return build_tunnel([(0.0, 0.0), (100.0, 0.0), (100.0, -100.0)], 20.0)


def params_7_1(**overrides) -> MissionParams:
    """Mission parameters of the straight-tunnel experiments (wall updates on
    in control mode keep the vehicle centered without touching P(t))."""
    base = dict(v=3.0, sigma_v=0.3, rho_max=90.0, sigma_range=0.1,
                p_e=0.3, offset=10.0, wall_update_hz=10.0, seed=20240)
    base.update(overrides)
    return MissionParams(**base)


@pytest.fixture(scope="session")
def desk_dataset():
    """Desk-scale dataset (10^4 seeded straight-tunnel missions)."""
    return surrogate.generate_dataset(10000, seed=20240, workers=2)


@pytest.fixture(scope="session")
def trained_surrogate(desk_dataset):
    net, history = surrogate.train(desk_dataset, epochs=400, batch_size=96,
                                   lr=0.015, seed=1, patience=60)
    return net, history


def random_network(rng, lam_hi=0.7):
    """Random 6-20-20-1 network with plausible normalization ranges."""
    weights, biases = [], []
    sizes = surrogate.SIZES
    for k in range(len(sizes) - 1):
        bound = math.sqrt(6.0 / (sizes[k] + sizes[k + 1]))
        weights.append(rng.uniform(-bound, bound, size=(sizes[k + 1], sizes[k])))
        biases.append(rng.uniform(-0.3, 0.3, size=sizes[k + 1]))
    biases[-1][:] = 0.0
    in_norms = np.array([[2.0, 5.0], [0.2, 1.0], [50.0, 100.0],
                         [0.1, 2.1], [10.0, 600.0], [0.0, lam_hi]])
    out_norm = np.array([-0.5, 5.0])
    return surrogate.MlpNetwork(weights=weights, biases=biases,
                                in_norms=in_norms, out_norm=out_norm)


def random_fixed_inputs(rng):
    return np.array([rng.uniform(2.0, 5.0), rng.uniform(0.2, 1.0),
                     rng.uniform(50.0, 100.0), rng.uniform(0.1, 2.1),
                     rng.uniform(10.0, 600.0)])
