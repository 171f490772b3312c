"""Surrogate model of maximum position uncertainty: dataset generation from
seeded straight-tunnel simulations, min-max normalization, a 6-20-20-1 ReLU
network with forward inference, and mini-batch gradient training."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels

SIZES = (6, 20, 20, 1)
INPUT_NAMES = ("v", "sigma_v", "rho_max", "sigma_range", "L", "lambda")

# input domains used for dataset generation (lambda <= 0.7; tunnel length is
# floored at 10 m because sub-tick missions are degenerate)
V_DOMAIN = tuple(np.arange(2.0, 5.001, 0.5))
SIGMA_V_FACTORS = (0.1, 0.2)
RHO_MAX_DOMAIN = tuple(np.arange(50.0, 100.001, 5.0))
SIGMA_RANGE_DOMAIN = (0.1, 0.6, 1.1, 1.6, 2.1)
LAMBDA_DOMAIN = tuple(np.round(np.arange(0.0, 0.7001, 0.05), 10))
L_RANGE = (10.0, 600.0)


def normalize(value, lo: float, hi: float):
    """Affine map of [lo, hi] onto [-1, 1]."""
    if lo >= hi:
        raise ValueError("normalization range must satisfy lo < hi")
    return 2.0 * (np.asarray(value, dtype=float) - lo) / (hi - lo) - 1.0


def denormalize(value, lo: float, hi: float):
    """Exact inverse of normalize."""
    if lo >= hi:
        raise ValueError("normalization range must satisfy lo < hi")
    return (np.asarray(value, dtype=float) + 1.0) * (hi - lo) / 2.0 + lo


@dataclass
class MlpNetwork:
    """ReLU network with per-input and output normalization ranges.

    weights[k] has shape (n_k, n_{k-1}); every non-input node applies ReLU,
    including the output node, whose bias is fixed to zero.
    """

    weights: list
    biases: list
    in_norms: np.ndarray   # (6, 2) lo/hi per input
    out_norm: np.ndarray   # (2,) lo/hi for the output

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        sizes = self.sizes
        for k, w in enumerate(self.weights):
            if w.shape != (sizes[k + 1], sizes[k]):
                raise ValueError(f"layer {k + 1} weight shape {w.shape}")
        if np.any(self.biases[-1] != 0.0):
            raise ValueError("output bias is fixed to zero")
        self.in_norms = np.asarray(self.in_norms, dtype=float)
        self.out_norm = np.asarray(self.out_norm, dtype=float)
        if np.any(self.in_norms[:, 0] >= self.in_norms[:, 1]) or \
                self.out_norm[0] >= self.out_norm[1]:
            raise ValueError("normalization ranges must satisfy lo < hi")

    @property
    def sizes(self):
        return tuple([self.weights[0].shape[1]] +
                     [w.shape[0] for w in self.weights])

    def normalize_inputs(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = self.in_norms[:, 0]
        hi = self.in_norms[:, 1]
        return 2.0 * (x - lo) / (hi - lo) - 1.0

    def forward_normalized(self, xn):
        """Network output in normalized units for normalized inputs (m, 6)."""
        a = np.atleast_2d(np.asarray(xn, dtype=float)).T
        for w, b in zip(self.weights, self.biases):
            a = np.maximum(w @ a + b[:, None], 0.0)
        return a[0]

    def forward(self, x):
        """Predicted maximum position uncertainty (meters) for raw inputs."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        yn = self.forward_normalized(self.normalize_inputs(x))
        y = denormalize(yn, self.out_norm[0], self.out_norm[1])
        return float(y[0]) if single else y


def init_network(in_norms, out_norm, seed=0, sizes=SIZES) -> MlpNetwork:
    """Glorot-uniform weight init with zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(weights=weights, biases=biases,
                      in_norms=np.asarray(in_norms, dtype=float),
                      out_norm=np.asarray(out_norm, dtype=float))


def save_weights(net: MlpNetwork, path):
    data = {
        "sizes": list(net.sizes),
        "layers": [{"W": w.tolist(), "b": b.tolist()}
                   for w, b in zip(net.weights, net.biases)],
        "norms": {"in": net.in_norms.tolist(), "out": net.out_norm.tolist()},
    }
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_weights(path) -> MlpNetwork:
    with open(path) as fh:
        data = json.load(fh)
    return MlpNetwork(
        weights=[layer["W"] for layer in data["layers"]],
        biases=[layer["b"] for layer in data["layers"]],
        in_norms=np.asarray(data["norms"]["in"], dtype=float),
        out_norm=np.asarray(data["norms"]["out"], dtype=float))


@dataclass
class SampleSet:
    """Rows of (v, sigma_v, rho_max, sigma_range, L, lambda) -> p_max with
    train/val/test tags."""

    inputs: np.ndarray   # (n, 6)
    outputs: np.ndarray  # (n,)
    split: np.ndarray    # (n,) strings "train" / "val" / "test"

    def subset(self, tag: str):
        mask = self.split == tag
        return self.inputs[mask], self.outputs[mask]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("v,sigma_v,rho_max,sigma_range,L,lambda,p_max,split\n")
            for row, out, tag in zip(self.inputs, self.outputs, self.split):
                vals = [repr(float(x)) for x in row] + [repr(float(out)), tag]
                fh.write(",".join(vals) + "\n")

    @classmethod
    def from_csv(cls, path):
        rows, outs, tags = [], [], []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[:7] != ["v", "sigma_v", "rho_max", "sigma_range", "L",
                             "lambda", "p_max"]:
                raise ValueError("unexpected dataset CSV header")
            for line in fh:
                parts = line.strip().split(",")
                rows.append([float(x) for x in parts[:6]])
                outs.append(float(parts[6]))
                tags.append(parts[7])
        return cls(inputs=np.array(rows), outputs=np.array(outs),
                   split=np.array(tags))


@dataclass
class GenConfig:
    """Fixed simulation settings for dataset generation (straight tunnel)."""

    dt: float = 0.05
    measure_hz: float = 10.0
    offset: float = 10.0
    sigma_omega: float = 0.005
    sigma_drop: float = 0.0
    lookahead: float = 6.0
    omega_max: float = 1.0
    substeps: int = 1
    init_pos_var: float = 1e-4
    init_psi_var: float = 1e-6


def simulate_p_max(v, sigma_v, rho_max, sigma_range, length, lam, seed,
                   config: GenConfig = GenConfig()) -> float:
    """One seeded straight-tunnel mission; returns the observed p_max."""
    d = rho_max * (1.0 - lam)
    k = int(math.floor(length / d + 1e-12))
    drop_s = np.arange(1, k + 1, dtype=float) * d
    drop_mode = np.zeros(k, dtype=np.int32)
    drop_ds = np.zeros(k)
    measure_every = max(1, round(1.0 / (config.measure_hz * config.dt)))
    p_max, _, _, _ = kernels.run_straight_mission(
        length, v, sigma_v, config.sigma_omega, sigma_range,
        config.sigma_drop, rho_max, config.offset,
        drop_s, drop_mode, drop_ds,
        config.dt, measure_every, config.substeps,
        np.array([config.init_pos_var, config.init_pos_var,
                  config.init_psi_var]),
        config.lookahead, config.omega_max, seed)
    return float(p_max)


def _gen_worker(args):
    row, master_seed, idx, config = args
    seed = np.random.SeedSequence(master_seed, spawn_key=(idx,))
    return simulate_p_max(*row, seed=seed, config=config)


def generate_dataset(n: int, seed: int = 0, config: GenConfig = GenConfig(),
                     workers: int = 1,
                     split_fractions=(0.7, 0.2, 0.1)) -> SampleSet:
    """Sample inputs uniformly from the training domains and label each row
    with the p_max of one seeded straight-tunnel simulation at drop distance
    d = rho_max * (1 - lambda)."""
    if n <= 0:
        raise ValueError("sample count must be positive")
    rng = np.random.default_rng(seed)
    v = rng.choice(V_DOMAIN, size=n)
    sigma_v = rng.choice(SIGMA_V_FACTORS, size=n) * v
    rho = rng.choice(RHO_MAX_DOMAIN, size=n)
    sig_r = rng.choice(SIGMA_RANGE_DOMAIN, size=n)
    lam = rng.choice(LAMBDA_DOMAIN, size=n)
    length = rng.uniform(L_RANGE[0], L_RANGE[1], size=n)
    inputs = np.column_stack([v, sigma_v, rho, sig_r, length, lam])

    jobs = [(tuple(inputs[i]), seed, i, config) for i in range(n)]
    if workers > 1 and n > 1:
        chunk = max(1, n // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_gen_worker, jobs, chunksize=chunk))
    else:
        outputs = [_gen_worker(j) for j in jobs]

    order = rng.permutation(n)
    split = np.empty(n, dtype=object)
    n_train = int(round(split_fractions[0] * n))
    n_val = int(round(split_fractions[1] * n))
    split[order[:n_train]] = "train"
    split[order[n_train:n_train + n_val]] = "val"
    split[order[n_train + n_val:]] = "test"
    return SampleSet(inputs=inputs, outputs=np.asarray(outputs),
                     split=split.astype(str))


def norms_from_data(sample_set: SampleSet):
    """Per-column input ranges from the training split, and an output range
    padded so normalized targets stay strictly inside (0, 1): the output node
    carries a ReLU, so targets must map to nonnegative normalized values."""
    x, y = sample_set.subset("train")
    if len(y) == 0:
        raise ValueError("empty training split")
    in_norms = np.column_stack([x.min(axis=0), x.max(axis=0)])
    narrow = in_norms[:, 1] - in_norms[:, 0] < 1e-12
    in_norms[narrow, 0] -= 0.5
    in_norms[narrow, 1] += 0.5
    m, big = float(y.min()), float(y.max())
    span = max(big - m, 1e-6)
    hi = big + 0.05 * span
    lo = 2.0 * m - big - 0.15 * span
    return in_norms, np.array([lo, hi])


def loss_and_grads(net: MlpNetwork, xn: np.ndarray, yn: np.ndarray):
    """MSE on normalized targets and its parameter gradients (output bias is
    structurally zero and gets a zero gradient)."""
    a = [xn.T]
    zs = []
    for w, b in zip(net.weights, net.biases):
        z = w @ a[-1] + b[:, None]
        zs.append(z)
        a.append(np.maximum(z, 0.0))
    pred = a[-1][0]
    err = pred - yn
    m = len(yn)
    loss = float(np.mean(err ** 2))
    grad_ws, grad_bs = [], []
    delta = (2.0 / m) * err[None, :] * (zs[-1] > 0.0)
    for k in range(len(net.weights) - 1, -1, -1):
        grad_ws.append(delta @ a[k].T)
        grad_bs.append(delta.sum(axis=1))
        if k > 0:
            delta = (net.weights[k].T @ delta) * (zs[k - 1] > 0.0)
    grad_ws.reverse()
    grad_bs.reverse()
    grad_bs[-1] = np.zeros_like(grad_bs[-1])  # output bias fixed
    return loss, grad_ws, grad_bs


def train(sample_set: SampleSet, epochs: int = 200, batch_size: int = 64,
          lr: float = 0.01, momentum: float = 0.9, seed: int = 0,
          patience: int = 30, sizes=SIZES):
    """Mini-batch gradient descent with momentum on normalized MSE; returns
    (network with best validation MSE, history dict)."""
    x_tr, y_tr = sample_set.subset("train")
    if len(y_tr) == 0:
        raise ValueError("empty training split")
    x_val, y_val = sample_set.subset("val")
    if len(y_val) == 0:
        x_val, y_val = x_tr, y_tr

    in_norms, out_norm = norms_from_data(sample_set)
    net = init_network(in_norms, out_norm, seed=seed, sizes=sizes)
    xn_tr = net.normalize_inputs(x_tr)
    yn_tr = normalize(y_tr, out_norm[0], out_norm[1])
    xn_val = net.normalize_inputs(x_val)
    yn_val = normalize(y_val, out_norm[0], out_norm[1])

    rng = np.random.default_rng(seed + 1)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    history = {"train_mse": [], "val_mse": []}
    best_val = math.inf
    best_params = None
    stale = 0

    for epoch in range(epochs):
        order = rng.permutation(len(yn_tr))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            loss, gw, gb = loss_and_grads(net, xn_tr[idx], yn_tr[idx])
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"training diverged at epoch {epoch} (loss={loss})")
            epoch_loss += loss
            n_batches += 1
            for k in range(len(net.weights)):
                vel_w[k] = momentum * vel_w[k] - lr * gw[k]
                vel_b[k] = momentum * vel_b[k] - lr * gb[k]
                net.weights[k] += vel_w[k]
                net.biases[k] += vel_b[k]
        val_pred = net.forward_normalized(xn_val)
        val_mse = float(np.mean((val_pred - yn_val) ** 2))
        history["train_mse"].append(epoch_loss / max(n_batches, 1))
        history["val_mse"].append(val_mse)
        if val_mse < best_val - 1e-12:
            best_val = val_mse
            best_params = ([w.copy() for w in net.weights],
                           [b.copy() for b in net.biases])
            stale = 0
        else:
            stale += 1
            if patience and stale >= patience:
                break

    if best_params is not None:
        net.weights, net.biases = best_params
    history["best_val_mse"] = best_val
    return net, history


def holdout_rmse(net: MlpNetwork, sample_set: SampleSet, tag: str = "test"):
    """RMSE on normalized targets over one split."""
    x, y = sample_set.subset(tag)
    yn = normalize(y, net.out_norm[0], net.out_norm[1])
    pred = net.forward_normalized(net.normalize_inputs(x))
    return float(np.sqrt(np.mean((pred - yn) ** 2)))
