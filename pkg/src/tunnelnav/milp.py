"""Big-M MILP encoding of the trained ReLU surrogate and a best-first
branch-and-bound solver over the activation binaries.

Per hidden/output neuron j of layer k the encoding carries
    W_k y_{k-1} + b_k = y_k - yneg_k,   y_k <= M z,   yneg_k <= Mneg (1 - z),
with per-neuron interval bounds instead of one global constant; neurons whose
pre-activation interval has a definite sign get M or Mneg equal to zero, which
pins the corresponding slack part and eliminates the binary entirely.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .lp import LpResult, solve_lp
from .surrogate import MlpNetwork, normalize

DEFAULT_EPS = 0.01


@dataclass
class MilpModel:
    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    binary_idx: list[int]
    lambda_var: int
    output_var: int
    t_var: int
    pe_norm: float
    lam_range_norm: tuple[float, float]
    z_neurons: list[tuple[int, int]] = field(default_factory=list)
    var_names: list[str] = field(default_factory=list)
    out_interval: tuple[float, float] = (0.0, math.inf)

    @property
    def interval_bound(self) -> float:
        """Distance from the target to the interval-propagated output range;
        a valid lower bound on the deviation objective."""
        lo, hi = self.out_interval
        return max(0.0, self.pe_norm - hi, lo - self.pe_norm)

    @property
    def n_vars(self) -> int:
        return len(self.c)


class InfeasibleSubproblem(Exception):
    """A branching clip emptied some neuron's pre-activation interval."""


def compute_neuron_bounds(net: MlpNetwork, fixed_raw, lam_range_norm,
                          clips: dict | None = None):
    """Interval forward pass: per-layer pre-activation bounds given the five
    fixed inputs (point intervals) and the normalized overlap-factor range.

    clips maps (layer, neuron) -> 0/1 branching decisions; an active clip
    intersects the interval with [0, inf) (or (-inf, 0]) and propagates the
    tightening downstream. Raises InfeasibleSubproblem on an empty interval.
    """
    xn_fixed = net.normalize_inputs(np.concatenate([fixed_raw, [0.0]]))[0]
    lam_lo_n, lam_hi_n = lam_range_norm
    if clips:
        # first-hidden-layer pre-activations are affine in lambda, so their
        # clips project back to exact lambda sub-intervals
        w1, b1 = net.weights[0], net.biases[0]
        for (ck, cj), val in clips.items():
            if ck != 0:
                continue
            g = float(w1[cj, 5])
            h = float(w1[cj, :5] @ xn_fixed[:5] + b1[cj])
            if abs(g) < 1e-14:
                if (val and h < -1e-12) or (not val and h > 1e-12):
                    raise InfeasibleSubproblem
                continue
            root = -h / g
            if (val and g > 0) or (not val and g < 0):
                lam_lo_n = max(lam_lo_n, root)
            else:
                lam_hi_n = min(lam_hi_n, root)
        if lam_lo_n > lam_hi_n + 1e-12:
            raise InfeasibleSubproblem
    lo = np.array([*xn_fixed[:5], lam_lo_n])
    hi = np.array([*xn_fixed[:5], lam_hi_n])
    pre_bounds = []
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        wp = np.maximum(w, 0.0)
        wm = np.minimum(w, 0.0)
        pre_lo = wp @ lo + wm @ hi + b
        pre_hi = wp @ hi + wm @ lo + b
        if clips:
            for (ck, cj), val in clips.items():
                if ck != k:
                    continue
                if val:
                    pre_lo[cj] = max(pre_lo[cj], 0.0)
                else:
                    pre_hi[cj] = min(pre_hi[cj], 0.0)
                if pre_lo[cj] > pre_hi[cj] + 1e-12:
                    raise InfeasibleSubproblem
        pre_bounds.append((pre_lo, pre_hi))
        lo = np.maximum(pre_lo, 0.0)
        hi = np.maximum(pre_hi, 0.0)
    return pre_bounds, (lam_lo_n, lam_hi_n)


def encode_relu_milp(net: MlpNetwork, fixed_raw, p_e: float,
                     eps: float = DEFAULT_EPS,
                     lam_range=None, clips: dict | None = None) -> MilpModel:
    """Build the inverse-problem MILP in normalized units.

    fixed_raw are the five mission inputs (v, sigma_v, rho_max, sigma_range,
    L); they must lie inside the network's normalization ranges. lam_range
    (raw units) defaults to [0, 1 - eps]; a point range encodes a fixed-lambda
    probe. clips carries branching decisions to tighten the encoding (see
    compute_neuron_bounds). Objective: minimize t >= |y3 - normalize(p_e)|.
    """
    fixed_raw = np.asarray(fixed_raw, dtype=float)
    if fixed_raw.shape != (5,):
        raise ValueError("expected the five fixed inputs")
    if eps <= 0:
        raise ValueError("eps must be positive")
    names = ("v", "sigma_v", "rho_max", "sigma_range", "L")
    for i, name in enumerate(names):
        lo, hi = net.in_norms[i]
        if not (lo - 1e-9 <= fixed_raw[i] <= hi + 1e-9):
            raise ValueError(
                f"fixed input {name}={fixed_raw[i]} outside the training "
                f"range [{lo}, {hi}] (extrapolation)")
    if lam_range is None:
        lam_range = (0.0, 1.0 - eps)
    lam_lo_n = float(normalize(lam_range[0], *net.in_norms[5]))
    lam_hi_n = float(normalize(lam_range[1], *net.in_norms[5]))
    pe_norm = float(normalize(p_e, *net.out_norm))
    xn_fixed = net.normalize_inputs(np.concatenate([fixed_raw, [0.0]]))[0][:5]

    pre_bounds, (lam_lo_n, lam_hi_n) = compute_neuron_bounds(
        net, fixed_raw, (lam_lo_n, lam_hi_n), clips=clips)
    sizes = net.sizes

    # variable layout: inputs, then per layer y and yneg, then t, then z's
    var_names = [f"x0_{i}" for i in range(sizes[0])]
    y_idx, yneg_idx = [], []
    for k in range(1, len(sizes)):
        y_idx.append(list(range(len(var_names), len(var_names) + sizes[k])))
        var_names += [f"y{k}_{j}" for j in range(sizes[k])]
        yneg_idx.append(list(range(len(var_names), len(var_names) + sizes[k])))
        var_names += [f"yneg{k}_{j}" for j in range(sizes[k])]
    t_var = len(var_names)
    var_names.append("t")

    lower = np.zeros(len(var_names))
    upper = np.zeros(len(var_names))
    lower[:5] = xn_fixed
    upper[:5] = xn_fixed
    lower[5] = lam_lo_n
    upper[5] = lam_hi_n

    ambiguous: list[tuple[int, int]] = []
    for k in range(len(sizes) - 1):
        pre_lo, pre_hi = pre_bounds[k]
        for j in range(sizes[k + 1]):
            # relu is monotone: y in [relu(lo), relu(hi)], yneg in the mirror
            lower[y_idx[k][j]] = max(0.0, float(pre_lo[j]))
            upper[y_idx[k][j]] = max(0.0, float(pre_hi[j]))
            lower[yneg_idx[k][j]] = max(0.0, float(-pre_hi[j]))
            upper[yneg_idx[k][j]] = max(0.0, float(-pre_lo[j]))
            if pre_lo[j] < -1e-12 and pre_hi[j] > 1e-12:
                ambiguous.append((k, j))
    # binaries go after t, one per sign-ambiguous neuron
    binary_idx: list[int] = []
    z_index_map: dict[tuple[int, int], int] = {}
    for key in ambiguous:
        z_index_map[key] = len(var_names)
        binary_idx.append(len(var_names))
        var_names.append(f"z{key[0] + 1}_{key[1]}")
    lower = np.concatenate([lower, np.zeros(len(binary_idx))])
    upper = np.concatenate([upper, np.ones(len(binary_idx))])

    n_vars = len(var_names)
    a_eq_rows, b_eq_vals = [], []
    # fixed-input equalities
    for i in range(5):
        row = np.zeros(n_vars)
        row[i] = 1.0
        a_eq_rows.append(row)
        b_eq_vals.append(xn_fixed[i])
    # layer equations: y_k - yneg_k - W y_{k-1} = b_k
    prev_idx = list(range(sizes[0]))
    for k in range(len(sizes) - 1):
        w, b = net.weights[k], net.biases[k]
        for j in range(sizes[k + 1]):
            row = np.zeros(n_vars)
            row[y_idx[k][j]] = 1.0
            row[yneg_idx[k][j]] = -1.0
            for i, pi in enumerate(prev_idx):
                row[pi] = -w[j, i]
            a_eq_rows.append(row)
            b_eq_vals.append(float(b[j]))
        prev_idx = y_idx[k]

    a_ub_rows, b_ub_vals = [], []
    for (k, j), zi in z_index_map.items():
        m_pos = upper[y_idx[k][j]]
        m_neg = upper[yneg_idx[k][j]]
        row = np.zeros(n_vars)
        row[y_idx[k][j]] = 1.0
        row[zi] = -m_pos
        a_ub_rows.append(row)
        b_ub_vals.append(0.0)
        row = np.zeros(n_vars)
        row[yneg_idx[k][j]] = 1.0
        row[zi] = m_neg
        a_ub_rows.append(row)
        b_ub_vals.append(m_neg)
    out_var = y_idx[-1][0]
    # epigraph rows for |y3 - pe_norm|
    row = np.zeros(n_vars)
    row[out_var] = 1.0
    row[t_var] = -1.0
    a_ub_rows.append(row)
    b_ub_vals.append(pe_norm)
    row = np.zeros(n_vars)
    row[out_var] = -1.0
    row[t_var] = -1.0
    a_ub_rows.append(row)
    b_ub_vals.append(-pe_norm)

    t_cap = max(abs(upper[out_var] - pe_norm), abs(pe_norm)) + 1.0
    upper[t_var] = t_cap

    c = np.zeros(n_vars)
    c[t_var] = 1.0
    out_lo, out_hi = pre_bounds[-1]
    return MilpModel(
        c=c, a_eq=np.array(a_eq_rows), b_eq=np.array(b_eq_vals),
        a_ub=np.array(a_ub_rows), b_ub=np.array(b_ub_vals),
        lower=lower, upper=upper, binary_idx=binary_idx,
        lambda_var=5, output_var=out_var, t_var=t_var, pe_norm=pe_norm,
        lam_range_norm=(lam_lo_n, lam_hi_n), z_neurons=ambiguous,
        var_names=var_names,
        out_interval=(max(0.0, float(out_lo[0])), max(0.0, float(out_hi[0]))))


def substitution_solution(model: MilpModel, net: MlpNetwork) -> np.ndarray | None:
    """Direct solution when no binaries are free: layer equations are solved
    by forward substitution, the sign split decided by the zero M bounds.
    Returns None when some neuron remains ambiguous or a bound is violated."""
    if model.binary_idx:
        return None
    x = np.zeros(model.n_vars)
    x[:5] = model.lower[:5]
    if abs(model.upper[5] - model.lower[5]) > 1e-12:
        return None
    x[5] = model.lower[5]
    sizes = net.sizes
    a = x[:6].copy()
    pos = 6
    for k in range(len(sizes) - 1):
        pre = net.weights[k] @ a + net.biases[k]
        nk = sizes[k + 1]
        y = np.maximum(pre, 0.0)
        yneg = np.maximum(-pre, 0.0)
        if np.any(y > model.upper[pos:pos + nk] + 1e-7) or \
                np.any(yneg > model.upper[pos + nk:pos + 2 * nk] + 1e-7):
            return None
        x[pos:pos + nk] = y
        x[pos + nk:pos + 2 * nk] = yneg
        a = y
        pos += 2 * nk
    x[model.t_var] = abs(x[model.output_var] - model.pe_norm)
    if np.any(model.a_ub @ x > model.b_ub + 1e-7):
        return None
    return x


@dataclass
class MilpResult:
    status: str
    x: np.ndarray | None
    objective: float     # value of the model objective (c @ x)
    nodes: int
    lp_iterations: int
    gap: float


def _solve_model_lp(model: MilpModel) -> LpResult:
    return solve_lp(model.c, model.a_eq, model.b_eq, model.a_ub, model.b_ub,
                    model.lower, model.upper)


def solve_milp_model(model: MilpModel, net: MlpNetwork | None = None,
                     gap: float = 1e-6, max_nodes: int = 200000,
                     encode_fn=None, warm_lambda_n=None) -> MilpResult:
    """Best-first branch and bound over the sign-ambiguous neurons.

    Node bound: LP relaxation of the node's own encoding. Branching picks the
    most fractional activation binary; each child re-runs the interval
    propagation with the branching decision clipped in (encode_fn(clips) ->
    MilpModel), so fixed activations tighten every downstream big-M bound.
    Incumbents come from the forward pass at each node's relaxation lambda
    (feasible for any lambda) and an optional warm-start lambda.
    """
    if not model.binary_idx:
        if net is not None:
            x = substitution_solution(model, net)
            if x is not None:
                return MilpResult("optimal", x, float(model.c @ x), 1, 0, 0.0)
        res = _solve_model_lp(model)
        if res.status != "optimal":
            return MilpResult(res.status, None, math.inf, 1, res.iterations,
                              math.inf)
        return MilpResult("optimal", res.x, res.objective, 1, res.iterations, 0.0)

    if net is None:
        raise ValueError("branch and bound needs the network for repair")
    lam_lo_n, lam_hi_n = model.lam_range_norm
    xn_fixed = model.lower[:5]

    def deviation(lam_n: float) -> float:
        xn = np.concatenate([xn_fixed, [lam_n]])
        return abs(float(net.forward_normalized(xn[None, :])[0]) - model.pe_norm)

    nodes = 0
    lp_iters = 0
    best_t = math.inf
    best_lam_n = None

    def consider(lam_n):
        nonlocal best_t, best_lam_n
        lam_n = min(max(lam_n, lam_lo_n), lam_hi_n)
        t_val = deviation(lam_n)
        if t_val < best_t:
            best_t = t_val
            best_lam_n = lam_n

    if warm_lambda_n is not None:
        consider(float(warm_lambda_n))

    root = _solve_model_lp(model)
    nodes += 1
    lp_iters += root.iterations
    if root.status != "optimal":
        return MilpResult(root.status, None, math.inf, nodes, lp_iters, math.inf)

    heap = [(root.objective, 0, {}, model, root.x)]
    counter = 1
    while heap and nodes < max_nodes:
        bound, _, clips, m_node, x_lp = heapq.heappop(heap)
        if bound >= best_t - gap:
            break
        consider(float(x_lp[m_node.lambda_var]))
        if not m_node.binary_idx:
            continue
        zvals = x_lp[m_node.binary_idx]
        frac = np.abs(zvals - np.round(zvals))
        pick = int(np.argmax(frac))
        if frac[pick] <= 1e-6:
            continue  # integral node; its lambda was already repaired exactly
        neuron = m_node.z_neurons[pick]
        for val in (0, 1):
            child_clips = dict(clips)
            child_clips[neuron] = val
            try:
                if encode_fn is not None:
                    m_child = encode_fn(child_clips)
                else:
                    m_child = _fix_binary(m_node, pick, val)
            except InfeasibleSubproblem:
                nodes += 1
                continue
            if m_child.interval_bound >= best_t - gap:
                nodes += 1
                continue  # interval bound already prunes; skip the LP
            res = _solve_model_lp(m_child)
            nodes += 1
            lp_iters += res.iterations
            if res.status != "optimal":
                continue
            child_bound = max(res.objective, m_child.interval_bound)
            if child_bound < best_t - gap:
                heapq.heappush(heap, (child_bound, counter, child_clips,
                                      m_child, res.x))
                counter += 1

    final_gap = 0.0
    if heap:
        final_gap = max(0.0, best_t - heap[0][0])
    if best_lam_n is None:
        return MilpResult("infeasible", None, math.inf, nodes, lp_iters, math.inf)
    x_best = feasible_point_at(model, net, best_lam_n)
    return MilpResult("optimal", x_best, best_t, nodes, lp_iters, final_gap)


def _fix_binary(model: MilpModel, pick: int, val: int) -> MilpModel:
    """Fallback child when no re-encoder is given: pin one binary's bounds."""
    import dataclasses
    lower = model.lower.copy()
    upper = model.upper.copy()
    zvar = model.binary_idx[pick]
    lower[zvar] = float(val)
    upper[zvar] = float(val)
    return dataclasses.replace(model, lower=lower, upper=upper)


def feasible_point_at(model: MilpModel, net: MlpNetwork, lam_n: float):
    """Exact feasible MILP point from a forward pass at normalized lambda;
    feasible for any lambda in the model's range (any activation pattern is
    admissible with its own binaries)."""
    lam_n = min(max(lam_n, model.lam_range_norm[0]), model.lam_range_norm[1])
    x = np.zeros(model.n_vars)
    x[:5] = model.lower[:5]
    x[5] = lam_n
    sizes = net.sizes
    a = x[:6].copy()
    pos = 6
    acts = []
    for k in range(len(sizes) - 1):
        pre = net.weights[k] @ a + net.biases[k]
        nk = sizes[k + 1]
        x[pos:pos + nk] = np.maximum(pre, 0.0)
        x[pos + nk:pos + 2 * nk] = np.maximum(-pre, 0.0)
        acts.append(pre > 0.0)
        a = x[pos:pos + nk]
        pos += 2 * nk
    x[model.t_var] = abs(x[model.output_var] - model.pe_norm)
    for zi, (layer, j) in zip(model.binary_idx, model.z_neurons):
        x[zi] = 1.0 if acts[layer][j] else 0.0
    return x
