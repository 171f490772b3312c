"""Inverse problem: pick the overlap factor whose predicted maximum position
uncertainty is closest to the target, three mutually cross-checking ways:
branch-and-bound on the MILP encoding, exact piecewise-linear propagation of
the network restricted to the overlap-factor line, and dense grid search."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .milp import DEFAULT_EPS, MilpModel, encode_relu_milp, solve_milp_model
from .surrogate import MlpNetwork, denormalize, normalize


@dataclass
class PwlPiece:
    lo: float
    hi: float
    a: float  # slope, meters per unit lambda
    b: float  # intercept, meters

    def value(self, lam: float) -> float:
        return self.a * lam + self.b


@dataclass
class PwlFunction:
    """Exact denormalized network response over the overlap-factor interval."""

    pieces: list[PwlPiece]

    @property
    def breakpoints(self):
        return [p.lo for p in self.pieces] + [self.pieces[-1].hi]

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.empty(lam.shape)
        los = np.array([p.lo for p in self.pieces])
        idx = np.clip(np.searchsorted(los, lam, side="right") - 1, 0,
                      len(self.pieces) - 1)
        for i, p in enumerate(self.pieces):
            mask = idx == i
            out[mask] = p.a * lam[mask] + p.b
        return out if out.ndim else float(out)


@dataclass
class InverseSolution:
    lambda_star: float
    p_max_pred: float
    objective: float      # (p_max_pred - p_e)^2, squared meters
    d_star: float
    method: str
    nodes: int = 0
    lp_iterations: int = 0
    wall_ms: float = 0.0
    gap: float = 0.0
    extrapolated: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "d_star": self.d_star,
            "p_max_pred": self.p_max_pred,
            "objective": self.objective,
            "nodes": self.nodes,
            "lp_iters": self.lp_iterations,
            "wall_ms": self.wall_ms,
            "method": self.method,
            "extrapolated": self.extrapolated,
        }


def _check_fixed_inputs(net: MlpNetwork, fixed_raw):
    names = ("v", "sigma_v", "rho_max", "sigma_range", "L")
    fixed_raw = np.asarray(fixed_raw, dtype=float)
    if fixed_raw.shape != (5,):
        raise ValueError("expected the five fixed inputs")
    for i, name in enumerate(names):
        lo, hi = net.in_norms[i]
        if not (lo - 1e-9 <= fixed_raw[i] <= hi + 1e-9):
            raise ValueError(
                f"fixed input {name}={fixed_raw[i]} outside the training "
                f"range [{lo}, {hi}] (extrapolation)")
    return fixed_raw


def pwl_propagate(net: MlpNetwork, fixed_raw, eps: float = DEFAULT_EPS,
                  lam_range=None) -> PwlFunction:
    """Propagate the affine family lambda -> inputs through every layer,
    splitting at each neuron zero crossing; exact over the lambda interval."""
    fixed_raw = _check_fixed_inputs(net, fixed_raw)
    if lam_range is None:
        lam_range = (0.0, 1.0 - eps)
    xn_fixed = net.normalize_inputs(np.concatenate([fixed_raw, [0.0]]))[0][:5]
    llo, lhi = net.in_norms[5]
    # normalized lambda is an affine map of raw lambda
    s = 2.0 / (lhi - llo)
    t = -2.0 * llo / (lhi - llo) - 1.0

    g0 = np.zeros(6)
    g0[5] = s
    h0 = np.concatenate([xn_fixed, [t]])
    pieces = [(float(lam_range[0]), float(lam_range[1]), g0, h0)]
    for w, b in zip(net.weights, net.biases):
        nxt = []
        for lo, hi, g, h in pieces:
            pg = w @ g
            ph = w @ h + b
            cuts = []
            for j in range(len(ph)):
                if abs(pg[j]) > 1e-14:
                    root = -ph[j] / pg[j]
                    if lo + 1e-12 < root < hi - 1e-12:
                        cuts.append(root)
            edges = [lo] + sorted(set(cuts)) + [hi]
            for a0, a1 in zip(edges[:-1], edges[1:]):
                mid = 0.5 * (a0 + a1)
                active = (pg * mid + ph) > 0.0
                nxt.append((a0, a1, pg * active, ph * active))
        pieces = nxt
    olo, ohi = net.out_norm
    scale = (ohi - olo) / 2.0
    out = [PwlPiece(lo=lo, hi=hi, a=float(g[0] * scale),
                    b=float((h[0] + 1.0) * scale + olo))
           for lo, hi, g, h in pieces]
    return PwlFunction(pieces=out)


def solve_inverse_exact(pwl: PwlFunction, p_e: float) -> InverseSolution:
    """Closed-form minimum of (f(lambda) - p_e)^2 over the pieces; ties break
    toward the smallest lambda (fewest landmarks)."""
    t0 = time.perf_counter()
    best_obj = math.inf
    best_lam = None
    for piece in pwl.pieces:
        candidates = [piece.lo, piece.hi]
        if abs(piece.a) > 1e-15:
            root = (p_e - piece.b) / piece.a
            if piece.lo <= root <= piece.hi:
                candidates.append(root)
        for lam in candidates:
            obj = (piece.value(lam) - p_e) ** 2
            if obj < best_obj - 1e-15 or \
                    (obj < best_obj + 1e-15 and
                     (best_lam is None or lam < best_lam - 1e-15)):
                best_obj = min(best_obj, obj)
                best_lam = lam
    pred = float(pwl(np.array([best_lam]))[0])
    return InverseSolution(
        lambda_star=float(best_lam), p_max_pred=pred,
        objective=(pred - p_e) ** 2, d_star=0.0, method="pwl",
        nodes=len(pwl.pieces),
        wall_ms=(time.perf_counter() - t0) * 1e3)


def solve_inverse_grid(net: MlpNetwork, fixed_raw, p_e: float,
                       eps: float = DEFAULT_EPS, n: int = 10001,
                       lam_range=None) -> InverseSolution:
    """Dense grid oracle; argmin with first-hit (smallest lambda) ties."""
    fixed_raw = _check_fixed_inputs(net, fixed_raw)
    t0 = time.perf_counter()
    if lam_range is None:
        lam_range = (0.0, 1.0 - eps)
    lams = np.linspace(lam_range[0], lam_range[1], n)
    x = np.column_stack([np.tile(fixed_raw, (n, 1)), lams])
    preds = net.forward(x)
    objs = (preds - p_e) ** 2
    i = int(np.argmin(objs))
    return InverseSolution(
        lambda_star=float(lams[i]), p_max_pred=float(preds[i]),
        objective=float(objs[i]), d_star=0.0, method="grid",
        wall_ms=(time.perf_counter() - t0) * 1e3)


def _refined_grid_incumbent(net: MlpNetwork, fixed_raw, pe_norm: float,
                            lo: float, hi: float):
    """Near-optimal lambda used to warm-start the branch and bound.

    When the response crosses the target, the first sign-change bracket is
    bisected (smallest root, machine precision); otherwise the grid argmin is
    zoomed. Scanning upward realizes the smallest-lambda tie-break.
    """
    xn_fixed = net.normalize_inputs(np.concatenate([fixed_raw, [0.0]]))[0][:5]

    def signed(lams):
        lams = np.atleast_1d(lams)
        lam_n = normalize(lams, *net.in_norms[5])
        xn = np.column_stack([np.tile(xn_fixed, (len(lams), 1)), lam_n])
        return net.forward_normalized(xn) - pe_norm

    grid = np.linspace(lo, hi, 2049)
    g = signed(grid)
    flips = np.flatnonzero(g[:-1] * g[1:] <= 0.0)
    if flips.size:
        a, b = grid[flips[0]], grid[flips[0] + 1]
        ga = g[flips[0]]
        for _ in range(80):
            mid = 0.5 * (a + b)
            gm = float(signed(mid)[0])
            if ga * gm <= 0.0:
                b = mid
            else:
                a, ga = mid, gm
        return 0.5 * (a + b)
    # no crossing: zoom toward the first grid argmin
    a, b = lo, hi
    best_lam = lo
    for n_pts in (2049, 65, 65, 65):
        lams = np.linspace(a, b, n_pts)
        devs = np.abs(signed(lams))
        i = int(np.argmax(devs <= devs.min() + 1e-12))
        best_lam = float(lams[i])
        step = (b - a) / (n_pts - 1)
        a = max(lo, best_lam - step)
        b = min(hi, best_lam + step)
        if b - a < 1e-13:
            break
    return best_lam


def solve_inverse_milp(net: MlpNetwork, fixed_raw, p_e: float,
                       eps: float = DEFAULT_EPS, gap: float = 1e-9,
                       lam_range=None) -> InverseSolution:
    """Minimize the deviation t by best-first branch and bound.

    The incumbent is warm-started from an ascending refined grid scan, which
    both collapses the tree for root-touching instances (the t >= 0 relaxation
    bound then prunes immediately) and realizes the smallest-lambda tie-break:
    scanning upward picks the lowest lambda among equal-deviation optima, and
    later incumbents replace it only on strict improvement.
    """
    t0 = time.perf_counter()
    lam_lo, lam_hi = lam_range if lam_range is not None else (0.0, 1.0 - eps)
    model = encode_relu_milp(net, fixed_raw, p_e, eps,
                             lam_range=(lam_lo, lam_hi))

    def encode_fn(clips):
        return encode_relu_milp(net, fixed_raw, p_e, eps,
                                lam_range=(lam_lo, lam_hi), clips=clips)

    warm_n = None
    if lam_hi > lam_lo:
        lam_seed = _refined_grid_incumbent(net, fixed_raw, model.pe_norm,
                                           lam_lo, lam_hi)
        warm_n = float(normalize(lam_seed, *net.in_norms[5]))
    res = solve_milp_model(model, net, gap=gap, encode_fn=encode_fn,
                           warm_lambda_n=warm_n)
    if res.status != "optimal":
        raise RuntimeError(f"branch and bound failed: {res.status}")

    lam_n = float(res.x[model.lambda_var])
    lam = float(denormalize(lam_n, *net.in_norms[5]))
    lam = min(max(lam, lam_lo), lam_hi)
    pred = float(net.forward(np.concatenate([fixed_raw, [lam]])))
    train_hi = float(net.in_norms[5][1])
    return InverseSolution(
        lambda_star=lam, p_max_pred=pred, objective=(pred - p_e) ** 2,
        d_star=0.0, method="milp", nodes=res.nodes,
        lp_iterations=res.lp_iterations, gap=res.gap,
        wall_ms=(time.perf_counter() - t0) * 1e3,
        extrapolated=lam > train_hi + 1e-9)


def solve_inverse(net: MlpNetwork, fixed_raw, p_e: float,
                  eps: float = DEFAULT_EPS, method: str = "milp",
                  grid_n: int = 10001) -> InverseSolution:
    """Solve for the overlap factor; d_star = rho_max * (1 - lambda_star)."""
    fixed_raw = np.asarray(fixed_raw, dtype=float)
    if method == "milp":
        sol = solve_inverse_milp(net, fixed_raw, p_e, eps)
    elif method == "pwl":
        t0 = time.perf_counter()
        pwl = pwl_propagate(net, fixed_raw, eps)
        sol = solve_inverse_exact(pwl, p_e)
        sol.wall_ms = (time.perf_counter() - t0) * 1e3
    elif method == "grid":
        sol = solve_inverse_grid(net, fixed_raw, p_e, eps, n=grid_n)
    else:
        raise ValueError(f"unknown method {method!r}")
    rho_max = float(fixed_raw[2])
    sol.d_star = rho_max * (1.0 - sol.lambda_star)
    train_hi = float(net.in_norms[5][1])
    sol.extrapolated = sol.lambda_star > train_hi + 1e-9
    return sol
