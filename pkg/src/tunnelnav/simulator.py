"""Mission simulation: ground-truth propagation with noisy realized controls,
range sensing gated by distance and line of sight, landmark drop execution,
wall-update steering, metric extraction, and Monte Carlo batching."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ekf
from .ekf import RangeMeasurement, UncertaintyTrace
from .geometry import (TunnelTopology, cast_ray_distance, contains, pose_at,
                       segment_blocked)
from .planner import DropSchedule

TRACE_COLUMNS = ("t", "x_true", "y_true", "psi_true",
                 "x_est", "y_est", "psi_est", "P", "n_visible", "event")


class MissionAborted(RuntimeError):
    """Raised when the true vehicle leaves the tunnel during wall sensing."""


@dataclass
class MissionParams:
    v: float = 3.0
    sigma_v: float = 0.3
    sigma_omega: float = 0.005
    rho_max: float = 90.0
    sigma_range: float = 0.1
    sigma_wall: float = 0.05
    sigma_drop: float = 0.0
    p_e: float = 0.3
    lam: float | None = None
    offset: float = 10.0
    dt: float = 0.02
    measure_hz: float = 10.0
    wall_update_hz: float = 0.0
    wall_aiding: str = "control"  # "control" or "estimator"
    wall_kp: float = 1.0
    wall_kd: float = 2.0
    lookahead: float = 6.0
    omega_max: float = 1.0
    substeps: int = 1
    init_pos_var: float = 1e-4
    init_psi_var: float = 1e-6
    seed: int = 0
    check_los: bool = True  # differential-test hook; real missions keep it on

    def __post_init__(self):
        if self.v <= 0:
            raise ValueError("v must be positive")
        if self.rho_max <= 0:
            raise ValueError("rho_max must be positive")
        if self.lam is not None and not (0.0 <= self.lam < 1.0):
            raise ValueError("overlap factor must be in [0, 1)")
        if self.dt <= 0 or self.measure_hz <= 0:
            raise ValueError("dt and measure_hz must be positive")
        if self.wall_aiding not in ("control", "estimator"):
            raise ValueError("wall_aiding must be 'control' or 'estimator'")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass
class MissionTrace:
    t: np.ndarray
    x_true: np.ndarray
    y_true: np.ndarray
    psi_true: np.ndarray
    x_est: np.ndarray
    y_est: np.ndarray
    psi_est: np.ndarray
    p: np.ndarray
    n_visible: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    event: list[str]
    uncertainty: UncertaintyTrace
    drops: list[dict] = field(default_factory=list)
    measure_counts: list[int] = field(default_factory=list)

    @property
    def p_max(self) -> float:
        return self.uncertainty.p_max

    @property
    def terminal_error(self) -> tuple[float, float]:
        return (float(self.x_est[-1] - self.x_true[-1]),
                float(self.y_est[-1] - self.y_true[-1]))

    @property
    def min_visible_at_measure(self) -> int:
        return min(self.measure_counts) if self.measure_counts else 0

    def containment_fractions(self, n_sigma: float = 3.0):
        """Fractions of ticks with per-axis error inside its n-sigma bound."""
        ex = np.abs(self.x_est - self.x_true)
        ey = np.abs(self.y_est - self.y_true)
        fx = float(np.mean(ex <= n_sigma * self.sigma_x))
        fy = float(np.mean(ey <= n_sigma * self.sigma_y))
        return fx, fy

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for i in range(len(self.t)):
                row = [repr(float(v)) for v in
                       (self.t[i], self.x_true[i], self.y_true[i],
                        self.psi_true[i], self.x_est[i], self.y_est[i],
                        self.psi_est[i], self.p[i])]
                row.append(str(int(self.n_visible[i])))
                row.append(self.event[i])
                fh.write(",".join(row) + "\n")


class PathCursor:
    """Monotone projection of a moving point onto the centerline arc length."""

    def __init__(self, topology: TunnelTopology):
        self._topo = topology
        self.segment_index = 0

    def project(self, point) -> float:
        topo = self._topo
        cl = topo.centerline
        cum = topo.cum_s
        last = len(cl) - 2
        while True:
            i = self.segment_index
            p0 = cl[i]
            p1 = cl[i + 1]
            seg_len = cum[i + 1] - cum[i]
            ux = (p1[0] - p0[0]) / seg_len
            uy = (p1[1] - p0[1]) / seg_len
            tm = (point[0] - p0[0]) * ux + (point[1] - p0[1]) * uy
            if tm <= seg_len or i == last:
                return float(cum[i] + min(max(tm, 0.0), seg_len))
            self.segment_index += 1


def known_landmark_positions(topology: TunnelTopology, offset: float):
    """The two exactly-known landmarks flanking the path start."""
    p0, heading = pose_at(topology, 0.0)
    n = np.array([-math.sin(heading), math.cos(heading)])
    return p0 + offset * n, p0 - offset * n


def visible_landmarks(true_position, landmarks, topology: TunnelTopology,
                      rho_max: float, check_los: bool = True) -> list:
    """Ids of landmarks within sensing range (<= rho_max, boundary inclusive)
    and with line of sight to the vehicle. Landmarks outside the tunnel are
    never visible."""
    pos = np.asarray(true_position, dtype=float)
    out = []
    for lm_id, lm_pos in landmarks:
        d = math.hypot(pos[0] - lm_pos[0], pos[1] - lm_pos[1])
        if d > rho_max:
            continue
        if check_los:
            if not contains(topology, lm_pos):
                continue
            if segment_blocked(pos, lm_pos, topology):
                continue
        out.append(lm_id)
    return out


DERIV_BASELINE_S = 1.0  # noisy readings are differenced over at least this long


def wall_update(true_pose, topology: TunnelTopology, k_p: float, k_d: float,
                sigma_wall: float, rng, v: float, t: float,
                prev: tuple[float, float] | None = None):
    """One wall-sensor reading and the resulting steering correction.

    Returns (omega_correction, measured_offset, new_prev). The offset is the
    signed lateral displacement toward the left wall; the heading term comes
    from differencing offsets at least DERIV_BASELINE_S apart (a one-interval
    difference of two noisy readings would swamp the loop with heading
    noise). When a ray misses every wall segment (open tunnel end) no
    correction is issued.
    """
    x, y, psi = true_pose
    dir_left = (math.cos(psi + math.pi / 2.0), math.sin(psi + math.pi / 2.0))
    dir_right = (math.cos(psi - math.pi / 2.0), math.sin(psi - math.pi / 2.0))
    d_left = cast_ray_distance(topology, (x, y), dir_left)
    d_right = cast_ray_distance(topology, (x, y), dir_right)
    d_left += sigma_wall * rng.standard_normal()
    d_right += sigma_wall * rng.standard_normal()
    if not (math.isfinite(d_left) and math.isfinite(d_right)):
        return 0.0, None, prev
    if abs(d_left + d_right - topology.width) > 0.35 * topology.width:
        return 0.0, None, prev  # implausible reading (oblique corner returns)
    e = (d_right - d_left) / 2.0
    theta = 0.0
    new_prev = prev
    if prev is None:
        new_prev = (t, e)
    else:
        t_prev, e_prev = prev
        if t - t_prev >= DERIV_BASELINE_S - 1e-9:
            rate = (e - e_prev) / (v * (t - t_prev))
            theta = math.asin(min(max(rate, -0.95), 0.95))
            theta = min(max(theta, -0.5), 0.5)
            new_prev = (t, e)
    return -k_p * e - k_d * theta, e, new_prev


def run_mission(topology: TunnelTopology, schedule: DropSchedule,
                params: MissionParams, seed=None) -> MissionTrace:
    """Simulate one full traversal. Deterministic given (inputs, seed).

    Per-tick order: range updates (at the measurement rate), trace record,
    guidance + wall correction, noisy truth step, filter predict, drop events
    triggered by estimated traveled distance, termination check.
    """
    length = topology.length
    schedule.validate(length)
    if params.offset >= topology.width / 2.0:
        raise ValueError("lateral drop offset must be below half the width")
    rng = np.random.default_rng(params.seed if seed is None else seed)

    dt = params.dt
    measure_every = max(1, round(1.0 / (params.measure_hz * dt)))
    wall_every = 0
    hold_ticks = 0
    if params.wall_update_hz > 0:
        wall_every = max(1, round(1.0 / (params.wall_update_hz * dt)))
        hold_ticks = min(wall_every, max(1, round(1.0 / dt)))

    ev_s, ev_mode, ev_ds = schedule.arrays()
    n_events = len(ev_s)

    p0, heading0 = pose_at(topology, 0.0)
    lm_a, lm_b = known_landmark_positions(topology, params.offset)
    state = ekf.ekf_init(
        np.array([p0[0], p0[1], heading0]),
        np.diag([params.init_pos_var, params.init_pos_var, params.init_psi_var]),
        lm_a, lm_b)
    tx, ty, tpsi = float(p0[0]), float(p0[1]), heading0

    cursor = PathCursor(topology)
    lm_true: list[np.ndarray] = []
    next_event = 0
    last_nvis = 0
    held_corr = 0.0
    held_until = -1
    wall_state = None
    pending_events: list[str] = []

    rows_t, rows_p, rows_nvis = [], [], []
    rows_true, rows_est = [], []
    rows_sx, rows_sy = [], []
    rows_event: list[str] = []
    measure_counts: list[int] = []
    drops_log: list[dict] = []
    unc = UncertaintyTrace()

    r_sigma = params.sigma_range
    max_ticks = int(math.ceil(length / params.v / dt * 2.0)) + 200
    s_est = 0.0

    prev_true = (tx, ty)
    for k in range(max_ticks):
        t = k * dt

        if k % measure_every == 0:
            # the true path must not punch through a wall
            if segment_blocked(prev_true, (tx, ty), topology):
                raise MissionAborted(
                    f"vehicle hit a wall near ({tx:.2f}, {ty:.2f}), t={t:.2f}")
            prev_true = (tx, ty)
            cands = [("a", lm_a), ("b", lm_b)]
            cands.extend((i, lm) for i, lm in enumerate(lm_true))
            vis = visible_landmarks((tx, ty), cands, topology, params.rho_max,
                                    check_los=params.check_los)
            for lm_id in vis:
                lm_pos = lm_a if lm_id == "a" else lm_b if lm_id == "b" \
                    else lm_true[lm_id]
                d = math.hypot(tx - lm_pos[0], ty - lm_pos[1])
                rho = max(d + r_sigma * rng.standard_normal(), 0.0)
                ekf.ekf_update_range(state, RangeMeasurement(lm_id, rho, t),
                                     r_sigma)
            last_nvis = len(vis)
            measure_counts.append(last_nvis)

        p_now = ekf.position_uncertainty(state.cov[0:2, 0:2])
        unc.append(t, p_now)
        rows_t.append(t)
        rows_true.append((tx, ty, tpsi))
        rows_est.append((state.xhat[0], state.xhat[1], state.xhat[2]))
        rows_p.append(p_now)
        rows_nvis.append(last_nvis)
        rows_sx.append(math.sqrt(max(state.cov[0, 0], 0.0)))
        rows_sy.append(math.sqrt(max(state.cov[1, 1], 0.0)))
        rows_event.append(";".join(pending_events))
        pending_events = []

        # pure pursuit on the estimated pose toward a lookahead point
        target, _ = pose_at(topology, min(s_est + params.lookahead, length))
        dxg = target[0] - state.xhat[0]
        dyg = target[1] - state.xhat[1]
        ld = math.hypot(dxg, dyg)
        alpha = math.remainder(math.atan2(dyg, dxg) - state.xhat[2],
                               2.0 * math.pi)
        omega_cmd = 2.0 * params.v * math.sin(alpha) / max(ld, 1e-6)

        if wall_every and k % wall_every == 0:
            near_turn = any(abs(s_est - trn.s) <= 1.25 * topology.width
                            for trn in topology.turns)
            if near_turn:
                wall_state = None  # corner returns are unusable; restart baseline
                e_meas = None
            else:
                corr, e_meas, wall_state = wall_update(
                    (tx, ty, tpsi), topology, params.wall_kp, params.wall_kd,
                    params.sigma_wall, rng, params.v, t, wall_state)
                held_corr = corr
                held_until = k + hold_ticks
            if params.wall_aiding == "estimator" and e_meas is not None:
                seg = cursor.segment_index
                p0s = topology.centerline[seg]
                p1s = topology.centerline[seg + 1]
                seg_len = topology.cum_s[seg + 1] - topology.cum_s[seg]
                nx = -(p1s[1] - p0s[1]) / seg_len
                ny = (p1s[0] - p0s[0]) / seg_len
                predicted = nx * (state.xhat[0] - p0s[0]) + \
                    ny * (state.xhat[1] - p0s[1])
                ekf.ekf_linear_update(state, (0, 1), (nx, ny),
                                      e_meas - predicted,
                                      params.sigma_wall ** 2 / 2.0)
        if k < held_until:
            omega_cmd += held_corr
        omega_cmd = min(max(omega_cmd, -params.omega_max), params.omega_max)

        v_r = params.v + params.sigma_v * rng.standard_normal()
        w_r = omega_cmd + params.sigma_omega * rng.standard_normal()
        if abs(w_r) < 1e-12:
            tx += v_r * dt * math.cos(tpsi)
            ty += v_r * dt * math.sin(tpsi)
        else:
            r = v_r / w_r
            psi1 = tpsi + w_r * dt
            tx += r * (math.sin(psi1) - math.sin(tpsi))
            ty -= r * (math.cos(psi1) - math.cos(tpsi))
            tpsi = math.remainder(psi1, 2.0 * math.pi)

        ekf.ekf_predict(state, params.v, omega_cmd, dt,
                        params.sigma_v, params.sigma_omega, params.substeps)
        s_est = cursor.project(state.xhat[:2])

        while next_event < n_events and s_est >= ev_s[next_event]:
            mode = int(ev_mode[next_event])
            ds = float(ev_ds[next_event])
            sides = ((1.0, -0.5 * ds), (-1.0, 0.5 * ds)) if mode in (0, 3) \
                else (((1.0, 0.0),) if mode == 1 else ((-1.0, 0.0),))
            drop_rec = {"t": t, "s": float(ev_s[next_event]),
                        "true": [], "est": []}
            for side, dlong in sides:
                ct, st = math.cos(tpsi), math.sin(tpsi)
                true_lm = np.array([
                    tx + dlong * ct - side * params.offset * st
                    + params.sigma_drop * rng.standard_normal(),
                    ty + dlong * st + side * params.offset * ct
                    + params.sigma_drop * rng.standard_normal()])
                ce, se = math.cos(state.xhat[2]), math.sin(state.xhat[2])
                est_lm = np.array([
                    state.xhat[0] + dlong * ce - side * params.offset * se,
                    state.xhat[1] + dlong * se + side * params.offset * ce])
                ekf.ekf_augment_landmark(
                    state, est_lm, params.sigma_drop ** 2 * np.eye(2), t)
                lm_true.append(true_lm)
                drop_rec["true"].append(true_lm.tolist())
                drop_rec["est"].append(est_lm.tolist())
            drops_log.append(drop_rec)
            pending_events.append(f"drop:{next_event}")
            next_event += 1

        if s_est >= length - 1e-9:
            break

    true_arr = np.array(rows_true)
    est_arr = np.array(rows_est)
    return MissionTrace(
        t=np.array(rows_t), x_true=true_arr[:, 0], y_true=true_arr[:, 1],
        psi_true=true_arr[:, 2], x_est=est_arr[:, 0], y_est=est_arr[:, 1],
        psi_est=est_arr[:, 2], p=np.array(rows_p),
        n_visible=np.array(rows_nvis, dtype=int),
        sigma_x=np.array(rows_sx), sigma_y=np.array(rows_sy),
        event=rows_event, uncertainty=unc, drops=drops_log,
        measure_counts=measure_counts)


def run_seed_for(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """Deterministic per-run seed, independent of execution order."""
    return np.random.SeedSequence(master_seed, spawn_key=(run_index,))


def _mc_worker(args):
    topology, schedule, params, run_index = args
    trace = run_mission(topology, schedule, params,
                        seed=run_seed_for(params.seed, run_index))
    ex, ey = trace.terminal_error
    fx, fy = trace.containment_fractions()
    return {
        "run": run_index,
        "p_max": trace.p_max,
        "err_x": ex,
        "err_y": ey,
        "err_norm": math.hypot(ex, ey),
        "min_visible": trace.min_visible_at_measure,
        "contain_x": fx,
        "contain_y": fy,
    }


def _stats(values) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "median": float(np.median(arr)),
        "mean": float(arr.mean()),
        "q10": float(np.quantile(arr, 0.1)),
        "q90": float(np.quantile(arr, 0.9)),
    }


def default_workers() -> int:
    env = os.environ.get("NAV_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_monte_carlo(topology: TunnelTopology, schedule: DropSchedule,
                    params: MissionParams, runs: int,
                    workers: int = 1) -> dict:
    """Seeded batch of independent missions with aggregate statistics.

    Per-run seeds derive deterministically from params.seed and the run index,
    so results do not depend on the worker count.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [(topology, schedule, params, r) for r in range(runs)]
    if workers > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, runs)) as pool:
            results = list(pool.map(_mc_worker, jobs, chunksize=1))
    else:
        results = [_mc_worker(j) for j in jobs]
    results.sort(key=lambda r: r["run"])
    return {
        "runs": runs,
        "p_max": _stats([r["p_max"] for r in results]),
        "terminal_error": _stats([r["err_norm"] for r in results]),
        "terminal_error_x": _stats([abs(r["err_x"]) for r in results]),
        "terminal_error_y": _stats([abs(r["err_y"]) for r in results]),
        "min_visible": int(min(r["min_visible"] for r in results)),
        "containment_x": _stats([r["contain_x"] for r in results]),
        "containment_y": _stats([r["contain_y"] for r in results]),
        "per_run": results,
    }
