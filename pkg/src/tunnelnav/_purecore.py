"""Pure-NumPy implementations of the per-tick EKF kernels and the straight-
corridor mission loop. Mirrors tunnelnav._fastcore; used when the compiled
extension is unavailable or disabled via TUNNELNAV_PURE_PY=1."""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def _pose_dot(pose, v, omega):
    return np.array([v * math.cos(pose[2]), v * math.sin(pose[2]), omega])


def _cov_dot(pose, cov, v, qv, qw):
    # Sigma_dot = F Sigma + Sigma F^T + G Q G^T; F is nonzero only in the
    # vehicle rows, so only the first three rows/columns carry derivative.
    c, s = math.cos(pose[2]), math.sin(pose[2])
    a02 = -v * s
    a12 = v * c
    z = np.empty((3, cov.shape[0]))
    z[0] = a02 * cov[2]
    z[1] = a12 * cov[2]
    z[2] = 0.0
    d = np.zeros_like(cov)
    d[:3, :] += z
    d[:, :3] += z.T
    d[0, 0] += c * c * qv
    d[0, 1] += c * s * qv
    d[1, 0] += c * s * qv
    d[1, 1] += s * s * qv
    d[2, 2] += qw
    return d


def ekf_predict(xhat, cov, v, omega, sigma_v, sigma_omega, dt, substeps=1):
    """In-place RK4 propagation of estimate and covariance over dt.

    Landmark estimates and their diagonal blocks are stationary; only the
    vehicle block and vehicle/landmark cross terms evolve.
    """
    qv = sigma_v * sigma_v
    qw = sigma_omega * sigma_omega
    h = dt / substeps
    for _ in range(substeps):
        p1 = xhat[:3].copy()
        k1 = _pose_dot(p1, v, omega)
        d1 = _cov_dot(p1, cov, v, qv, qw)
        p2 = p1 + 0.5 * h * k1
        k2 = _pose_dot(p2, v, omega)
        d2 = _cov_dot(p2, cov + 0.5 * h * d1, v, qv, qw)
        p3 = p1 + 0.5 * h * k2
        k3 = _pose_dot(p3, v, omega)
        d3 = _cov_dot(p3, cov + 0.5 * h * d2, v, qv, qw)
        p4 = p1 + h * k3
        k4 = _pose_dot(p4, v, omega)
        d4 = _cov_dot(p4, cov + h * d3, v, qv, qw)
        xhat[:3] = p1 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        cov += (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    xhat[2] = math.remainder(xhat[2], 2.0 * math.pi)
    _symmetrize(cov)


def _symmetrize(cov):
    cov[:, :] = (cov + cov.T) * 0.5


def ekf_range_update(xhat, cov, lm_index, lx, ly, rho, r_var):
    """In-place scalar EKF update for one range measurement.

    lm_index is the state index of the landmark x coordinate, or -1 for a
    known landmark at (lx, ly) with no state entry. Returns the predicted
    range, or -1.0 when the update was skipped (predicted range ~ 0).
    """
    if lm_index >= 0:
        lx = xhat[lm_index]
        ly = xhat[lm_index + 1]
    dx = xhat[0] - lx
    dy = xhat[1] - ly
    rho_hat = math.hypot(dx, dy)
    if rho_hat < 1e-6:
        return -1.0
    ux = dx / rho_hat
    uy = dy / rho_hat
    c = ux * cov[:, 0] + uy * cov[:, 1]
    s = ux * c[0] + uy * c[1]
    if lm_index >= 0:
        c -= ux * cov[:, lm_index] + uy * cov[:, lm_index + 1]
        s = ux * c[0] + uy * c[1] - ux * c[lm_index] - uy * c[lm_index + 1]
    s += r_var
    if s < 1e-14:
        return rho_hat  # nothing to correct (exact state, exact measurement)
    k = c / s
    xhat += k * (rho - rho_hat)
    cov -= np.outer(k, c)
    _symmetrize(cov)
    return rho_hat


def _p_of_cov(cov):
    # trace of the 2x2 matrix square root, closed form
    tr = cov[0, 0] + cov[1, 1]
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    return math.sqrt(max(tr + 2.0 * math.sqrt(max(det, 0.0)), 0.0))


def run_straight_mission(length, v, sigma_v, sigma_omega, sigma_range,
                         sigma_drop, rho_max, offset,
                         drop_s, drop_mode, drop_ds,
                         dt, measure_every, substeps,
                         p0_diag, lookahead, omega_max, seed):
    """Full seeded mission through a straight corridor along +x.

    Known landmarks sit at (0, +-offset); dropped landmarks are placed
    relative to the true pose while the filter augments with the estimated
    pose. Visibility is range-gated only (a straight corridor has LOS
    everywhere). Returns (p_max, err_x, err_y, ticks).

    drop_mode: 0 = pair, 1 = single left, 2 = single right, 3 = angled pair
    (the two landmarks split longitudinally by drop_ds).
    """
    drop_s = np.asarray(drop_s, dtype=float)
    drop_mode = np.asarray(drop_mode, dtype=np.int32)
    drop_ds = np.asarray(drop_ds, dtype=float)
    n_events = len(drop_s)
    n_lm_max = int(sum(1 if m in (1, 2) else 2 for m in drop_mode))

    max_ticks = int(math.ceil(length / max(v, 1e-6) / dt * 2.0)) + 200
    n_meas_ticks = max_ticks // measure_every + 2

    rng = np.random.default_rng(seed)
    noise_ctrl = rng.standard_normal((max_ticks, 2))
    noise_meas = rng.standard_normal((n_meas_ticks, 2 + n_lm_max))
    noise_drop = rng.standard_normal((n_lm_max, 2))

    # truth and estimate
    tx, ty, tpsi = 0.0, 0.0, 0.0
    xhat = np.zeros(3)
    cov = np.diag(np.asarray(p0_diag, dtype=float)).copy()

    lm_true = np.zeros((n_lm_max, 2))
    n_lm = 0
    next_event = 0
    r_var = sigma_range * sigma_range
    p_max = _p_of_cov(cov)
    mk = 0

    for k in range(max_ticks):
        # measurement phase
        if k % measure_every == 0:
            for slot, (lmx, lmy) in enumerate(((0.0, offset), (0.0, -offset))):
                d = math.hypot(tx - lmx, ty - lmy)
                if d <= rho_max:
                    rho = max(d + sigma_range * noise_meas[mk, slot], 0.0)
                    ekf_range_update(xhat, cov, -1, lmx, lmy, rho, r_var)
            for i in range(n_lm):
                d = math.hypot(tx - lm_true[i, 0], ty - lm_true[i, 1])
                if d <= rho_max:
                    rho = max(d + sigma_range * noise_meas[mk, 2 + i], 0.0)
                    ekf_range_update(xhat, cov, 3 + 2 * i, 0.0, 0.0, rho, r_var)
            mk += 1

        p_max = max(p_max, _p_of_cov(cov))

        # pure pursuit toward a lookahead point on the corridor axis
        gx = min(xhat[0] + lookahead, length)
        dx, dy = gx - xhat[0], -xhat[1]
        ld = math.hypot(dx, dy)
        alpha = math.remainder(math.atan2(dy, dx) - xhat[2], 2.0 * math.pi)
        omega_cmd = 2.0 * v * math.sin(alpha) / max(ld, 1e-6)
        omega_cmd = min(max(omega_cmd, -omega_max), omega_max)

        # truth moves with noisy realized controls; filter sees the command
        v_r = v + sigma_v * noise_ctrl[k, 0]
        w_r = omega_cmd + sigma_omega * noise_ctrl[k, 1]
        if abs(w_r) < 1e-12:
            tx += v_r * dt * math.cos(tpsi)
            ty += v_r * dt * math.sin(tpsi)
        else:
            r = v_r / w_r
            psi1 = tpsi + w_r * dt
            tx += r * (math.sin(psi1) - math.sin(tpsi))
            ty -= r * (math.cos(psi1) - math.cos(tpsi))
            tpsi = math.remainder(psi1, 2.0 * math.pi)

        ekf_predict(xhat, cov, v, omega_cmd, sigma_v, sigma_omega, dt, substeps)

        # drop events trigger on estimated traveled distance
        while next_event < n_events and xhat[0] >= drop_s[next_event]:
            mode = drop_mode[next_event]
            ds = drop_ds[next_event]
            sides = ((1.0, -0.5 * ds), (-1.0, 0.5 * ds)) if mode in (0, 3) else \
                (((1.0, 0.0),) if mode == 1 else ((-1.0, 0.0),))
            for side, dlong in sides:
                ct, st = math.cos(tpsi), math.sin(tpsi)
                lm_true[n_lm, 0] = tx + dlong * ct - side * offset * st \
                    + sigma_drop * noise_drop[n_lm, 0]
                lm_true[n_lm, 1] = ty + dlong * st + side * offset * ct \
                    + sigma_drop * noise_drop[n_lm, 1]
                ce, se = math.cos(xhat[2]), math.sin(xhat[2])
                ex = xhat[0] + dlong * ce - side * offset * se
                ey = xhat[1] + dlong * se + side * offset * ce
                xhat, cov = _augment(xhat, cov, ex, ey, sigma_drop)
                n_lm += 1
            next_event += 1

        if xhat[0] >= length:
            return p_max, xhat[0] - tx, xhat[1] - ty, k + 1

    return p_max, xhat[0] - tx, xhat[1] - ty, max_ticks


def _augment(xhat, cov, ex, ey, sigma_drop):
    n = len(xhat)
    xh2 = np.empty(n + 2)
    xh2[:n] = xhat
    xh2[n] = ex
    xh2[n + 1] = ey
    cv2 = np.empty((n + 2, n + 2))
    cv2[:n, :n] = cov
    cv2[n:, :n] = cov[0:2, :]
    cv2[:n, n:] = cov[:, 0:2]
    cv2[n:, n:] = cov[0:2, 0:2]
    cv2[n, n] += sigma_drop * sigma_drop
    cv2[n + 1, n + 1] += sigma_drop * sigma_drop
    return xh2, cv2
