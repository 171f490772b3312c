# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled EKF per-tick kernels and straight-corridor mission loop.

API and arithmetic mirror tunnelnav._purecore; the pure module is the
reference, this one is the fast path selected at import when available.
"""

import numpy as np

from libc.math cimport atan2, cos, fabs, fmax, fmin, hypot, remainder, sin, sqrt

BACKEND = "cython"


cdef inline double _clamp(double x, double lo, double hi) nogil:
    return fmin(fmax(x, lo), hi)


cdef void _deriv_rows(double[:, ::1] cov, double* dprev, double coef, int n,
                      double psi, double v, double qv, double qw,
                      double* sr2, double* dout) nogil:
    """Rows 0..2 of Sigma_dot = F Sigma + Sigma F^T + G Q G^T at a stage
    covariance cov + coef*dprev (dprev rows layout 3 x n, NULL for stage 1)."""
    cdef int j
    cdef double cpsi = cos(psi)
    cdef double spsi = sin(psi)
    cdef double a02 = -v * spsi
    cdef double a12 = v * cpsi
    if dprev == NULL:
        for j in range(n):
            sr2[j] = cov[2, j]
    else:
        for j in range(n):
            sr2[j] = cov[2, j] + coef * dprev[2 * n + j]
    for j in range(n):
        dout[j] = a02 * sr2[j]
        dout[n + j] = a12 * sr2[j]
        dout[2 * n + j] = 0.0
    # transpose contribution (Sigma F^T) into columns 0..2
    dout[0] += a02 * sr2[0]
    dout[1] += a12 * sr2[0]
    dout[n + 0] += a02 * sr2[1]
    dout[n + 1] += a12 * sr2[1]
    dout[2 * n + 0] += a02 * sr2[2]
    dout[2 * n + 1] += a12 * sr2[2]
    # G Q G^T
    dout[0] += cpsi * cpsi * qv
    dout[1] += cpsi * spsi * qv
    dout[n + 0] += cpsi * spsi * qv
    dout[n + 1] += spsi * spsi * qv
    dout[2 * n + 2] += qw


cdef void _predict_core(double[::1] xhat, double[:, ::1] cov, int n,
                        double v, double omega, double qv, double qw,
                        double dt, int substeps,
                        double* d1, double* d2, double* d3, double* d4,
                        double* sr2) nogil:
    cdef double h = dt / substeps
    cdef double scale = h / 6.0
    cdef double x0, y0, psi0, psi2, psi4
    cdef double k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y
    cdef double sdv, val
    cdef int step, i, j
    for step in range(substeps):
        x0 = xhat[0]
        y0 = xhat[1]
        psi0 = xhat[2]
        # pose RK4 stages (omega constant, psi advances linearly)
        k1x = v * cos(psi0)
        k1y = v * sin(psi0)
        psi2 = psi0 + 0.5 * h * omega
        k2x = v * cos(psi2)
        k2y = v * sin(psi2)
        k3x = k2x
        k3y = k2y
        psi4 = psi0 + h * omega
        k4x = v * cos(psi4)
        k4y = v * sin(psi4)
        # covariance RK4 stages
        _deriv_rows(cov, NULL, 0.0, n, psi0, v, qv, qw, sr2, d1)
        _deriv_rows(cov, d1, 0.5 * h, n, psi2, v, qv, qw, sr2, d2)
        _deriv_rows(cov, d2, 0.5 * h, n, psi2, v, qv, qw, sr2, d3)
        _deriv_rows(cov, d3, h, n, psi4, v, qv, qw, sr2, d4)
        xhat[0] = x0 + scale * (((k1x + 2.0 * k2x) + 2.0 * k3x) + k4x)
        xhat[1] = y0 + scale * (((k1y + 2.0 * k2y) + 2.0 * k3y) + k4y)
        xhat[2] = psi0 + scale * (((omega + 2.0 * omega) + 2.0 * omega) + omega)
        for i in range(3):
            for j in range(n):
                sdv = ((d1[i * n + j] + 2.0 * d2[i * n + j])
                       + 2.0 * d3[i * n + j]) + d4[i * n + j]
                cov[i, j] = cov[i, j] + scale * sdv
        for i in range(3, n):
            for j in range(3):
                sdv = ((d1[j * n + i] + 2.0 * d2[j * n + i])
                       + 2.0 * d3[j * n + i]) + d4[j * n + i]
                cov[i, j] = cov[i, j] + scale * sdv
    xhat[2] = remainder(xhat[2], 2.0 * 3.141592653589793)
    for i in range(n):
        for j in range(i + 1, n):
            val = (cov[i, j] + cov[j, i]) * 0.5
            cov[i, j] = val
            cov[j, i] = val


cdef double _update_core(double[::1] xhat, double[:, ::1] cov, int n,
                         int lm_index, double lx, double ly,
                         double rho, double r_var, double* cvec) nogil:
    cdef double dx, dy, rho_hat, ux, uy, s, inno, ki, val
    cdef int i, j
    if lm_index >= 0:
        lx = xhat[lm_index]
        ly = xhat[lm_index + 1]
    dx = xhat[0] - lx
    dy = xhat[1] - ly
    rho_hat = hypot(dx, dy)
    if rho_hat < 1e-6:
        return -1.0
    ux = dx / rho_hat
    uy = dy / rho_hat
    for i in range(n):
        cvec[i] = ux * cov[i, 0] + uy * cov[i, 1]
    if lm_index >= 0:
        for i in range(n):
            cvec[i] = cvec[i] - (ux * cov[i, lm_index] + uy * cov[i, lm_index + 1])
        s = ux * cvec[0] + uy * cvec[1] - ux * cvec[lm_index] - uy * cvec[lm_index + 1]
    else:
        s = ux * cvec[0] + uy * cvec[1]
    s = s + r_var
    if s < 1e-14:
        return rho_hat  # nothing to correct (exact state, exact measurement)
    inno = rho - rho_hat
    for i in range(n):
        ki = cvec[i] / s
        xhat[i] = xhat[i] + ki * inno
        for j in range(n):
            cov[i, j] = cov[i, j] - ki * cvec[j]
    for i in range(n):
        for j in range(i + 1, n):
            val = (cov[i, j] + cov[j, i]) * 0.5
            cov[i, j] = val
            cov[j, i] = val
    return rho_hat


def ekf_predict(double[::1] xhat, double[:, ::1] cov, double v, double omega,
                double sigma_v, double sigma_omega, double dt, int substeps=1):
    """In-place RK4 propagation of estimate and covariance over dt."""
    cdef int n = cov.shape[0]
    scratch = np.empty(13 * n)
    cdef double[::1] w = scratch
    _predict_core(xhat, cov, n, v, omega, sigma_v * sigma_v,
                  sigma_omega * sigma_omega, dt, substeps,
                  &w[0], &w[3 * n], &w[6 * n], &w[9 * n], &w[12 * n])


def ekf_range_update(double[::1] xhat, double[:, ::1] cov, int lm_index,
                     double lx, double ly, double rho, double r_var):
    """In-place scalar EKF range update; returns predicted range or -1.0."""
    cdef int n = cov.shape[0]
    scratch = np.empty(n)
    cdef double[::1] w = scratch
    return _update_core(xhat, cov, n, lm_index, lx, ly, rho, r_var, &w[0])


def run_straight_mission(double length, double v, double sigma_v,
                         double sigma_omega, double sigma_range,
                         double sigma_drop, double rho_max, double offset,
                         drop_s, drop_mode, drop_ds,
                         double dt, int measure_every, int substeps,
                         p0_diag, double lookahead, double omega_max, seed):
    """Full seeded mission through a straight corridor along +x.

    Semantics identical to tunnelnav._purecore.run_straight_mission.
    """
    cdef double[::1] ds_v = np.ascontiguousarray(drop_s, dtype=np.float64)
    cdef int[::1] dm_v = np.ascontiguousarray(drop_mode, dtype=np.int32)
    cdef double[::1] dds_v = np.ascontiguousarray(drop_ds, dtype=np.float64)
    cdef int n_events = ds_v.shape[0]
    cdef int n_lm_max = 0
    cdef int e
    for e in range(n_events):
        n_lm_max += 1 if (dm_v[e] == 1 or dm_v[e] == 2) else 2

    cdef int max_ticks = <int>(np.ceil(length / max(v, 1e-6) / dt * 2.0)) + 200
    cdef int n_meas_ticks = max_ticks // measure_every + 2

    rng = np.random.default_rng(seed)
    cdef double[:, ::1] noise_ctrl = rng.standard_normal((max_ticks, 2))
    cdef double[:, ::1] noise_meas = rng.standard_normal((n_meas_ticks, 2 + n_lm_max))
    cdef double[:, ::1] noise_drop = rng.standard_normal((n_lm_max, 2))

    cdef int ncap = 3 + 2 * n_lm_max
    xhat_arr = np.zeros(3)
    cov_arr = np.diag(np.asarray(p0_diag, dtype=np.float64)).copy()
    cdef double[::1] xhat = xhat_arr
    cdef double[:, ::1] cov = cov_arr
    scratch = np.empty(13 * ncap)
    cdef double[::1] w = scratch

    cdef double[:, ::1] lm_true = np.zeros((max(n_lm_max, 1), 2))
    cdef int n_lm = 0
    cdef int next_event = 0
    cdef int n = 3
    cdef double r_var = sigma_range * sigma_range
    cdef double qv = sigma_v * sigma_v
    cdef double qw = sigma_omega * sigma_omega

    cdef double tx = 0.0, ty = 0.0, tpsi = 0.0
    cdef double tr, det, p_now, p_max
    cdef int k, mk, i, slot, m
    cdef double d, rho, gx, dxg, dyg, ld, alpha, omega_cmd, v_r, w_r, r, psi1
    cdef double ct, st, ce, se, side, dlong, ex, ey, ds_split

    tr = cov[0, 0] + cov[1, 1]
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    p_max = sqrt(fmax(tr + 2.0 * sqrt(fmax(det, 0.0)), 0.0))
    mk = 0

    for k in range(max_ticks):
        if k % measure_every == 0:
            for slot in range(2):
                d = hypot(tx - 0.0, ty - (offset if slot == 0 else -offset))
                if d <= rho_max:
                    rho = fmax(d + sigma_range * noise_meas[mk, slot], 0.0)
                    _update_core(xhat, cov, n, -1, 0.0,
                                 offset if slot == 0 else -offset,
                                 rho, r_var, &w[0])
            for i in range(n_lm):
                d = hypot(tx - lm_true[i, 0], ty - lm_true[i, 1])
                if d <= rho_max:
                    rho = fmax(d + sigma_range * noise_meas[mk, 2 + i], 0.0)
                    _update_core(xhat, cov, n, 3 + 2 * i, 0.0, 0.0,
                                 rho, r_var, &w[0])
            mk += 1

        tr = cov[0, 0] + cov[1, 1]
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        p_now = sqrt(fmax(tr + 2.0 * sqrt(fmax(det, 0.0)), 0.0))
        if p_now > p_max:
            p_max = p_now

        gx = fmin(xhat[0] + lookahead, length)
        dxg = gx - xhat[0]
        dyg = -xhat[1]
        ld = hypot(dxg, dyg)
        alpha = remainder(atan2(dyg, dxg) - xhat[2], 2.0 * 3.141592653589793)
        omega_cmd = 2.0 * v * sin(alpha) / fmax(ld, 1e-6)
        omega_cmd = _clamp(omega_cmd, -omega_max, omega_max)

        v_r = v + sigma_v * noise_ctrl[k, 0]
        w_r = omega_cmd + sigma_omega * noise_ctrl[k, 1]
        if fabs(w_r) < 1e-12:
            tx += v_r * dt * cos(tpsi)
            ty += v_r * dt * sin(tpsi)
        else:
            r = v_r / w_r
            psi1 = tpsi + w_r * dt
            tx += r * (sin(psi1) - sin(tpsi))
            ty -= r * (cos(psi1) - cos(tpsi))
            tpsi = remainder(psi1, 2.0 * 3.141592653589793)

        _predict_core(xhat, cov, n, v, omega_cmd, qv, qw, dt, substeps,
                      &w[0], &w[3 * ncap], &w[6 * ncap], &w[9 * ncap],
                      &w[12 * ncap])

        while next_event < n_events and xhat[0] >= ds_v[next_event]:
            m = dm_v[next_event]
            ds_split = dds_v[next_event]
            for slot in range(1 if (m == 1 or m == 2) else 2):
                if m == 1:
                    side = 1.0
                    dlong = 0.0
                elif m == 2:
                    side = -1.0
                    dlong = 0.0
                elif slot == 0:
                    side = 1.0
                    dlong = -0.5 * ds_split
                else:
                    side = -1.0
                    dlong = 0.5 * ds_split
                ct = cos(tpsi)
                st = sin(tpsi)
                lm_true[n_lm, 0] = tx + dlong * ct - side * offset * st \
                    + sigma_drop * noise_drop[n_lm, 0]
                lm_true[n_lm, 1] = ty + dlong * st + side * offset * ct \
                    + sigma_drop * noise_drop[n_lm, 1]
                ce = cos(xhat[2])
                se = sin(xhat[2])
                ex = xhat[0] + dlong * ce - side * offset * se
                ey = xhat[1] + dlong * se + side * offset * ce
                xhat_arr, cov_arr = _augment(xhat_arr, cov_arr, ex, ey, sigma_drop)
                xhat = xhat_arr
                cov = cov_arr
                n += 2
                n_lm += 1
            next_event += 1

        if xhat[0] >= length:
            return p_max, xhat[0] - tx, xhat[1] - ty, k + 1

    return p_max, xhat[0] - tx, xhat[1] - ty, max_ticks


def _augment(xhat, cov, double ex, double ey, double sigma_drop):
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
