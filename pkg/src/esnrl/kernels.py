"""Hot inner loops.

Every function here is written in the numba-compatible subset of numpy
and registered through :func:`esnrl._accel.kernel`; the numpy backend
either runs the same source uncompiled or a vectorised fallback. Inputs
are expected to be C-contiguous float64 arrays (callers normalise).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ._accel import kernel

# --------------------------------------------------------------------------
# reservoir recurrence


def _relu_run_numpy(A, U, x0):
    steps, n = U.shape
    X = np.empty((steps + 1, n))
    X[0] = x0
    x = x0
    for k in range(steps):
        x = np.maximum(A @ x + U[k], 0.0)
        X[k + 1] = x
    return X


@kernel(fallback=_relu_run_numpy)
def relu_run(A, U, x0):
    """States of ``x_{k+1} = max(A x_k + U_k, 0)``; ``U_k = C z_k + zeta``."""
    steps, n = U.shape
    X = np.empty((steps + 1, n))
    X[0] = x0
    x = x0.copy()
    for k in range(steps):
        pre = A @ x
        for i in range(n):
            v = pre[i] + U[k, i]
            x[i] = v if v > 0.0 else 0.0
        X[k + 1] = x
    return X


# --------------------------------------------------------------------------
# greedy evaluation


def _candidate_values_numpy(base, c_act, W, actions):
    return np.maximum(base + actions @ c_act.T, 0.0) @ W


@kernel(fallback=_candidate_values_numpy)
def candidate_values(base, c_act, W, actions):
    """``W . max(base + c_act a_i, 0)`` for every candidate row ``a_i``."""
    m, da = actions.shape
    n = base.shape[0]
    out = np.empty(m)
    for i in range(m):
        s = 0.0
        for j in range(n):
            p = base[j]
            for q in range(da):
                p += c_act[j, q] * actions[i, q]
            if p > 0.0:
                s += W[j] * p
        out[i] = s
    return out


# --------------------------------------------------------------------------
# online stochastic update


def _online_sweep_numpy(A, c_obs, c_act, zeta, X, obs, cands, rewards, alphas,
                        gamma_eff, W0, checkpoints, guard):
    steps = obs.shape[0]
    n = W0.shape[0]
    W = W0.copy()
    step_norm = np.zeros(steps)
    td2 = np.zeros(steps)
    snaps = np.zeros((checkpoints.shape[0], n))
    ci = 0
    while ci < checkpoints.shape[0] and checkpoints[ci] == 0:
        snaps[ci] = W
        ci += 1
    for k in range(steps):
        x = X[k]
        base = A @ x + c_obs @ obs[k] + zeta
        best = np.max(np.maximum(base + cands[k] @ c_act.T, 0.0) @ W)
        d = W @ x - rewards[k] - gamma_eff * best
        delta = alphas[k] * d * x
        W = W - delta
        step_norm[k] = np.sqrt(delta @ delta)
        td2[k] = d * d
        while ci < checkpoints.shape[0] and checkpoints[ci] == k + 1:
            snaps[ci] = W
            ci += 1
        if not np.sqrt(W @ W) <= guard:
            return W, step_norm[: k + 1], td2[: k + 1], snaps, k + 1
    return W, step_norm, td2, snaps, -1


@kernel(fallback=_online_sweep_numpy)
def online_sweep(A, c_obs, c_act, zeta, X, obs, cands, rewards, alphas,
                 gamma_eff, W0, checkpoints, guard):
    """Run the online readout update over a pre-recorded trajectory.

    Returns ``(W, step_norms, td_sq, snapshots, diverged_at)`` where
    ``diverged_at`` is -1 unless ``||W|| > guard`` (or non-finite) first
    occurred after that many updates.
    """
    steps = obs.shape[0]
    n = W0.shape[0]
    m = cands.shape[1]
    do = obs.shape[1]
    c_act_t = np.ascontiguousarray(c_act.T)
    W = W0.copy()
    step_norm = np.zeros(steps)
    td2 = np.zeros(steps)
    snaps = np.zeros((checkpoints.shape[0], n))
    base = np.empty(n)
    ci = 0
    while ci < checkpoints.shape[0] and checkpoints[ci] == 0:
        snaps[ci] = W
        ci += 1
    for k in range(steps):
        x = X[k]
        ax = A @ x
        for j in range(n):
            b = ax[j] + zeta[j]
            for q in range(do):
                b += c_obs[j, q] * obs[k, q]
            base[j] = b
        P = cands[k] @ c_act_t
        best = -np.inf
        for i in range(m):
            s = 0.0
            for j in range(n):
                p = P[i, j] + base[j]
                if p > 0.0:
                    s += W[j] * p
            if s > best:
                best = s
        d = W @ x - rewards[k] - gamma_eff * best
        sq = 0.0
        wn = 0.0
        for j in range(n):
            dj = alphas[k] * d * x[j]
            W[j] -= dj
            sq += dj * dj
            wn += W[j] * W[j]
        step_norm[k] = math.sqrt(sq)
        td2[k] = d * d
        while ci < checkpoints.shape[0] and checkpoints[ci] == k + 1:
            snaps[ci] = W
            ci += 1
        if not math.sqrt(wn) <= guard:
            return W, step_norm[: k + 1], td2[: k + 1], snaps, k + 1
    return W, step_norm, td2, snaps, -1


def _td_errors_numpy(A, c_obs, c_act, zeta, X, obs, cands, rewards, gamma_eff, W, idx):
    out = np.empty(idx.shape[0])
    for t in range(idx.shape[0]):
        k = idx[t]
        base = A @ X[k] + c_obs @ obs[k] + zeta
        best = np.max(np.maximum(base + cands[k] @ c_act.T, 0.0) @ W)
        out[t] = W @ X[k] - rewards[k] - gamma_eff * best
    return out


@kernel(fallback=_td_errors_numpy)
def td_errors(A, c_obs, c_act, zeta, X, obs, cands, rewards, gamma_eff, W, idx):
    """Optimality-form temporal differences of a frozen readout at ``idx``."""
    n = W.shape[0]
    m = cands.shape[1]
    do = obs.shape[1]
    c_act_t = np.ascontiguousarray(c_act.T)
    out = np.empty(idx.shape[0])
    base = np.empty(n)
    for t in range(idx.shape[0]):
        k = idx[t]
        ax = A @ X[k]
        for j in range(n):
            b = ax[j] + zeta[j]
            for q in range(do):
                b += c_obs[j, q] * obs[k, q]
            base[j] = b
        P = cands[k] @ c_act_t
        best = -np.inf
        for i in range(m):
            s = 0.0
            for j in range(n):
                p = P[i, j] + base[j]
                if p > 0.0:
                    s += W[j] * p
            if s > best:
                best = s
        out[t] = W @ X[k] - rewards[k] - gamma_eff * best
    return out


# --------------------------------------------------------------------------
# linear Gaussian recursion


def _ar1_numpy(phi, sigma, noise, y0):
    y = np.empty(noise.shape[0] + 1)
    y[0] = y0
    y[1:] = lfilter([sigma], [1.0, -phi], noise, zi=np.array([phi * y0]))[0]
    return y


@kernel(fallback=_ar1_numpy)
def ar1_path(phi, sigma, noise, y0):
    """Path of ``y_{k+1} = phi y_k + sigma noise_k`` including ``y0``."""
    y = np.empty(noise.shape[0] + 1)
    y[0] = y0
    for k in range(noise.shape[0]):
        y[k + 1] = phi * y[k] + sigma * noise[k]
    return y


# --------------------------------------------------------------------------
# Euler-Lagrange system for the smoothed Bee World (Dormand-Prince 5(4))

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


@kernel
def bee_el_integrate(eps_pen, c, gamma, omega, sign, forcing, y0, v0, t_end,
                     rtol, atol, h0, h_min, margin, max_steps):
    """Adaptive DP5(4) integration of the bee velocity/position system.

    State is ``(v, y, q)`` with ``q' = 1 + cos(omega t) sin(2 pi y)`` so the
    time-average nectar is error-controlled like the trajectory itself.
    ``sign`` multiplies the velocity equation (+1 as derived, -1 for the
    gradient-ascent orientation). Steps whose stages bring ``|v|`` within
    ``margin`` of ``c`` are rejected and halved.

    Returns ``(t, v, y, q, count, status)``; status 0 = reached ``t_end``,
    1 = step size underflow, 2 = ``max_steps`` exhausted.
    """
    half_pi_over_c = math.pi / (2.0 * c)
    amp = -sign * 2.0 * c / math.pi
    drive = forcing * 4.0 * c / eps_pen
    lg = math.log(gamma)
    two_pi = 2.0 * math.pi
    vmax = c - margin

    ts = np.empty(max_steps + 1)
    vs = np.empty(max_steps + 1)
    ys = np.empty(max_steps + 1)
    qs = np.empty(max_steps + 1)
    t, v, y, q = 0.0, v0, y0, 0.0
    ts[0], vs[0], ys[0], qs[0] = t, v, y, q
    count = 0

    def f_v(t, v, y):
        k = half_pi_over_c * v
        ck = math.cos(k)
        return amp * ck * ck * (drive * math.cos(omega * t) * math.cos(two_pi * y)
                                + lg * math.tan(k))

    def f_q(t, y):
        return 1.0 + math.cos(omega * t) * math.sin(two_pi * y)

    k1v = f_v(t, v, y)
    k1y = v
    k1q = f_q(t, y)
    h = h0
    status = 0
    while t < t_end:
        if count >= max_steps:
            status = 2
            break
        if h < h_min:
            status = 1
            break
        last = t + h >= t_end
        if last:
            h = t_end - t
        # stage 2
        v2 = v + h * _A21 * k1v
        y2 = y + h * _A21 * k1y
        if abs(v2) >= vmax:
            h *= 0.5
            continue
        k2v = f_v(t + _C2 * h, v2, y2)
        k2y = v2
        k2q = f_q(t + _C2 * h, y2)
        v3 = v + h * (_A31 * k1v + _A32 * k2v)
        y3 = y + h * (_A31 * k1y + _A32 * k2y)
        if abs(v3) >= vmax:
            h *= 0.5
            continue
        k3v = f_v(t + _C3 * h, v3, y3)
        k3y = v3
        k3q = f_q(t + _C3 * h, y3)
        v4 = v + h * (_A41 * k1v + _A42 * k2v + _A43 * k3v)
        y4 = y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
        if abs(v4) >= vmax:
            h *= 0.5
            continue
        k4v = f_v(t + _C4 * h, v4, y4)
        k4y = v4
        k4q = f_q(t + _C4 * h, y4)
        v5 = v + h * (_A51 * k1v + _A52 * k2v + _A53 * k3v + _A54 * k4v)
        y5 = y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
        if abs(v5) >= vmax:
            h *= 0.5
            continue
        k5v = f_v(t + _C5 * h, v5, y5)
        k5y = v5
        k5q = f_q(t + _C5 * h, y5)
        v6 = v + h * (_A61 * k1v + _A62 * k2v + _A63 * k3v + _A64 * k4v + _A65 * k5v)
        y6 = y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
        if abs(v6) >= vmax:
            h *= 0.5
            continue
        k6v = f_v(t + h, v6, y6)
        k6y = v6
        k6q = f_q(t + h, y6)
        vn = v + h * (_B1 * k1v + _B3 * k3v + _B4 * k4v + _B5 * k5v + _B6 * k6v)
        yn = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
        qn = q + h * (_B1 * k1q + _B3 * k3q + _B4 * k4q + _B5 * k5q + _B6 * k6q)
        if abs(vn) >= vmax:
            h *= 0.5
            continue
        k7v = f_v(t + h, vn, yn)
        k7y = vn
        k7q = f_q(t + h, yn)
        ev = h * (_E1 * k1v + _E3 * k3v + _E4 * k4v + _E5 * k5v + _E6 * k6v + _E7 * k7v)
        ey = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        eq = h * (_E1 * k1q + _E3 * k3q + _E4 * k4q + _E5 * k5q + _E6 * k6q + _E7 * k7q)
        sv = atol + rtol * max(abs(v), abs(vn))
        sy = atol + rtol * max(abs(y), abs(yn))
        sq = atol + rtol * max(abs(q), abs(qn))
        err = math.sqrt(((ev / sv) ** 2 + (ey / sy) ** 2 + (eq / sq) ** 2) / 3.0)
        if err <= 1.0:
            t = t_end if last else t + h
            v, y, q = vn, yn, qn
            k1v, k1y, k1q = k7v, k7y, k7q
            count += 1
            ts[count], vs[count], ys[count], qs[count] = t, v, y, q
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
        h = h * fac
    return ts[: count + 1], vs[: count + 1], ys[: count + 1], qs[: count + 1], count, status
