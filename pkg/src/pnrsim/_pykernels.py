"""Reference (pure Python / numpy) versions of the hot loops.

These define the semantics; ``_ckernels.pyx`` must agree with them to
rounding error.
"""
import math

import numpy as np
from scipy.signal import lfilter


def _wall_velocity(I, Isw, v0, psi):
    y = psi * (I / Isw) ** 2
    if y > 2.0:
        return v0 * (y - 2.0) / math.sqrt(y - 1.0)
    return v0 * (y - 2.0)


def rk4_transient(L, RL, Ib, Isw, r_per_len, v0, psi, tau, seed_len, dt, n_steps, births):
    """Fixed-step RK4 of the nanowire circuit with growing/shrinking normal domains.

    State is the wire current plus, per absorption site, the domain length
    and (when ``tau > 0``) the wall speed relaxing towards ``v(I)``.  Steps
    are split at absorption times.  A domain whose length reaches zero is
    dead for good; its death time is interpolated inside the step.  While no
    domain is alive the exact RK4 amplification factor of the linear
    L/R recovery is applied in closed form.

    Returns ``(current[n_steps + 1], lengths[K, n_steps + 1], deaths[K])``.
    """
    births = [float(b) for b in births]
    K = len(births)
    out_I = np.empty(n_steps + 1)
    out_x = np.zeros((K, n_steps + 1))
    deaths = np.full(K, np.nan)
    x = [0.0] * K
    u = [0.0] * K
    state = [0] * K  # 0 unborn, 1 alive, 2 dead
    h_lin = dt * RL / L
    g = 1.0 - h_lin + h_lin * h_lin / 2.0 - h_lin**3 / 6.0 + h_lin**4 / 24.0
    I = Ib
    nb = 0
    n_alive = 0

    def deriv(I, xs, us):
        v = _wall_velocity(I, Isw, v0, psi)
        total = 0.0
        dx = [0.0] * K
        du = [0.0] * K
        for k in range(K):
            if state[k] == 1:
                if xs[k] > 0.0:
                    total += xs[k]
                if tau > 0.0:
                    dx[k] = 2.0 * us[k]
                    du[k] = (v - us[k]) / tau
                else:
                    dx[k] = 2.0 * v
        return ((Ib - I) * RL - I * r_per_len * total) / L, dx, du

    while nb < K and births[nb] <= 0.0:
        state[nb], x[nb], u[nb] = 1, seed_len, 0.0
        n_alive += 1
        nb += 1
    out_I[0] = I
    out_x[:, 0] = x
    i = 0
    while i < n_steps:
        t = i * dt
        t_end = (i + 1) * dt
        while nb < K and births[nb] <= t:
            state[nb], x[nb], u[nb] = 1, seed_len, 0.0
            n_alive += 1
            nb += 1
        if n_alive == 0 and (nb == K or births[nb] >= t_end):
            # quiet stretch until the next birth (or the end)
            stop = i + 1
            if nb == K:
                stop = n_steps
            else:
                while stop < n_steps and births[nb] >= (stop + 1) * dt:
                    stop += 1
            steps = np.arange(1, stop - i + 1)
            seg = Ib + (I - Ib) * g**steps
            out_I[i + 1:stop + 1] = seg
            out_x[:, i + 1:stop + 1] = np.asarray(x)[:, None]
            I = float(seg[-1])
            i = stop
            continue
        tc = t
        while True:
            h = (births[nb] if nb < K and births[nb] < t_end else t_end) - tc
            if h > 0.0:
                I0, x0, u0 = I, list(x), list(u)
                a1, kx1, ku1 = deriv(I0, x0, u0)
                a2, kx2, ku2 = deriv(I0 + 0.5 * h * a1,
                                     [x0[k] + 0.5 * h * kx1[k] for k in range(K)],
                                     [u0[k] + 0.5 * h * ku1[k] for k in range(K)])
                a3, kx3, ku3 = deriv(I0 + 0.5 * h * a2,
                                     [x0[k] + 0.5 * h * kx2[k] for k in range(K)],
                                     [u0[k] + 0.5 * h * ku2[k] for k in range(K)])
                a4, kx4, ku4 = deriv(I0 + h * a3,
                                     [x0[k] + h * kx3[k] for k in range(K)],
                                     [u0[k] + h * ku3[k] for k in range(K)])
                I = I0 + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
                for k in range(K):
                    if state[k] != 1:
                        continue
                    x[k] = x0[k] + h / 6.0 * (kx1[k] + 2.0 * kx2[k] + 2.0 * kx3[k] + kx4[k])
                    u[k] = u0[k] + h / 6.0 * (ku1[k] + 2.0 * ku2[k] + 2.0 * ku3[k] + ku4[k])
                    if x[k] <= 0.0:
                        deaths[k] = tc + h * x0[k] / (x0[k] - x[k])
                        x[k], u[k], state[k] = 0.0, 0.0, 2
                        n_alive -= 1
            if nb < K and births[nb] < t_end:
                tc = births[nb]
                while nb < K and births[nb] <= tc:
                    state[nb], x[nb], u[nb] = 1, seed_len, 0.0
                    n_alive += 1
                    nb += 1
            else:
                break
        out_I[i + 1] = I
        out_x[:, i + 1] = x
        i += 1
    return out_I, out_x, deaths


def single_pole(x, alpha):
    """Causal one-pole low-pass along the last axis of a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    return lfilter([alpha], [1.0, -(1.0 - alpha)], x, axis=-1)


def first_crossings(w, levels):
    """Fractional sample index of the first rising crossing of each level.

    A crossing is the first pair ``s[i] < level <= s[i + 1]``; NaN marks a
    level that is never crossed.
    """
    w = np.asarray(w, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    out = np.full((w.shape[0], levels.size), np.nan)
    a, b = w[:, :-1], w[:, 1:]
    rows = np.arange(w.shape[0])
    for j, lv in enumerate(levels):
        hit = (a < lv) & (lv <= b)
        idx = np.argmax(hit, axis=1)
        ok = hit[rows, idx]
        i = idx[ok]
        r = rows[ok]
        out[r, j] = i + (lv - w[r, i]) / (w[r, i + 1] - w[r, i])
    return out
