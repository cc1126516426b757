# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Semantics are defined by :mod:`pnrsim._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN

cnp.import_array()


cdef inline double _wall_velocity(double I, double Isw, double v0, double psi) nogil:
    cdef double y = psi * (I / Isw) * (I / Isw)
    if y > 2.0:
        return v0 * (y - 2.0) / sqrt(y - 1.0)
    return v0 * (y - 2.0)


cdef void _deriv(double I, double[:] x, double[:] u, char[:] state, Py_ssize_t K,
                 double L, double RL, double Ib, double Isw, double r_per_len,
                 double v0, double psi, double tau,
                 double* dI, double[:] dx, double[:] du) nogil:
    cdef double total = 0.0
    cdef double v = _wall_velocity(I, Isw, v0, psi)
    cdef Py_ssize_t k
    for k in range(K):
        if state[k] == 1:
            if x[k] > 0.0:
                total += x[k]
            if tau > 0.0:
                dx[k] = 2.0 * u[k]
                du[k] = (v - u[k]) / tau
            else:
                dx[k] = 2.0 * v
                du[k] = 0.0
        else:
            dx[k] = 0.0
            du[k] = 0.0
    dI[0] = ((Ib - I) * RL - I * r_per_len * total) / L


def rk4_transient(double L, double RL, double Ib, double Isw, double r_per_len,
                  double v0, double psi, double tau, double seed_len,
                  double dt, Py_ssize_t n_steps, births_in):
    cdef double[:] births = np.ascontiguousarray(births_in, dtype=np.float64)
    cdef Py_ssize_t K = births.shape[0]
    out_I_arr = np.empty(n_steps + 1)
    out_x_arr = np.zeros((K, n_steps + 1))
    deaths_arr = np.full(K, np.nan)
    cdef double[:] out_I = out_I_arr
    cdef double[:, :] out_x = out_x_arr
    cdef double[:] deaths = deaths_arr

    x_arr = np.zeros(K); u_arr = np.zeros(K)
    x0_arr = np.zeros(K); u0_arr = np.zeros(K)
    xs_arr = np.zeros(K); us_arr = np.zeros(K)
    kx_arr = np.zeros((4, K)); ku_arr = np.zeros((4, K))
    state_arr = np.zeros(K, dtype=np.int8)
    cdef double[:] x = x_arr, u = u_arr, x0 = x0_arr, u0 = u0_arr
    cdef double[:] xs = xs_arr, us = us_arr
    cdef double[:, :] kx = kx_arr, ku = ku_arr
    cdef char[:] state = state_arr

    cdef double h_lin = dt * RL / L
    cdef double g = 1.0 - h_lin + h_lin * h_lin / 2.0 - h_lin ** 3 / 6.0 + h_lin ** 4 / 24.0
    cdef double I = Ib, I0, tc, t, t_end, h, dI1, dI2, dI3, dI4
    cdef Py_ssize_t i, k, nb = 0, n_alive = 0

    with nogil:
        while nb < K and births[nb] <= 0.0:
            state[nb] = 1; x[nb] = seed_len; u[nb] = 0.0; n_alive += 1; nb += 1
        out_I[0] = I
        for k in range(K):
            out_x[k, 0] = x[k]
        for i in range(n_steps):
            t = i * dt
            t_end = (i + 1) * dt
            while nb < K and births[nb] <= t:
                state[nb] = 1; x[nb] = seed_len; u[nb] = 0.0; n_alive += 1; nb += 1
            if n_alive == 0 and (nb == K or births[nb] >= t_end):
                I = Ib + (I - Ib) * g
            else:
                tc = t
                while True:
                    if nb < K and births[nb] < t_end:
                        h = births[nb] - tc
                    else:
                        h = t_end - tc
                    if h > 0.0:
                        I0 = I
                        for k in range(K):
                            x0[k] = x[k]; u0[k] = u[k]
                        _deriv(I0, x0, u0, state, K, L, RL, Ib, Isw, r_per_len, v0, psi, tau,
                               &dI1, kx[0], ku[0])
                        for k in range(K):
                            xs[k] = x0[k] + 0.5 * h * kx[0, k]; us[k] = u0[k] + 0.5 * h * ku[0, k]
                        _deriv(I0 + 0.5 * h * dI1, xs, us, state, K, L, RL, Ib, Isw, r_per_len,
                               v0, psi, tau, &dI2, kx[1], ku[1])
                        for k in range(K):
                            xs[k] = x0[k] + 0.5 * h * kx[1, k]; us[k] = u0[k] + 0.5 * h * ku[1, k]
                        _deriv(I0 + 0.5 * h * dI2, xs, us, state, K, L, RL, Ib, Isw, r_per_len,
                               v0, psi, tau, &dI3, kx[2], ku[2])
                        for k in range(K):
                            xs[k] = x0[k] + h * kx[2, k]; us[k] = u0[k] + h * ku[2, k]
                        _deriv(I0 + h * dI3, xs, us, state, K, L, RL, Ib, Isw, r_per_len,
                               v0, psi, tau, &dI4, kx[3], ku[3])
                        I = I0 + h / 6.0 * (dI1 + 2.0 * dI2 + 2.0 * dI3 + dI4)
                        for k in range(K):
                            if state[k] != 1:
                                continue
                            x[k] = x0[k] + h / 6.0 * (kx[0, k] + 2.0 * kx[1, k] + 2.0 * kx[2, k] + kx[3, k])
                            u[k] = u0[k] + h / 6.0 * (ku[0, k] + 2.0 * ku[1, k] + 2.0 * ku[2, k] + ku[3, k])
                            if x[k] <= 0.0:
                                deaths[k] = tc + h * x0[k] / (x0[k] - x[k])
                                x[k] = 0.0; u[k] = 0.0; state[k] = 2; n_alive -= 1
                    if nb < K and births[nb] < t_end:
                        tc = births[nb]
                        while nb < K and births[nb] <= tc:
                            state[nb] = 1; x[nb] = seed_len; u[nb] = 0.0; n_alive += 1; nb += 1
                    else:
                        break
            out_I[i + 1] = I
            for k in range(K):
                out_x[k, i + 1] = x[k]
    return out_I_arr, out_x_arr, deaths_arr


def single_pole(x_in, double alpha):
    """Causal one-pole low-pass along the last axis of a 2-D array."""
    cdef double[:, :] x = np.ascontiguousarray(x_in, dtype=np.float64)
    out_arr = np.empty((x.shape[0], x.shape[1]))
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t r, c
    cdef double y
    with nogil:
        for r in range(x.shape[0]):
            y = 0.0
            for c in range(x.shape[1]):
                y = y + alpha * (x[r, c] - y)
                out[r, c] = y
    return out_arr


def first_crossings(w_in, levels_in):
    """Fractional sample index of the first rising crossing of each level.

    ``levels`` must be ascending.  NaN marks a level that is never crossed.
    """
    cdef double[:, :] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef double[:] levels = np.ascontiguousarray(levels_in, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], m = w.shape[1], nl = levels.shape[0]
    out_arr = np.full((n, nl), np.nan)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t r, i, j
    cdef double a, b, lv
    with nogil:
        for r in range(n):
            for j in range(nl):
                lv = levels[j]
                for i in range(m - 1):
                    a = w[r, i]
                    b = w[r, i + 1]
                    if a < lv and lv <= b:
                        out[r, j] = i + (lv - a) / (b - a)
                        break
    return out_arr
