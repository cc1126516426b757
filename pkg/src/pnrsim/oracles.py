"""Brute-force reference implementations for the closed-form statistics.

Everything here is deliberately naive: sampling, exhaustive enumeration or
adaptive quadrature.  None of it shares code with :mod:`pnrsim.counting`.
"""
import itertools
import math

import numpy as np
from scipy import integrate


def enumerate_click_probability(N, eta, n, q):
    """Exact P(n clicks | q photons) by walking all (2N)**q photon outcomes."""
    outcomes = [(e, True) for e in range(N)] + [(e, False) for e in range(N)]
    total = 0.0
    for combo in itertools.product(outcomes, repeat=q):
        weight = 1.0
        fired = set()
        for element, detected in combo:
            weight *= (eta if detected else 1.0 - eta) / N
            if detected:
                fired.add(element)
        if len(fired) == n:
            total += weight
    return total


def click_counts_mc(N, eta, q_max, trials, seed):
    """Monte Carlo click-number histograms for q = 0..q_max photons.

    Each photon picks a uniform element and is detected with probability
    ``eta``; the click number is the count of distinct elements holding at
    least one detected photon.  Photon prefixes of the same trial are reused,
    so row q of the result is an independent-trials histogram for q photons.
    Returns an array ``counts[q, n]``.
    """
    rng = np.random.default_rng(seed)
    element = rng.integers(0, N, size=(trials, q_max))
    detected = rng.random((trials, q_max)) < eta
    tagged = np.where(detected, element, -1)
    counts = np.zeros((q_max + 1, q_max + 1), dtype=np.int64)
    counts[0, 0] = trials
    for q in range(1, q_max + 1):
        s = np.sort(tagged[:, :q], axis=1)
        new = np.ones_like(s, dtype=bool)
        new[:, 1:] = s[:, 1:] != s[:, :-1]
        clicks = np.count_nonzero(new & (s >= 0), axis=1)
        counts[q] = np.bincount(clicks, minlength=q_max + 1)
    return counts


def collision_probability_mc(N, q, trials, seed):
    """Fraction of trials in which two of ``q`` uniform photons share an element."""
    rng = np.random.default_rng(seed)
    hits = rng.integers(0, N, size=(trials, q))
    s = np.sort(hits, axis=1)
    return float(np.mean(np.any(s[:, 1:] == s[:, :-1], axis=1)))


def overlap_quadrature(mu1, s1, mu2, s2):
    """Integral of min(pdf1, pdf2) by adaptive quadrature."""
    def f(x):
        p1 = math.exp(-0.5 * ((x - mu1) / s1) ** 2) / (s1 * math.sqrt(2 * math.pi))
        p2 = math.exp(-0.5 * ((x - mu2) / s2) ** 2) / (s2 * math.sqrt(2 * math.pi))
        return min(p1, p2)

    lo = min(mu1 - 12 * s1, mu2 - 12 * s2)
    hi = max(mu1 + 12 * s1, mu2 + 12 * s2)
    grid = np.union1d(np.linspace(lo, hi, 41), [mu1, mu2])
    total = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += val
    return total


def bisect_intersection(mu1, s1, mu2, s2, iterations=200):
    """Density-equality point between the means by bisection on log densities."""
    def g(x):
        return (-0.5 * ((x - mu1) / s1) ** 2 - math.log(s1)) - (
            -0.5 * ((x - mu2) / s2) ** 2 - math.log(s2))

    a, b = mu1, mu2
    ga = g(a)
    for _ in range(iterations):
        m = 0.5 * (a + b)
        gm = g(m)
        if (gm > 0) == (ga > 0):
            a, ga = m, gm
        else:
            b = m
    return 0.5 * (a + b)


def click_distribution_markov(N, eta, q):
    """Click-number law by propagating photons one at a time.

    State is the number of already fired elements ``k``; a photon leaves it
    unchanged with probability ``(1 - eta) + eta * k / N`` and raises it by one
    otherwise.  All terms are positive, so this is stable for any N and q.
    """
    p = np.zeros(min(q, N) + 1)
    p[0] = 1.0
    for _ in range(q):
        k = np.arange(p.size)
        stay = (1 - eta) + eta * k / N
        nxt = p * stay
        nxt[1:] += p[:-1] * (eta * (N - k[:-1]) / N)
        p = nxt
    return p
