import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pnrsim import oracles
from pnrsim.counting import (DetectorArrayModel, PhotonNumberDistribution, TimingModel,
                             click_probability, collision_probability, crossing_mean,
                             discrimination_overlap, discrimination_probability,
                             gaussian_intersection, jitter, poisson_distribution, poisson_pmf,
                             resolution_curve, rise_time)
from pnrsim.errors import DomainError


def pdf(x, mu, s):
    return math.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))


# ---------------------------------------------------------------- click statistics

def test_click_probability_basic_cases():
    assert click_probability(DetectorArrayModel(1000, 1.0), 1, 1) == 1.0
    assert click_probability(DetectorArrayModel(1000, 0.4), 0, 0) == 1.0


def test_click_probability_matches_enumeration():
    # 0.625 from walking all 16 (element, detected) outcomes
    assert click_probability(DetectorArrayModel(2, 0.5), 1, 2) == pytest.approx(0.625, abs=1e-15)
    for N, eta, q in [(2, 0.3, 3), (3, 0.7, 4), (4, 1.0, 3)]:
        for n in range(min(q, N) + 1):
            exact = oracles.enumerate_click_probability(N, eta, n, q)
            assert click_probability(DetectorArrayModel(N, eta), n, q) == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("N,eta,q", [(10_000, 0.9, 50), (10_000, 0.3, 50), (5000, 1.0, 40), (64, 0.7, 50)])
def test_click_probability_stable_for_large_inputs(N, eta, q):
    markov = oracles.click_distribution_markov(N, eta, q)
    model = DetectorArrayModel(N, eta)
    for n in range(0, min(q, N) + 1, 5):
        assert click_probability(model, n, q) == pytest.approx(markov[n], rel=1e-8, abs=1e-15)


def test_click_probability_domain_errors():
    model = DetectorArrayModel(4, 0.5)
    with pytest.raises(DomainError):
        click_probability(model, 3, 2)
    with pytest.raises(DomainError):
        click_probability(model, 5, 6)
    with pytest.raises(DomainError):
        DetectorArrayModel(0, 0.5)
    with pytest.raises(DomainError):
        DetectorArrayModel(4, 1.5)


@given(N=st.integers(1, 64), eta=st.sampled_from([0.3, 0.7, 1.0]), q=st.integers(0, 8))
def test_click_probabilities_normalize(N, eta, q):
    model = DetectorArrayModel(N, eta)
    total = math.fsum(click_probability(model, n, q) for n in range(min(q, N) + 1))
    assert total == pytest.approx(1.0, abs=1e-9)


@given(N=st.integers(1, 200), q=st.integers(1, 12),
       etas=st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_all_detected_nondecreasing_in_efficiency(N, q, etas):
    lo, hi = sorted(etas)
    if q > N:
        return
    assert click_probability(DetectorArrayModel(N, lo), q, q) <= \
        click_probability(DetectorArrayModel(N, hi), q, q) + 1e-15


# ---------------------------------------------------------------- collisions

def test_collision_probability_values():
    assert collision_probability(1000, 1) == 0.0
    assert collision_probability(1000, 0) == 0.0
    assert collision_probability(5, 6) == 1.0
    # direct product 1 - prod(1 - i/N)
    for q, expected in [(5, 1 - np.prod(1 - np.arange(1, 5) / 1000)),
                        (10, 1 - np.prod(1 - np.arange(1, 10) / 1000))]:
        assert collision_probability(1000, q) == pytest.approx(expected, rel=1e-12)
    assert collision_probability(1000, 5) == pytest.approx(0.009965049976, abs=1e-11)
    assert collision_probability(1000, 10) == pytest.approx(0.044139386995, abs=1e-11)


@given(N=st.integers(1, 5000), q=st.integers(0, 60))
def test_collision_monotone(N, q):
    c = collision_probability(N, q)
    assert 0.0 <= c <= 1.0
    assert collision_probability(N, q + 1) >= c
    assert collision_probability(N + 1, q) <= c


def test_collision_agrees_with_all_detected_at_unit_efficiency():
    for N, q in [(16, 4), (1000, 10)]:
        p = click_probability(DetectorArrayModel(N, 1.0), q, q)
        assert p == pytest.approx(1 - collision_probability(N, q), rel=1e-12)


# ---------------------------------------------------------------- discrimination

def test_gaussian_intersection_examples():
    assert gaussian_intersection(0, 1, 2, 1) == pytest.approx(1.0, abs=1e-15)
    assert gaussian_intersection(0, 1, 3, 1) == pytest.approx(1.5, abs=1e-15)
    # root of 3x^2 + 4x - (4 + 8 ln 2) = 0 lying in (0, 2)
    root = (-4 + math.sqrt(16 + 12 * (4 + 8 * math.log(2)))) / 6
    assert gaussian_intersection(0, 1, 2, 2) == pytest.approx(root, abs=1e-12)
    assert gaussian_intersection(0, 1, 2, 2) == pytest.approx(oracles.bisect_intersection(0, 1, 2, 2), abs=1e-12)


def test_gaussian_intersection_rejects_bad_input():
    with pytest.raises(DomainError):
        gaussian_intersection(1, 1, 0, 1)
    with pytest.raises(DomainError):
        gaussian_intersection(0, -1, 1, 1)


@given(mu1=st.floats(-5, 5), d=st.floats(0.05, 5), s1=st.floats(0.2, 3), r=st.floats(0.5, 2))
def test_intersection_equalizes_densities(mu1, d, s1, r):
    mu2, s2 = mu1 + d, s1 * r
    try:
        c = gaussian_intersection(mu1, s1, mu2, s2)
    except DomainError:
        # very unequal widths can put both roots outside the means
        return
    assert mu1 < c < mu2
    a, b = pdf(c, mu1, s1), pdf(c, mu2, s2)
    assert abs(a - b) <= 1e-9 * max(a, b)


def test_overlap_examples():
    assert discrimination_overlap(0.0, 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert discrimination_overlap(0, 1, 4, 1) == pytest.approx(0.04550026389635841, abs=1e-12)
    assert discrimination_overlap(0, 1, 1e6, 1) == pytest.approx(0.0, abs=1e-12)


def test_discrimination_probability_is_complement_for_equal_widths():
    ovl = discrimination_overlap(0, 1, 2.5, 1)
    assert discrimination_probability(0, 1, 2.5, 1) == pytest.approx(1 - ovl, abs=1e-12)


@given(mu1=st.floats(-3, 3), d=st.floats(0.0, 6), s1=st.floats(0.3, 2), s2=st.floats(0.3, 2))
def test_overlap_bounded_and_symmetric(mu1, d, s1, s2):
    o = discrimination_overlap(mu1, s1, mu1 + d, s2)
    assert 0.0 <= o <= 1.0 + 1e-12
    assert o == pytest.approx(discrimination_overlap(mu1 + d, s2, mu1, s1), abs=1e-12)


# ---------------------------------------------------------------- timing model

def test_rise_time_and_jitter():
    m = TimingModel(base_rise_time=100e-12, exponent=-0.3, jitter_ratio=0.05)
    assert rise_time(m, 1) == pytest.approx(100e-12, rel=1e-15)
    assert rise_time(m, 2) == pytest.approx(81.22523963562355e-12, rel=1e-12)
    assert jitter(m, 2) / jitter(m, 1) == pytest.approx(rise_time(m, 2) / rise_time(m, 1), rel=1e-15)
    assert crossing_mean(m, 1) == pytest.approx(m.time_offset + m.trigger_fraction * 100e-12)
    with pytest.raises(DomainError):
        rise_time(m, 0)


def test_timing_model_validation():
    for kwargs in [dict(base_rise_time=0), dict(jitter_ratio=0), dict(trigger_fraction=1.0)]:
        with pytest.raises(DomainError):
            TimingModel(**kwargs)


@given(p=st.floats(-1.0, -0.01), n=st.integers(1, 50))
def test_rise_time_strictly_decreasing(p, n):
    m = TimingModel(base_rise_time=1e-9, exponent=p)
    assert rise_time(m, n + 1) < rise_time(m, n)


def test_resolution_curve_shape():
    m = TimingModel(base_rise_time=1.0, exponent=-0.3, jitter_ratio=0.05, time_offset=0.0)
    curve = resolution_curve(m, 10)
    assert np.array_equal(curve[:, 0], np.arange(1, 11))
    assert np.all(np.diff(curve[:, 1]) > 0)
    tiny = resolution_curve(TimingModel(base_rise_time=1.0, jitter_ratio=1e-6), 10)
    assert np.all(tiny[:, 1] < 1e-12)
    lower = resolution_curve(TimingModel(base_rise_time=1.0, jitter_ratio=0.01), 10)
    assert np.all(lower[:, 1] <= curve[:, 1])


# ---------------------------------------------------------------- Poisson law

def test_poisson_values():
    assert poisson_pmf(0.0, 0) == 1.0
    assert poisson_pmf(0.0, 3) == 0.0
    assert poisson_pmf(0.35, 0) == pytest.approx(0.7046880897187134, rel=1e-14)
    assert poisson_pmf(1.98, 2) == pytest.approx(0.2706433189768121, rel=1e-13)
    with pytest.raises(DomainError):
        poisson_pmf(-1.0, 0)
    with pytest.raises(DomainError):
        poisson_pmf(1.0, -1)


@given(lam=st.floats(0, 30), k_max=st.integers(0, 60))
def test_poisson_distribution_tail_accounting(lam, k_max):
    d = poisson_distribution(lam, k_max)
    assert d.probabilities.sum() + d.tail_mass == pytest.approx(1.0, abs=1e-9)
    assert d.mean == pytest.approx(lam)
    assert len(d) == k_max + 1


def test_distribution_invariants():
    PhotonNumberDistribution.from_probabilities([0.5, 0.3, 0.2])
    with pytest.raises(DomainError):
        PhotonNumberDistribution(np.array([0.5, 0.4]), 0.4)
    with pytest.raises(DomainError):
        PhotonNumberDistribution(np.array([0.5, 0.5]), 0.9)


def test_click_probability_tiny_efficiency_has_no_cancellation():
    # exact: 3!/3**3 * eta**3 for three photons on three elements
    eta = 1.18e-90
    got = click_probability(DetectorArrayModel(3, eta), 3, 3)
    assert got == pytest.approx(2 / 9 * eta ** 3, rel=1e-12)


def test_positive_series_matches_markov_chain():
    from pnrsim.counting import _click_probability_series
    for N, eta, q in [(2, 0.5, 2), (1000, 0.3, 10), (64, 0.01, 50), (7, 0.999, 30)]:
        ref = oracles.click_distribution_markov(N, eta, q)
        for n in range(min(q, N) + 1):
            assert _click_probability_series(N, eta, n, q) == pytest.approx(ref[n], rel=1e-10, abs=1e-300)
