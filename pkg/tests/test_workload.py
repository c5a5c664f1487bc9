"""Arrival generation and skewed user populations."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import microsim as ms
from microsim.rng import stream
from microsim.workload import gen_arrivals


def _gen(process, duration_us, seed=1, classes=(("c", 1.0),), pop=None):
    return gen_arrivals(process, list(classes), pop, duration_us, stream(seed, "arrivals"))


def test_deterministic_arrival_times():
    arrivals = _gen(ms.deterministic(1000), 10_000)
    assert [t for t, _, _ in arrivals] == list(range(1000, 10_001, 1000))
    assert len(arrivals) == 10


def test_poisson_count_within_three_sigma():
    arrivals = _gen(ms.poisson(1000), 100_000_000)
    expected = 100_000
    assert abs(len(arrivals) - expected) <= 3 * math.sqrt(expected)


def test_diurnal_segment_rates():
    process = ms.diurnal([(1_000_000, 100), (1_000_000, 1000)])
    arrivals = _gen(process, 2_000_000)
    first = sum(1 for t, _, _ in arrivals if t <= 1_000_000)
    second = len(arrivals) - first
    assert abs(first - 100) <= 3 * math.sqrt(100)
    assert abs(second - 1000) <= 3 * math.sqrt(1000)


def test_timestamps_strictly_increasing():
    arrivals = _gen(ms.poisson(500_000), 1_000_000)  # dense enough to collide
    times = [t for t, _, _ in arrivals]
    assert all(a < b for a, b in zip(times, times[1:]))


def test_open_loop_times_insensitive_to_weights():
    a = _gen(ms.poisson(800), 5_000_000, classes=(("x", 0.5), ("y", 0.5)))
    b = _gen(ms.poisson(800), 5_000_000, classes=(("x", 0.9), ("y", 0.1)))
    assert [t for t, _, _ in a] == [t for t, _, _ in b]


def test_class_mix_follows_weights():
    arrivals = _gen(ms.poisson(2000), 50_000_000, classes=(("x", 0.25), ("y", 0.75)))
    share = sum(1 for _, c, _ in arrivals if c == 0) / len(arrivals)
    assert abs(share - 0.25) < 0.02


def test_uniform_population_weights():
    pop = ms.build_skewed_population(100, 0)
    assert pop.weights == (0.01,) * 100


def test_skew_80_two_class_weights():
    pop = ms.build_skewed_population(100, 80)
    assert pop.weights[:20] == (pytest.approx(0.045),) * 20
    assert pop.weights[20:] == (pytest.approx(0.00125),) * 80


def test_skew_95_top_users_carry_ninety_percent():
    pop = ms.build_skewed_population(1000, 95)
    assert sum(pop.weights[:50]) == pytest.approx(0.9)


@pytest.mark.parametrize("skew", [-1, 100, 250])
def test_skew_domain_errors(skew):
    with pytest.raises(ms.DomainError):
        ms.build_skewed_population(100, skew)


def test_small_population_rejected():
    with pytest.raises(ms.DomainError):
        ms.build_skewed_population(50, 10)


@settings(max_examples=60, deadline=None)
@given(st.integers(100, 5000), st.integers(0, 99))
def test_skew_mass_invariant(n_users, skew):
    pop = ms.build_skewed_population(n_users, skew)
    assert sum(pop.weights) == pytest.approx(1.0, abs=1e-9)
    if skew > 0:
        h = round(n_users * (100 - skew) / 100)
        assert sum(pop.weights[:h]) == pytest.approx(0.9, abs=1e-9)


def test_empirical_top_share_of_skew_80():
    pop = ms.build_skewed_population(100, 80)
    arrivals = _gen(ms.poisson(40_000), 25_000_000, pop=pop)
    assert len(arrivals) > 900_000
    hot = sum(1 for _, _, u in arrivals if u < 20)
    assert abs(hot / len(arrivals) - 0.9) < 0.005


def test_bad_process_configs():
    with pytest.raises(ms.ConfigError):
        ms.poisson(0)
    with pytest.raises(ms.ConfigError):
        ms.diurnal([])
    with pytest.raises(ms.ConfigError):
        ms.ArrivalProcess("bursts", rate=10)
