import math

import numpy as np
import pytest
from scipy import stats

from smoothfix.kinetic import (
    KineticConfig, KineticConfigError, expected_wild_leaves, particle_sample, relax_to_stationary,
    stationary_target, trend_non_increasing, wild_sample,
)
from smoothfix.weights import WeightModel


def point(rng, k):
    return np.ones((k, 1))


def uniform(rng, k):
    return rng.uniform(-1, 1, (k, 1))


def test_config_validation(kac1, half_split):
    with pytest.raises(KineticConfigError, match="C = 0"):
        KineticConfig(WeightModel("deterministic-split", params={"T": [0.5, 0.5], "C": [1.0]}),
                      point)
    mixed = WeightModel("finite-mixture", params={"components": [
        {"prob": 0.5, "T": [0.5]}, {"prob": 0.5, "T": [0.5, 0.5]}]})
    with pytest.raises(KineticConfigError, match="same number"):
        KineticConfig(mixed, point)
    with pytest.raises(KineticConfigError, match="callable"):
        KineticConfig(kac1, 1.0)
    with pytest.raises(KineticConfigError):
        KineticConfig(kac1, point, t=-1)
    assert KineticConfig(half_split, point).arity == 2


def test_time_zero_is_the_initial_law(kac1):
    cfg = KineticConfig(kac1, uniform, n_samples=100)
    a = wild_sample(cfg, np.random.default_rng(4), size=100, t=0.0).x
    b = uniform(np.random.default_rng(4), 100)
    assert np.array_equal(a, b)
    assert wild_sample(cfg, np.random.default_rng(4), t=0.0).x.shape == (1,)


def test_no_collision_probability(kac1, rng):
    # from a point mass at 1, X_t = 1 exactly when no collision happened
    cfg = KineticConfig(kac1, point)
    for t in (0.5, 1.0):
        x = wild_sample(cfg, rng, size=20_000, t=t).x[:, 0]
        p = np.mean(x == 1.0)
        assert abs(p - math.exp(-t)) < 4 * math.sqrt(p * (1 - p) / x.size)


def test_energy_is_conserved_under_kac1(kac1, rng):
    # sin^2 + cos^2 = 1 keeps E X^2 fixed
    cfg = KineticConfig(kac1, point)
    x = wild_sample(cfg, rng, size=20_000, t=1.5).x[:, 0]
    assert np.mean(x ** 2) == pytest.approx(1.0, abs=0.03)
    y = particle_sample(cfg, [1.5], rng, 20_000)[0][:, 0]
    assert np.mean(y ** 2) == pytest.approx(1.0, abs=0.05)


def test_wild_and_particles_agree(kac1):
    cfg = KineticConfig(kac1, point, n_samples=20_000)
    wild = wild_sample(cfg, np.random.default_rng(1), size=20_000, t=1.0).x[:, 0]
    part = particle_sample(cfg, [1.0], np.random.default_rng(2))[0][:, 0]
    assert abs(np.mean(wild == 1) - np.mean(part == 1)) < 0.02
    assert stats.ks_2samp(wild, part).statistic < 0.03


def test_depth_cap_is_flagged(kac1, rng):
    cfg = KineticConfig(kac1, point, depth_cap=2)
    s = wild_sample(cfg, rng, size=2000, t=3.0)
    assert 0 < s.capped_fraction < 1
    assert expected_wild_leaves(cfg, 2.0) == pytest.approx(math.exp(2.0))


def test_particle_snapshots(kac1):
    cfg = KineticConfig(kac1, point, n_samples=500)
    snaps = particle_sample(cfg, [0.0, 0.5, 0.5, 1.0], np.random.default_rng(0))
    assert len(snaps) == 4 and np.all(snaps[0] == 1.0)
    assert np.array_equal(snaps[1], snaps[2])
    again = particle_sample(cfg, [0.0, 0.5, 0.5, 1.0], np.random.default_rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(snaps, again))
    with pytest.raises(ValueError):
        particle_sample(cfg, [1.0, 0.5], np.random.default_rng(0))


def test_trend_non_increasing():
    assert trend_non_increasing([0.5, 0.3, 0.31, 0.1], 0.02) == (True, 1)
    assert trend_non_increasing([0.5, 0.3, 0.4], 0.02) == (False, 1)


def test_stationary_targets(kac1, kac2, rng):
    cfg = KineticConfig(kac1, uniform)
    target, dist = stationary_target(cfg, None, rng)
    assert target["law"] == "normal"
    assert target["scale"] == pytest.approx(math.sqrt(1 / 3), abs=0.005)
    assert dist(rng.normal(0, math.sqrt(1 / 3), 20_000)) < 0.015
    cauchy = rng.standard_cauchy(50_000)
    target, dist = stationary_target(KineticConfig(kac2, uniform), cauchy, rng)
    assert target["alpha"] == 1.0
    assert target["exponent_scale"] == pytest.approx(1.0, abs=0.03)
    assert dist(cauchy) < 0.01
    with pytest.raises(KineticConfigError):
        stationary_target(KineticConfig(WeightModel("deterministic-split", params={"T": [0.5, 0.5]}),
                                        point), None)


def test_relaxation_of_kac1_on_a_short_ladder(kac1):
    cfg = KineticConfig(kac1, point, n_samples=5000)
    rep = relax_to_stationary(cfg, [0.5, 1.0, 2.0, 4.0], rng=0)
    assert rep.method == "wild"
    assert rep.ks[-1] < rep.ks[0]
    assert rep.non_increasing
    assert len(list(rep.rows())) == 4
    part = relax_to_stationary(cfg, [0.5, 1.0, 2.0, 4.0], rng=0, method="particles")
    assert part.method == "particles" and part.ks[-1] < part.ks[0]
    with pytest.raises(ValueError):
        relax_to_stationary(cfg, [1.0], rng=0, method="euler")
