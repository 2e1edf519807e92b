import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from smoothfix.branching import IncompleteTreeError
from smoothfix.fixedpoint import (
    FixedPointSpec, FixedPointSpecError, depth_convergence, fixed_point_sampler, iterate_smoothing,
    regime_label, sample_fixed_point, smoothing_step, snap_alpha, wstar_condition,
)
from smoothfix.stable import SpectralMeasure, StableLawSpec
from smoothfix.verify import empirical_cf, fixed_point_residual, tensor_grid
from smoothfix.weights import WeightModel


def sym(alpha, scale=1.0):
    return StableLawSpec(alpha, SpectralMeasure.from_directions([[1.0]], [scale], True), "symmetric")


def skew(alpha, w=1.0):
    return StableLawSpec(alpha, SpectralMeasure([[1.0]], [w]), "skewed")


def signed_mixture():
    # alpha ~ 1.36, mixed signs, E[Z_1] = 1 with Z_1 in {0.9, 1.1}
    return WeightModel("finite-mixture", params={"components": [
        {"prob": 0.5, "T": [0.45, 0.45]}, {"prob": 0.5, "T": [1.2, -0.1]}]})


def signed_spec(shift, depth):
    base = FixedPointSpec.build(signed_mixture(), shift=shift, tree_depth=depth,
                                n_samples=50_000, rng=0)
    return replace(base, stable_spec=sym(base.alpha, 0.3))


def quarter_split():
    # 2 * 4^-alpha = 1 at alpha = 1/2; W* = sum_n 2^n 4^-n = 2
    return WeightModel("deterministic-split", params={"T": [0.25, 0.25], "C": [1.0]})


@pytest.mark.parametrize("alpha,case,label", [
    (0.5, "CaseI", "a1"), (0.5, "CaseIII", "a2"), (1 + 1e-12, "CaseI", "b1"), (1.0, "CaseII", "b2"),
    (1.5, "CaseI", "c1"), (1.5, "CaseIII", "c2"), (2 - 1e-11, "CaseIII", "d"), (2.0, "CaseI", "d"),
    (3.0, "CaseI", "e"), (2.2, "CaseIII", "e"),
])
def test_regime_labels(alpha, case, label):
    assert regime_label(alpha, case) == label


def test_snap_alpha():
    assert snap_alpha(1.0000000000000007) == 1.0
    assert snap_alpha(1.99999999999) == 2.0
    assert snap_alpha(1.5) == 1.5
    assert snap_alpha(1.0001) == 1.0001


def test_build_classifies_reference_models(kac1, kac2, half_split):
    s = FixedPointSpec.build(kac1, n_samples=2000, rng=0)
    assert (s.alpha, s.case, s.regime) == (2.0, "CaseIII", "d")
    s = FixedPointSpec.build(kac2, n_samples=2000, rng=0)
    assert (s.alpha, s.case, s.regime) == (1.0, "CaseIII", "b2")
    s = FixedPointSpec.build(half_split, shift=[2.0], n_samples=2000, rng=0)
    assert (s.regime, s.shift_term) == ("b1", "W")
    s = FixedPointSpec.build(signed_mixture(), shift=[1.0], n_samples=20_000, rng=0)
    assert s.regime == "c2" and s.z_converges and s.shift_term == "Z"
    assert s.to_dict()["regime"] == "c2"


@pytest.mark.parametrize("alpha,case,stable", [
    (0.5, "CaseIII", skew(0.5)),
    (1.0, "CaseIII", StableLawSpec(1.0, SpectralMeasure([[1.0], [-1.0]], [1.0, 1.0]),
                                   "alpha1-centered")),
    (1.5, "CaseIII", skew(1.5)),
    (2.0, "CaseI", sym(2.0)),
    (2.5, "CaseI", sym(1.5)),
    (1.5, "CaseI", sym(1.2)),
])
def test_disallowed_stable_parts(half_split, alpha, case, stable):
    with pytest.raises(FixedPointSpecError):
        FixedPointSpec(half_split, alpha, case, stable_spec=stable)


def test_allowed_stable_parts(half_split):
    FixedPointSpec(half_split, 0.5, "CaseI", stable_spec=skew(0.5))
    FixedPointSpec(half_split, 0.5, "CaseIII", stable_spec=sym(0.5))
    FixedPointSpec(half_split, 1.0, "CaseI", stable_spec=StableLawSpec(
        1.0, SpectralMeasure([[1.0], [-1.0]], [1.0, 1.0]), "alpha1-centered"))
    FixedPointSpec(half_split, 2.0, "CaseIII",
                   stable_spec=StableLawSpec(2.0, regime="gaussian", gaussian_matrix=[[1.0]]))
    FixedPointSpec(half_split, 2.5, "CaseI", stable_spec=StableLawSpec(2.0, d=1, regime="gaussian"))


def test_shift_gating(half_split):
    for alpha, case in [(0.5, "CaseI"), (0.7, "CaseIII"), (1.0, "CaseIII"), (1.5, "CaseI")]:
        with pytest.raises(FixedPointSpecError, match="no shift"):
            FixedPointSpec(half_split, alpha, case, shift=[1.0])
    with pytest.raises(FixedPointSpecError, match="Z_1 = 1"):
        FixedPointSpec(half_split, 2.5, "CaseIII", shift=[1.0], z_converges=False)
    s = FixedPointSpec(half_split, 2.5, "CaseI", shift=[1.0], z_converges=True)
    assert s.shift_term == "const"
    s = FixedPointSpec(half_split, 1.5, "CaseIII", shift=[1.0], z_converges=False)
    assert s.shift_term is None
    assert any("vanishes" in n for n in s.notes)


def test_other_validation(half_split, kac1):
    with pytest.raises(FixedPointSpecError, match="lattice"):
        FixedPointSpec(replace_lattice(half_split), 1.0, "CaseI")
    with pytest.raises(FixedPointSpecError, match="tilted mean"):
        FixedPointSpec(half_split, 1.0, "CaseI", a4a_holds=False)
    with pytest.raises(FixedPointSpecError, match="differs from alpha"):
        FixedPointSpec(half_split, 1.5, "CaseIII", stable_spec=sym(1.4))
    with pytest.raises(FixedPointSpecError, match="stable law"):
        FixedPointSpec(half_split, 1.0, "CaseI", stable_spec=StableLawSpec(
            1.0, SpectralMeasure([[1.0], [-1.0]], [1.0, 1.0]), "alpha1-centered", shift=[1.0]))
    with pytest.raises(FixedPointSpecError):
        FixedPointSpec(kac1, 2.0, "CaseIII", tree_depth=0)
    with pytest.raises(FixedPointSpecError):
        FixedPointSpec(kac1, 2.0, "CaseIV")


def replace_lattice(model):
    d = model.to_dict()
    d["declared_lattice_free"] = False
    return WeightModel.from_dict(d)


def test_notes_are_recomputed_on_replace(half_split):
    s = FixedPointSpec(half_split, 1.5, "CaseIII", shift=[1.0])
    again = replace(s, tree_depth=3)
    assert again.notes == s.notes and len(again.notes) == 1


def test_wstar_condition(half_split, rng):
    assert wstar_condition(half_split, rng)
    assert wstar_condition(quarter_split(), rng)
    heavy = WeightModel("deterministic-split", params={"T": [0.9, 0.9], "C": [1.0]})
    assert not wstar_condition(heavy, rng)
    s = FixedPointSpec(heavy, 1.0, "CaseI", wstar_verified=False)
    assert "W* convergence unverified" in s.notes


def test_constant_fixed_point_of_the_half_split(half_split, rng):
    spec = FixedPointSpec(half_split, 1.0, "CaseI", shift=[3.0], tree_depth=5)
    draw = sample_fixed_point(spec, rng)
    assert draw.x.tolist() == [3.0] and draw.W == 1.0 and draw.tree is not None
    batch = sample_fixed_point(spec, rng, size=50)
    assert np.all(batch.x == 3.0) and not batch.any_truncated


def test_inhomogeneous_split(rng):
    spec = FixedPointSpec(quarter_split(), 0.5, "CaseI", stable_spec=skew(0.5), tree_depth=12,
                          wstar_verified=True)
    s = sample_fixed_point(spec, rng, size=2000)
    np.testing.assert_allclose(s.Wstar[:, 0], 2 - 2.0 ** -11, rtol=1e-12)
    # X - 2 is a positive 1/2-stable variate
    assert np.all(s.x[:, 0] > 2 - 1e-3)


def test_kac_normal_construction(kac1, rng):
    g = StableLawSpec(2.0, regime="gaussian", gaussian_matrix=[[2.0]])
    spec = FixedPointSpec(kac1, 2.0, "CaseIII", stable_spec=g, tree_depth=3)
    x = sample_fixed_point(spec, rng, size=20_000).x[:, 0]
    assert stats.kstest(x, stats.norm(0, math.sqrt(2)).cdf).pvalue > 1e-3


def test_seeded_sampler_is_reproducible(kac2):
    spec = FixedPointSpec(kac2, 1.0, "CaseIII", stable_spec=sym(1.0), tree_depth=4)
    a = sample_fixed_point(spec, np.random.default_rng(9), size=300).x
    b = sample_fixed_point(spec, np.random.default_rng(9), size=300).x
    assert np.array_equal(a, b)
    sampler = fixed_point_sampler(spec)
    assert sampler(np.random.default_rng(1), 7).shape == (7, 1)


def test_truncation_is_flagged(half_split, rng):
    spec = FixedPointSpec(half_split, 1.0, "CaseI", shift=[1.0], tree_depth=8)
    s = sample_fixed_point(spec, rng, size=3, node_cap=50)
    assert s.any_truncated


def test_smoothing_step_shapes_and_value(half_split, rng):
    ones = lambda r, k: np.ones((k, 1))  # noqa: E731
    assert smoothing_step(half_split, ones, rng).tolist() == [1.0]
    out = smoothing_step(quarter_split(), ones, rng, size=4)
    assert out.shape == (4, 1) and np.all(out == 1.5)


def test_iterate_smoothing_matches_repeated_steps(rng):
    model = quarter_split()
    ones = lambda r, k: np.ones((k, 1))  # noqa: E731
    x = iterate_smoothing(model, ones, 3)(rng, 5)
    # 1 -> 1.5 -> 1.75 -> 1.875
    np.testing.assert_allclose(x, 1.875)
    with pytest.raises(IncompleteTreeError):
        iterate_smoothing(model, ones, 10, node_cap=100)(rng, 2)
    with pytest.raises(ValueError):
        iterate_smoothing(model, ones, 0)


def test_signed_mixture_construction_is_a_fixed_point():
    model = signed_mixture()
    spec = signed_spec([1.0], 6)
    assert spec.shift_term == "Z" and 1 < spec.alpha < 2
    grid = tensor_grid(1, 21, -3, 3)
    for seed in (1, 2):
        rep = fixed_point_residual(model, fixed_point_sampler(spec), grid, n=20_000, rng=seed)
        assert rep.ratio < 3, rep.to_dict()
    # a stable part of the wrong index is not a fixed point
    wrong = lambda r, k: np.asarray(  # noqa: E731
        sample_fixed_point(spec, r, size=k).Z)[:, None] + 0.8 * stats.norm.rvs(size=(k, 1), random_state=r)
    rep = fixed_point_residual(model, wrong, grid, n=20_000, rng=1)
    assert rep.ratio > 3, rep.to_dict()


def test_one_smoothing_step_deepens_the_construction():
    # smoothing the depth-n law gives the depth-(n+1) law
    model = signed_mixture()
    spec = signed_spec([2.0], 2)
    grid = tensor_grid(1, 11, -2, 2)
    n = 40_000
    stepped = smoothing_step(model, fixed_point_sampler(spec), np.random.default_rng(3), size=n)
    deeper = sample_fixed_point(replace(spec, tree_depth=3), np.random.default_rng(4), size=n).x
    a, b = empirical_cf(stepped, grid), empirical_cf(deeper, grid)
    assert np.all(np.abs(a.mean - b.mean) <= 4 * np.hypot(np.abs(a.stderr), np.abs(b.stderr)) + 1e-3)


def test_depth_convergence_shrinks(kac2):
    spec = FixedPointSpec(kac2, 1.0, "CaseIII", stable_spec=sym(1.0), tree_depth=2)
    out = depth_convergence(spec, depths=(2, 4), size=5000, rng=0)
    assert [n for n, _ in out] == [2, 4]
    # kac W_n = 1 exactly, so every depth gives the same law
    assert all(dist < 0.06 for _, dist in out)
