"""Kinetic-type evolution d/dt mu_t + mu_t = Q(mu_t).

``Q(mu)`` is the law of ``sum_j T_j X_j`` with ``X_j`` i.i.d. ``mu`` and
``(T_1..T_N)`` from a collision kernel with no drift term. Two samplers:

* :func:`wild_sample` uses the exact McKean representation. Going back from
  time ``t``, a particle either had no collision (probability ``e^{-t}``)
  and is a draw from ``mu_0``, or its last collision happened an
  exponential time ``s`` ago and it is ``sum_j T_j X_j`` with ``X_j`` i.i.d.
  copies at time ``t - s``. The tree has about ``e^{(N-1) t}`` leaves.
* :func:`particle_sample` runs a finite system of ``n`` particles: each one
  carries a unit-rate clock, and when it rings the particle is replaced by
  ``sum_j T_j X_{k_j}`` with ``k_j`` chosen uniformly among all particles.
  There is no time step; the only error is the finite system size.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._rng import as_generator
from .stable import SpectralMeasure, StableLawSpec, sample_stable
from .verify import ks_distance

DEFAULT_DEPTH_CAP = 40
DEFAULT_LEAF_BUDGET = 2 ** 22
KS_NULL_MEAN = 0.8687      # mean of the Kolmogorov distribution


class KineticConfigError(ValueError):
    pass


def _fixed_arity(model, rng, n=4000):
    T, C = model.draw(rng, n)
    if np.any(C != 0):
        raise KineticConfigError("collision kernels must have C = 0")
    counts = (T != 0).sum(axis=1)
    if counts.min() != counts.max():
        raise KineticConfigError("collision kernels need the same number of weights in every draw")
    if counts[0] < 2:
        raise KineticConfigError("collision kernels need at least two weights per draw")
    return int(counts[0])


@dataclass(frozen=True, eq=False)
class KineticConfig:
    """``initial(rng, size)`` returns ``(size, d)`` draws from mu_0."""

    model: object
    initial: object
    t: float = 1.0
    n_samples: int = 10_000
    depth_cap: int = DEFAULT_DEPTH_CAP
    leaf_budget: int = DEFAULT_LEAF_BUDGET

    def __post_init__(self):
        if not callable(self.initial):
            raise KineticConfigError("initial law must be a sampler callable")
        if self.t < 0:
            raise KineticConfigError("time must be nonnegative")
        if self.model.has_drift:
            raise KineticConfigError("collision kernels must have C = 0")
        if int(self.depth_cap) < 1 or int(self.n_samples) < 1:
            raise KineticConfigError("depth_cap and n_samples must be positive")
        object.__setattr__(self, "arity", _fixed_arity(self.model, np.random.default_rng(0)))

    @property
    def d(self):
        return self.model.d


@dataclass(frozen=True, eq=False)
class KineticSample:
    x: np.ndarray
    capped: np.ndarray      # per draw: the depth cap or leaf budget was hit

    @property
    def capped_fraction(self):
        return float(np.mean(self.capped))


def wild_sample(cfg, rng=None, size=None, t=None):
    """Exact draws from mu_t via randomly stopped McKean trees.

    Branches deeper than ``depth_cap``, or beyond ``leaf_budget`` pending
    branches, are closed with a plain mu_0 draw and the affected samples
    are flagged as capped. At ``t = 0`` the result is exactly
    ``cfg.initial(rng, size)``.
    """
    rng = as_generator(rng)
    t = cfg.t if t is None else float(t)
    n = 1 if size is None else int(size)
    d = cfg.d
    if t == 0:
        x = np.asarray(cfg.initial(rng, n), dtype=float).reshape(n, d)
        return KineticSample(x[0] if size is None else x, np.zeros(n, dtype=bool))

    owner = np.arange(n)
    remaining = np.full(n, t)
    coef = np.ones(n)
    depth = np.zeros(n, dtype=np.int64)
    capped = np.zeros(n, dtype=bool)
    leaf_owner, leaf_coef = [], []
    while owner.size:
        s = rng.exponential(1.0, owner.size)
        stop = s > remaining
        force = ~stop & ((depth >= cfg.depth_cap) | (owner.size > cfg.leaf_budget))
        capped[owner[force]] = True
        leaf = stop | force
        leaf_owner.append(owner[leaf])
        leaf_coef.append(coef[leaf])
        go = ~leaf
        if not np.any(go):
            break
        T, _ = cfg.model.draw(rng, int(go.sum()))
        rows, cols = np.nonzero(T)
        owner = owner[go][rows]
        remaining = (remaining[go] - s[go])[rows]
        coef = coef[go][rows] * T[rows, cols]
        depth = depth[go][rows] + 1
    lo = np.concatenate(leaf_owner)
    lc = np.concatenate(leaf_coef)
    X0 = np.asarray(cfg.initial(rng, lo.size), dtype=float).reshape(lo.size, d)
    x = np.stack([np.bincount(lo, weights=lc * X0[:, k], minlength=n) for k in range(d)], axis=1)
    return KineticSample(x[0] if size is None else x, capped)


def expected_wild_leaves(cfg, t):
    """Mean leaf count of one McKean tree at time ``t``."""
    return math.exp((cfg.arity - 1) * t)


def particle_sample(cfg, times, rng=None, n_particles=None):
    """Snapshots of an ``n_particles`` collision system at each time in ``times``.

    Returns a list of ``(n_particles, d)`` arrays, one per time (sorted
    ascending in the order given).
    """
    rng = as_generator(rng)
    times = [float(s) for s in times]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be non-decreasing")
    n = cfg.n_samples if n_particles is None else int(n_particles)
    d = cfg.d
    X = np.asarray(cfg.initial(rng, n), dtype=float).reshape(n, d).copy()
    t_end = times[-1] if times else 0.0
    n_events = int(rng.poisson(n * t_end))
    # event times of a rate-n Poisson process on [0, t_end], in order
    clock = np.sort(rng.uniform(0.0, t_end, n_events))
    who = rng.integers(0, n, n_events)
    T, _ = cfg.model.draw(rng, n_events)
    K = T.shape[1]
    partners = rng.integers(0, n, (n_events, K))
    snaps = []
    cut = np.searchsorted(clock, times, side="right")
    e = 0
    for stop in cut:
        for i in range(e, stop):
            X[who[i]] = T[i] @ X[partners[i]]
        e = stop
        snaps.append(X.copy())
    return snaps


@dataclass
class RelaxationReport:
    times: list
    ks: list
    noise_level: float
    capped_fraction: list
    method: str
    target: dict
    non_increasing: bool
    inversions: int

    def rows(self):
        for t, k, c in zip(self.times, self.ks, self.capped_fraction):
            yield [t, k, self.noise_level, c]

    def to_dict(self):
        return {"times": self.times, "ks": self.ks, "noise_level": self.noise_level,
                "capped_fraction": self.capped_fraction, "method": self.method,
                "target": self.target, "non_increasing": self.non_increasing,
                "inversions": self.inversions}


def trend_non_increasing(values, tol):
    """(ok, inversions): every rise between neighbours stays within ``tol``."""
    rises = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(rises <= tol)), int(np.sum(rises > 0))


def _kac_beta(model):
    if model.kind not in ("kac", "inelastic-kac"):
        raise KineticConfigError("stationary targets are only known for kac kernels")
    return model.params["beta"]


def stationary_target(cfg, final_samples, rng=None, n_moment=200_000):
    """Target law for a kac kernel as a dict, plus a distance function.

    beta = 1: centred normal with the second moment of mu_0 (conserved).
    beta > 1: symmetric 2/beta-stable, scale fitted so the CF at 1 matches
    the final-time samples.
    """
    beta = _kac_beta(cfg.model)
    if cfg.d != 1:
        raise KineticConfigError("distance to stationarity is implemented for d = 1")
    rng = as_generator(rng)
    if beta == 1:
        x0 = np.asarray(cfg.initial(rng, n_moment), dtype=float).ravel()
        sd = math.sqrt(float(np.mean(x0 ** 2)))
        target = {"law": "normal", "scale": sd}
        return target, lambda x: float(stats.kstest(np.ravel(x), stats.norm(0, sd).cdf).statistic)
    alpha = 2.0 / beta
    phi1 = float(np.mean(np.cos(np.ravel(final_samples))))
    c = -math.log(phi1) if phi1 > 0 else math.inf
    target = {"law": "symmetric-stable", "alpha": alpha, "exponent_scale": c}
    if not (0 < c < math.inf):
        return target, lambda x: 1.0
    if alpha == 1:
        return target, lambda x: float(stats.kstest(np.ravel(x), stats.cauchy(0, c).cdf).statistic)
    spec = StableLawSpec(alpha, SpectralMeasure.from_directions([[1.0]], [c], True), "symmetric")
    ref = sample_stable(spec, rng, 200_000)[:, 0]
    return target, lambda x: ks_distance(np.ravel(x), ref)


def relax_to_stationary(cfg, times, rng=None, method="auto", n_particles=None):
    """KS distance between mu_t and the stationary law over a time ladder.

    ``method`` is ``'wild'`` (exact trees), ``'particles'`` or ``'auto'``,
    which uses trees while the expected leaf count stays within the
    budget and the particle system otherwise.
    """
    rng = as_generator(rng)
    times = sorted(float(s) for s in times)
    n = cfg.n_samples
    if method == "auto":
        heavy = n * expected_wild_leaves(cfg, times[-1])
        method = "wild" if heavy <= 8 * cfg.leaf_budget else "particles"
    sim_rng, target_rng = rng.spawn(2)
    if method == "wild":
        draws = [wild_sample(cfg, r, size=n, t=s) for s, r in zip(times, sim_rng.spawn(len(times)))]
        samples = [k.x for k in draws]
        capped = [k.capped_fraction for k in draws]
    elif method == "particles":
        samples = particle_sample(cfg, times, sim_rng, n_particles)
        capped = [0.0] * len(times)
    else:
        raise ValueError(f"unknown method {method!r}")
    target, dist = stationary_target(cfg, samples[-1], target_rng)
    ks = [dist(x) for x in samples]
    noise = KS_NULL_MEAN / math.sqrt(samples[0].shape[0])
    ok, inv = trend_non_increasing(ks, 2 * noise)
    return RelaxationReport(times, ks, noise, capped, method, target, ok, inv)
