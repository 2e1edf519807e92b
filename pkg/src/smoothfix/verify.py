"""Monte Carlo checks of fixed-point equations and martingale claims."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, stats

from ._rng import as_generator
from .branching import DEFAULT_NODE_CAP, IncompleteTreeError, grow, martingale_trace

CONVERGING_BELOW = 0.75
DIVERGING_ABOVE = 1.25
STEP_ZERO = 1e-12


class GridExtrapolationError(ValueError):
    """Scaled grid points T_j t left the region where the CF lookup is valid."""


# -- grids and empirical characteristic functions ----------------------------


@dataclass(frozen=True, eq=False)
class CfGrid:
    points: np.ndarray
    axes: tuple = None      # per-axis coordinates when the grid is a tensor grid

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.size == 0 or not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite and non-empty")
        if not np.any(np.all(pts == 0, axis=1)):
            raise ValueError("grid must contain t = 0")
        object.__setattr__(self, "points", pts)

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def lo(self):
        return self.points.min(axis=0)

    @property
    def hi(self):
        return self.points.max(axis=0)

    def __len__(self):
        return self.points.shape[0]


def tensor_grid(d, n, lo=-5.0, hi=5.0):
    axis = np.linspace(lo, hi, n)
    if lo < 0 < hi and not np.any(axis == 0):
        axis = np.sort(np.append(axis, 0.0))
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return CfGrid(pts, axes=(axis,) * d)


def default_grid(d=1):
    """41 points on [-5, 5] for d = 1, an 11-per-axis tensor grid otherwise."""
    return tensor_grid(d, 41 if d == 1 else 11)


@dataclass(frozen=True, eq=False)
class CfEstimate:
    grid: CfGrid
    mean: np.ndarray        # complex
    stderr: np.ndarray      # complex: stderr of real part + 1j * stderr of imaginary part
    n_samples: int


def _as_samples(samples, d=None):
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if d in (None, 1) else x[None, :]
    return x


def empirical_cf(samples, grid, chunk=64):
    """Mean of exp(i<t, x>) at every grid point, with jackknife standard errors.

    The jackknife standard error of a sample mean is ``sd / sqrt(n)``, which
    is what is computed; the value at ``t = 0`` is exactly one.
    """
    x = _as_samples(samples, grid.d)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty sample batch")
    if n < 100:
        raise ValueError(f"need at least 100 samples for a CF estimate, got {n}")
    if x.shape[1] != grid.d:
        raise ValueError("sample dimension does not match grid dimension")
    pts = grid.points
    m = pts.shape[0]
    mean = np.empty(m, dtype=complex)
    se = np.empty(m, dtype=complex)
    for s in range(0, m, chunk):
        arg = x @ pts[s:s + chunk].T
        c, si = np.cos(arg), np.sin(arg)
        mean[s:s + chunk] = c.mean(axis=0) + 1j * si.mean(axis=0)
        se[s:s + chunk] = (c.std(axis=0, ddof=1) + 1j * si.std(axis=0, ddof=1)) / math.sqrt(n)
    zero = np.all(pts == 0, axis=1)
    mean[zero] = 1.0
    se[zero] = 0.0
    return CfEstimate(grid, mean, se, n)


# -- fixed-point residual ------------------------------------------------------


class CfLookup:
    """Empirical CF tabulated on a fine tensor grid, interpolated multilinearly.

    Points outside the tabulated box go to ``fallback`` (an analytic CF) when
    one is given and raise :class:`GridExtrapolationError` otherwise.
    """

    def __init__(self, samples, lo, hi, n_per_axis=None, fallback=None):
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        d = lo.size
        if n_per_axis is None:
            n_per_axis = 801 if d == 1 else (61 if d == 2 else 15)
        self.lo, self.hi, self.fallback = lo, hi, fallback
        axes = [np.linspace(a, b, n_per_axis) if b > a else np.array([a]) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        table = empirical_cf(samples, CfGrid(np.vstack([np.stack([m.ravel() for m in mesh], 1),
                                                        np.zeros((1, d))]))).mean[:-1]
        self.axes = axes
        self.values = table.reshape([a.size for a in axes])
        if d > 1:
            self._interp = interpolate.RegularGridInterpolator(axes, self.values)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        tol = 1e-12 * max(1.0, float(np.abs(np.concatenate([self.lo, self.hi])).max()))
        inside = np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)
        out = np.empty(pts.shape[0], dtype=complex)
        if not np.all(inside):
            if self.fallback is None:
                worst = float(np.abs(pts[~inside]).max())
                raise GridExtrapolationError(
                    f"{int((~inside).sum())} scaled points fall outside the CF lookup box "
                    f"[{self.lo.tolist()}, {self.hi.tolist()}] (max |coordinate| {worst:.3g}); "
                    "widen the grid or pass an analytic cf")
            out[~inside] = self.fallback(pts[~inside])
        p = np.clip(pts[inside], self.lo, self.hi)
        if len(self.axes) == 1:
            ax = self.axes[0]
            vals = self.values
            out[inside] = np.interp(p[:, 0], ax, vals.real) + 1j * np.interp(p[:, 0], ax, vals.imag)
        else:
            out[inside] = self._interp(p)
        return out


@dataclass(frozen=True, eq=False)
class ResidualReport:
    sup_residual: float
    per_point: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    noise_floor: float
    grid: CfGrid
    n: int

    @property
    def passed(self):
        return self.sup_residual <= self.noise_floor

    @property
    def ratio(self):
        return self.sup_residual / self.noise_floor if self.noise_floor > 0 else math.inf

    def to_dict(self):
        return {"sup_residual": self.sup_residual, "noise_floor": self.noise_floor,
                "ratio": self.ratio, "passed": self.passed, "n": self.n}

    def rows(self):
        """One row per grid point: coordinates, |residual|, lhs and rhs parts."""
        for t, r, a, b in zip(self.grid.points, self.per_point, self.lhs, self.rhs):
            yield [*t.tolist(), float(r), a.real, a.imag, b.real, b.imag]


def fixed_point_residual(model, sampler, grid=None, n=100_000, rng=None, cf=None,
                         n_weights=None, floor_factor=1.5, lookup_points=None):
    """Sup distance between phi(t) and E[exp(i<t, C>) prod_j phi(T_j t)].

    Two independent halves ``A`` and ``B`` of size ``n`` are drawn from
    ``sampler(rng, n)``. The left side is the empirical CF of ``A``; the right
    side averages over ``n_weights`` fresh weight draws with phi looked up in
    a fine interpolated table of the empirical CF of ``B``. The noise floor
    is ``floor_factor`` times the sup distance between the two halves.
    """
    rng = as_generator(rng)
    grid = default_grid(model.d) if grid is None else grid
    ra, rb, rw = rng.spawn(3)
    xa = _as_samples(sampler(ra, n), grid.d)
    xb = _as_samples(sampler(rb, n), grid.d)
    lhs = empirical_cf(xa, grid)
    same_grid = empirical_cf(xb, grid).mean
    floor = floor_factor * float(np.abs(lhs.mean - same_grid).max())

    nw = n if n_weights is None else int(n_weights)
    T, C = model.draw(rw, nw)
    # T t can flip sign, and weights above 1 in modulus push it beyond the grid
    reach = max(1.0, float(np.abs(T).max(initial=0.0)))
    radius = np.maximum(np.abs(grid.lo), np.abs(grid.hi)) * reach
    if lookup_points is None and grid.d == 1 and reach > 1:
        lookup_points = int(math.ceil(800 * reach)) + 1
    lookup = CfLookup(xb, -radius, radius, lookup_points, fallback=cf)
    K = T.shape[1]
    pts = grid.points
    rhs = np.empty(len(grid), dtype=complex)
    # keep each block of (draws x points x children) around a few million entries
    block = max(1, 4_000_000 // max(1, nw * max(K, 1)))
    for s in range(0, len(grid), block):
        tb = pts[s:s + block]
        val = np.exp(1j * (C @ tb.T))                       # (nw, b)
        for j in range(K):
            Tj = T[:, j]
            scaled = Tj[:, None, None] * tb[None, :, :]      # (nw, b, d)
            phi = lookup(scaled.reshape(-1, grid.d)).reshape(nw, -1)
            val *= np.where(Tj[:, None] != 0, phi, 1.0)
        rhs[s:s + block] = val.mean(axis=0)
    per_point = np.abs(lhs.mean - rhs)
    return ResidualReport(float(per_point.max()), per_point, lhs.mean, rhs, floor, grid, n)


# -- multiplicative martingale ------------------------------------------------


def multiplicative_martingale(tree, phi, t, up_to_n):
    """M_0(t), ..., M_n(t) for every tree in the arena.

    ``M_n(t) = exp(i sum_{|v|<n} L(v) <C(v), t>) prod_{|v|=n} phi(L(v) t)``
    where ``phi`` maps an ``(m, d)`` array of points to ``m`` complex values.
    Returns an array of shape ``(n_trees, up_to_n + 1)``.
    """
    if up_to_n > tree.last_generation:
        raise IncompleteTreeError(f"tree is only complete to generation {tree.last_generation}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d = tree.C.shape[1]
    if t.size != d:
        raise ValueError("t must have length d")
    nt = tree.n_trees
    out = np.empty((nt, up_to_n + 1), dtype=complex)
    phase = np.zeros(nt)
    for n in range(up_to_n + 1):
        sl = tree.gen_slice(n)
        ids = tree.tree[sl]
        L = tree.L[sl]
        prod = np.ones(nt, dtype=complex)
        if ids.size:
            vals = np.asarray(phi(L[:, None] * t[None, :]), dtype=complex)
            # generation slices are ordered by tree id
            starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
            prod[ids[starts]] = np.multiply.reduceat(vals, starts)
        out[:, n] = np.exp(1j * phase) * prod
        if ids.size:
            phase += np.bincount(ids, weights=L * (tree.C[sl] @ t), minlength=nt)
    return out


# -- Kolmogorov-Smirnov ------------------------------------------------------------


def ks_distance(samples_a, samples_b, direction=None):
    """Two-sample Kolmogorov-Smirnov statistic.

    Multivariate batches are projected on ``direction`` first.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if direction is not None:
        u = np.asarray(direction, dtype=float)
        a, b = _as_samples(a, u.size) @ u, _as_samples(b, u.size) @ u
    elif a.ndim > 1 and a.shape[1] > 1:
        raise ValueError("multivariate samples need a projection direction")
    a, b = a.ravel(), b.ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample batch")
    return float(stats.ks_2samp(a, b).statistic)


def _weighted_ecdf(x, w, at):
    order = np.argsort(x, kind="stable")
    xs, cw = x[order], np.cumsum(w[order])
    cw /= cw[-1]
    idx = np.searchsorted(xs, at, side="right")
    return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)


def weighted_ks_distance(x, wx, y, wy=None):
    """Sup distance between the weighted empirical CDFs of ``x`` and ``y``."""
    x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
    wx = np.asarray(wx, float).ravel()
    wy = np.ones_like(y) if wy is None else np.asarray(wy, float).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("empty sample batch")
    at = np.concatenate([x, y])
    return float(np.abs(_weighted_ecdf(x, wx, at) - _weighted_ecdf(y, wy, at)).max())


def effective_sample_size(w):
    """Kish effective sample size of a weight vector."""
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / np.sum(w * w))


# -- martingale audit ------------------------------------------------------------


def classify_trend(values, n):
    """Trend of a replica matrix ``values[:, k]`` by comparing generation n with n // 2.

    ``level(k)`` is the root mean square of the values, ``step(k)`` that of
    the one-generation increments. A level ratio below 0.75 means the values
    shrink to zero; a stable level with a step ratio below 0.75 (or steps at
    rounding level) means convergence to a nonzero limit; either ratio
    above 1.25 means divergence; anything else is inconclusive.
    """
    h = max(1, n // 2)
    level = np.sqrt(np.mean(values ** 2, axis=0))
    step = np.sqrt(np.mean(np.diff(values, axis=1) ** 2, axis=0))
    lv_n, lv_h = level[n], level[h]
    st_n, st_h = step[n - 1], step[h - 1]
    info = {"level_n": float(lv_n), "level_half": float(lv_h),
            "step_n": float(st_n), "step_half": float(st_h)}
    if lv_n == 0 and lv_h == 0:
        return "converging-to-zero", info
    r_level = lv_n / lv_h if lv_h > 0 else math.inf
    info["level_ratio"] = float(r_level)
    # steps at rounding level count as exactly zero
    tiny = STEP_ZERO * max(lv_n, lv_h, 1.0)
    if st_n <= tiny:
        info["step_ratio"] = 0.0
        return ("converging-nonzero" if lv_n > tiny else "converging-to-zero"), info
    r_step = st_n / st_h if st_h > 0 else math.inf
    info["step_ratio"] = float(r_step)
    if r_level < CONVERGING_BELOW:
        return "converging-to-zero", info
    if r_level > DIVERGING_ABOVE or r_step > DIVERGING_ABOVE:
        return "diverging", info
    if r_step < CONVERGING_BELOW:
        return "converging-nonzero", info
    return "inconclusive", info


@dataclass
class AuditReport:
    alpha: float
    depth: int
    replicas: int
    W_mean: np.ndarray
    W_sd: np.ndarray
    Z_mean: np.ndarray
    Z_sd: np.ndarray
    absZ_mean: np.ndarray
    Z_rms: np.ndarray
    W_trend: str
    Z_trend: str
    details: dict = field(default_factory=dict)
    truncated: bool = False

    def rows(self):
        for n in range(self.depth + 1):
            yield [n, self.W_mean[n], self.W_sd[n], self.Z_mean[n], self.Z_sd[n],
                   self.absZ_mean[n], self.Z_rms[n]]

    def to_dict(self):
        return {"alpha": self.alpha, "depth": self.depth, "replicas": self.replicas,
                "W_trend": self.W_trend, "Z_trend": self.Z_trend, "details": self.details,
                "truncated": self.truncated}


def replica_martingales(model, alpha, depth, replicas, rng, node_cap=DEFAULT_NODE_CAP,
                        chunk=None):
    """Per-replica W_n and Z_n, shape ``(replicas, depth + 1)`` each."""
    rng = as_generator(rng)
    T, _ = model.draw(np.random.default_rng(0), 2000)
    mN = max(float((T != 0).sum(axis=1).mean()), 1e-9)
    per_tree = sum(mN ** k for k in range(depth + 1))
    if chunk is None:
        chunk = int(max(1, min(replicas, node_cap // max(2.0 * per_tree, 1.0))))
    Ws, Zs, trunc = [], [], False
    done = 0
    while done < replicas:
        k = min(chunk, replicas - done)
        tree = grow(model, depth, rng, node_cap=node_cap, n_trees=k)
        tr = martingale_trace(tree, alpha)
        if tr.generations < depth + 1:
            trunc = True
            pad = depth + 1 - tr.generations
            Ws.append(np.pad(tr.W, ((0, 0), (0, pad)), constant_values=np.nan))
            Zs.append(np.pad(tr.Z, ((0, 0), (0, pad)), constant_values=np.nan))
        else:
            Ws.append(tr.W)
            Zs.append(tr.Z)
        done += k
    return np.vstack(Ws), np.vstack(Zs), trunc


def audit_from_replicas(W, Z, alpha, truncated=False):
    """Summarise replica matrices ``W[:, n]``, ``Z[:, n]`` into an :class:`AuditReport`."""
    depth = W.shape[1] - 1
    W_trend, w_info = classify_trend(W, depth)
    Z_trend, z_info = classify_trend(Z, depth)
    return AuditReport(
        alpha=float(alpha), depth=depth, replicas=W.shape[0],
        W_mean=W.mean(axis=0), W_sd=W.std(axis=0, ddof=1),
        Z_mean=Z.mean(axis=0), Z_sd=Z.std(axis=0, ddof=1),
        absZ_mean=np.abs(Z).mean(axis=0), Z_rms=np.sqrt(np.mean(Z ** 2, axis=0)),
        W_trend=W_trend, Z_trend=Z_trend, details={"W": w_info, "Z": z_info},
        truncated=truncated)


def martingale_audit(model, alpha, depth=12, replicas=2000, rng=None, node_cap=DEFAULT_NODE_CAP):
    """Replica means and spreads of W_n, Z_n and |Z_n|, with trend labels."""
    if depth < 2:
        raise ValueError("depth must be at least 2")
    W, Z, trunc = replica_martingales(model, alpha, depth, replicas, rng, node_cap)
    if trunc:
        raise IncompleteTreeError(f"trees exceeded node_cap={node_cap} before depth {depth}")
    return audit_from_replicas(W, Z, alpha)
