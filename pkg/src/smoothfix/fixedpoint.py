"""Sampling fixed points of the smoothing transform.

Every fixed point is represented as ``W* + Z a + W**(1/alpha) Y`` where
``(W*, W, Z)`` are limits of tree functionals and ``Y`` is strictly stable and
independent of the tree. Limits are replaced by their values at a finite
depth ``tree_depth``; all three come from the same tree.

Which stable part and which shift are allowed depends on ``alpha`` and on
the sign structure of the weights:

=========  =======================  ==========================
alpha      positive weights only    negative weights present
=========  =======================  ==========================
(0, 1)     skewed, no shift         symmetric, no shift
1          centred, shift ``W a``   symmetric, no shift
(1, 2)     skewed, no shift         symmetric, shift ``Z a``
2          gaussian, shift ``Z a``  gaussian, shift ``Z a``
> 2        none, constant shift     none, constant shift
=========  =======================  ==========================

Above 2 the constant shift must vanish unless ``Z_1 = 1`` almost surely.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_generator
from .branching import DEFAULT_NODE_CAP, IncompleteTreeError, grow, martingale_trace
from .stable import StableLawSpec, sample_stable
from .weights import (
    CaseLabel, check_assumptions, compute_pq, estimate_m, expected_Z1,
    solve_characteristic_index,
)

ALPHA_SNAP = 1e-9


class FixedPointSpecError(ValueError):
    pass


def snap_alpha(alpha):
    """Round numerically solved indices onto the boundary values 1 and 2."""
    for b in (1.0, 2.0):
        if abs(alpha - b) < ALPHA_SNAP:
            return b
    return float(alpha)


def regime_label(alpha, case):
    """Short label of the alpha/sign regime, e.g. ``'c2'``."""
    a = snap_alpha(alpha)
    one_signed = case == "CaseI"
    if a > 2:
        return "e"
    if a == 2:
        return "d"
    if a < 1:
        return "a1" if one_signed else "a2"
    if a == 1:
        return "b1" if one_signed else "b2"
    return "c1" if one_signed else "c2"


_STABLE_REGIMES = {
    "a1": ("skewed", "symmetric"),
    "a2": ("symmetric",),
    "b1": ("alpha1-centered", "symmetric"),
    "b2": ("symmetric",),
    "c1": ("skewed", "symmetric"),
    "c2": ("symmetric",),
    "d": ("gaussian",),
    "e": (),
}
_SHIFT_REGIMES = ("b1", "c2", "d", "e")


@dataclass(frozen=True, eq=False)
class FixedPointSpec:
    """A validated recipe for one fixed point.

    ``z_converges`` records whether ``Z_n`` has a nonzero a.s. limit
    (``E[Z_1] = 1`` for alpha in (1, 2], ``Z_1 = 1`` a.s. above 2); ``None``
    means unknown and is treated as no. ``wstar_verified`` is whether a
    sufficient condition for ``W*_n`` to converge could be checked.
    """

    model: object
    alpha: float
    case: object
    stable_spec: StableLawSpec = None
    shift: np.ndarray = None
    tree_depth: int = 12
    w_convention: bool = True
    z_converges: bool = None
    wstar_verified: bool = None
    a4a_holds: bool = True
    notes: list = field(default_factory=list, init=False)

    def __post_init__(self):
        alpha = snap_alpha(float(self.alpha))
        if not alpha > 0:
            raise FixedPointSpecError("alpha must be positive")
        object.__setattr__(self, "alpha", alpha)
        case = self.case.case if isinstance(self.case, CaseLabel) else str(self.case)
        if case not in ("CaseI", "CaseII", "CaseIII"):
            raise FixedPointSpecError(f"unknown case {case!r}")
        if int(self.tree_depth) < 1:
            raise FixedPointSpecError("tree_depth must be a positive integer")
        object.__setattr__(self, "tree_depth", int(self.tree_depth))
        if not self.w_convention:
            raise FixedPointSpecError("only the E[W] = 1 normalisation of W is supported")
        if self.model.declared_lattice_free is False:
            raise FixedPointSpecError("model is declared lattice; fixed points are not "
                                      "characterised for lattice weights")
        if not self.a4a_holds:
            raise FixedPointSpecError("the tilted mean of log|T| is not negative (or W log W is "
                                      "not integrable); W_n does not approximate W")
        d = self.model.d
        reg = regime_label(alpha, case)
        notes = []

        st = self.stable_spec
        if st is not None and st.d != d:
            raise FixedPointSpecError("stable part dimension differs from model dimension")
        if st is not None and not st.is_null:
            allowed = _STABLE_REGIMES[reg]
            if not allowed:
                raise FixedPointSpecError("for alpha > 2 the only solutions are shifts of W*; "
                                          "the stable part must be null")
            if st.regime not in allowed:
                raise FixedPointSpecError(
                    f"stable regime {st.regime!r} not allowed here (alpha={alpha}, {case}); "
                    f"allowed: {allowed}")
            if abs(st.alpha - alpha) > 1e-6:
                raise FixedPointSpecError(f"stable index {st.alpha} differs from alpha {alpha}")
            if np.any(st.shift != 0):
                raise FixedPointSpecError("put the shift on the fixed-point spec, not the stable law")
        shift = np.zeros(d) if self.shift is None else np.atleast_1d(np.asarray(self.shift, float))
        if shift.size != d:
            raise FixedPointSpecError("shift must have length d")
        object.__setattr__(self, "shift", shift)
        if np.any(shift != 0):
            if reg not in _SHIFT_REGIMES:
                raise FixedPointSpecError(f"no shift term exists in regime {reg} "
                                          f"(alpha={alpha}, {case})")
            if reg == "e" and not self.z_converges:
                raise FixedPointSpecError("alpha > 2: a nonzero shift needs Z_1 = 1 almost surely")
            if reg in ("c2", "d") and not self.z_converges:
                notes.append("Z_n has no nonzero limit here; the Z a term vanishes")
        if self.model.has_drift and not self.wstar_verified:
            notes.append("W* convergence unverified")
        object.__setattr__(self, "notes", notes)
        object.__setattr__(self, "case", case)

    @property
    def regime(self):
        return regime_label(self.alpha, self.case)

    @property
    def shift_term(self):
        """What multiplies the shift: 'W', 'Z', 'const' or None."""
        if not np.any(self.shift):
            return None
        reg = self.regime
        if reg == "b1":
            return "W"
        if reg in ("c2", "d"):
            return "Z" if self.z_converges else None
        return "const"

    @property
    def d(self):
        return self.model.d

    @classmethod
    def build(cls, model, stable_spec=None, shift=None, tree_depth=12, rng=None,
              n_samples=200_000):
        """Solve for alpha, classify the case and check the gating facts."""
        rng = as_generator(rng)
        ci = solve_characteristic_index(model, rng=rng, n_samples=n_samples)
        alpha = snap_alpha(ci.alpha)
        case = compute_pq(model, alpha, n_samples=n_samples, rng=rng)
        report = check_assumptions(model, alpha, rng=rng, n_samples=n_samples)
        zmean, zse, p_one = expected_Z1(model, n_samples=n_samples, rng=rng)
        if alpha > 2:
            z_conv = p_one == 1.0
        elif alpha > 1:
            z_conv = abs(zmean - 1) <= max(3 * zse, 1e-12)
        else:
            z_conv = False
        return cls(model=model, alpha=alpha, case=case, stable_spec=stable_spec, shift=shift,
                   tree_depth=tree_depth, z_converges=z_conv,
                   wstar_verified=wstar_condition(model, rng=rng),
                   a4a_holds=report.holds("A4a"))

    def to_dict(self):
        return {
            "model": self.model.to_dict(), "alpha": self.alpha, "case": self.case,
            "regime": self.regime,
            "stable": None if self.stable_spec is None else self.stable_spec.to_dict(),
            "shift": self.shift.tolist(), "tree_depth": self.tree_depth,
            "z_converges": self.z_converges, "wstar_verified": self.wstar_verified,
            "notes": list(self.notes),
        }


def wstar_condition(model, rng=None, n_samples=100_000):
    """Whether W*_n is known to converge: C = 0, or m(b) < 1 for some b in (0, 1].

    C has finite moments of every order for the built-in kinds, so the
    moment half of the condition is automatic.
    """
    if not model.has_drift:
        return True
    rng = as_generator(rng)
    for b in np.linspace(0.1, 1.0, 10):
        est = estimate_m(model, b, n_samples=n_samples, rng=rng)
        if not est.infinite and est.mean + 3 * est.stderr < 1:
            return True
    return False


@dataclass(frozen=True, eq=False)
class FixedPointSample:
    """Draws with their tree diagnostics.

    For a single draw the arrays are scalars / length-d vectors and ``tree``
    holds the arena that produced them.
    """

    x: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    Wstar: np.ndarray
    truncated: np.ndarray
    depth: int
    tree: object = None

    @property
    def any_truncated(self):
        return bool(np.any(self.truncated))


def _mean_offspring(model, rng, n=2000):
    T, _ = model.draw(rng, n)
    return max(float((T != 0).sum(axis=1).mean()), 1e-9)


def _chunk_size(model, depth, n, node_cap, rng):
    mN = _mean_offspring(model, np.random.default_rng(12345) if model.analytic else rng)
    per_tree = sum(mN ** k for k in range(depth + 1))
    return int(max(1, min(n, node_cap // max(2.0 * per_tree, 1.0))))


def _forest_functionals(model, depth, n, alpha, rng, node_cap):
    """W_n, Z_n, W*_n at generation ``depth`` for ``n`` independent trees."""
    d = model.d
    W, Z, Ws = np.empty(n), np.empty(n), np.empty((n, d))
    trunc = np.zeros(n, dtype=bool)
    chunk = _chunk_size(model, depth, n, node_cap, rng)
    start = 0
    while start < n:
        k = min(chunk, n - start)
        tree = grow(model, depth, rng, node_cap=node_cap, n_trees=k)
        tr = martingale_trace(tree, alpha)
        G = tr.generations - 1
        W[start:start + k] = tr.W[:, G]
        Z[start:start + k] = tr.Z[:, G]
        Ws[start:start + k] = tr.Wstar[:, G]
        trunc[start:start + k] = tree.truncated
        start += k
    return W, Z, Ws, trunc, tree


def sample_fixed_point(spec, rng=None, size=None, node_cap=DEFAULT_NODE_CAP):
    """Draw ``W*_n + (shift term) + W_n**(1/alpha) Y`` at depth ``spec.tree_depth``.

    The tree and the stable part use separate child streams of ``rng``.
    """
    rng = as_generator(rng)
    tree_rng, y_rng = rng.spawn(2)
    n = 1 if size is None else int(size)
    depth = spec.tree_depth
    if size is None:
        tree = grow(spec.model, depth, tree_rng, node_cap=node_cap)
        tr = martingale_trace(tree, spec.alpha)
        G = tr.generations - 1
        W, Z, Ws = tr.W[:, G], tr.Z[:, G], tr.Wstar[:, G]
        trunc = np.array([tree.truncated])
    else:
        W, Z, Ws, trunc, _ = _forest_functionals(spec.model, depth, n, spec.alpha, tree_rng,
                                                 node_cap)
        tree = None
    x = Ws.copy()
    term = spec.shift_term
    if term == "W":
        x += W[:, None] * spec.shift
    elif term == "Z":
        x += Z[:, None] * spec.shift
    elif term == "const":
        x += spec.shift
    st = spec.stable_spec
    if st is not None and not st.is_null:
        Y = sample_stable(st, y_rng, n)
        x += (W ** (1.0 / spec.alpha))[:, None] * Y
    if size is None:
        return FixedPointSample(x[0], float(W[0]), float(Z[0]), Ws[0], trunc, depth, tree)
    return FixedPointSample(x, W, Z, Ws, trunc, depth)


def fixed_point_sampler(spec, node_cap=DEFAULT_NODE_CAP):
    """``sampler(rng, size) -> (size, d)`` wrapper around :func:`sample_fixed_point`."""
    def sampler(rng, size):
        return sample_fixed_point(spec, rng, size=size, node_cap=node_cap).x
    return sampler


def _as_batch(values, size, d):
    values = np.asarray(values, dtype=float)
    return values.reshape(size, d)


def smoothing_step(model, input_sampler, rng=None, size=None):
    """One application of the smoothing transform.

    ``input_sampler(rng, k)`` must return ``k`` i.i.d. draws as a ``(k, d)``
    array. Returns one draw of ``sum_j T_j X_j + C`` (or ``size`` of them).
    """
    rng = as_generator(rng)
    n = 1 if size is None else int(size)
    T, C = model.draw(rng, n)
    K, d = T.shape[1], model.d
    out = C.astype(float)
    if K:
        X = _as_batch(input_sampler(rng, n * K), n * K, d).reshape(n, K, d)
        out = out + np.einsum("nk,nkd->nd", T, X)
    return out[0] if size is None else out


def iterate_smoothing(model, input_sampler, n_iters, node_cap=DEFAULT_NODE_CAP):
    """Sampler for the ``n_iters``-fold smoothing transform of the input law.

    Each draw grows a tree of depth ``n_iters`` and returns
    ``sum_{|v|=n} L(v) X(v) + W*_n``.
    """
    n_iters = int(n_iters)
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")

    def sampler(rng, size):
        rng = as_generator(rng)
        d = model.d
        out = np.empty((size, d))
        chunk = _chunk_size(model, n_iters, size, node_cap, rng)
        start = 0
        while start < size:
            k = min(chunk, size - start)
            tree = grow(model, n_iters, rng, node_cap=node_cap, n_trees=k)
            if tree.truncated:
                raise IncompleteTreeError(f"depth-{n_iters} tree exceeded node_cap={node_cap}")
            tr = martingale_trace(tree, 1.0)
            sl = tree.gen_slice(n_iters)
            leaves = tree.L[sl]
            X = _as_batch(input_sampler(rng, leaves.size), leaves.size, d) if leaves.size \
                else np.zeros((0, d))
            acc = tr.Wstar[:, n_iters].copy()
            for j in range(d):
                acc[:, j] += np.bincount(tree.tree[sl], weights=leaves * X[:, j], minlength=k)
            out[start:start + k] = acc
            start += k
        return out

    return sampler


def depth_convergence(spec, depths=(4, 6, 8, 10), size=20_000, rng=None, grid=None, step=2):
    """Sup CF distance between depth-n and depth-(n + step) constructions.

    Returns ``[(n, distance), ...]``; shrinking distances indicate the depth
    truncation is under control.
    """
    from dataclasses import replace

    from .verify import default_grid, empirical_cf

    rng = as_generator(rng)
    grid = default_grid(spec.d) if grid is None else grid
    out = []
    for n, child in zip(depths, rng.spawn(len(depths))):
        a, b = child.spawn(2)
        xa = sample_fixed_point(replace(spec, tree_depth=n), a, size=size).x
        xb = sample_fixed_point(replace(spec, tree_depth=n + step), b, size=size).x
        dist = np.abs(empirical_cf(xa, grid).mean - empirical_cf(xb, grid).mean).max()
        out.append((n, float(dist)))
    return out
