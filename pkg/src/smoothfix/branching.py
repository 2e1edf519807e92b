"""Weighted branching processes on the Ulam-Harris tree.

Trees are stored as breadth-first arenas: node ``i`` has a parent index, the
1-based position ``j`` it occupies among its parent's children, its path
weight ``L``, position ``S = -log|L|`` and sign ``tau``. Nodes of generation
``n`` occupy the contiguous slice ``gen_slice(n)``.

One arena can hold many independent trees (``n_trees`` roots), which is how
replica experiments stay vectorised; every per-tree functional returns an
array with one row per tree.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._rng import as_generator

DEFAULT_NODE_CAP = 2 ** 22


class IncompleteTreeError(RuntimeError):
    """The grown tree does not contain everything the functional needs."""


class UndefinedRatioError(ZeroDivisionError):
    """Sign ratio over an empty stopping line."""


@dataclass(frozen=True, eq=False)
class WeightedTree:
    parent: np.ndarray
    child_index: np.ndarray
    depth: np.ndarray
    tree: np.ndarray
    L: np.ndarray
    S: np.ndarray
    tau: np.ndarray
    anc_max: np.ndarray     # max of S over strict ancestors, -inf at roots
    C: np.ndarray           # (n_nodes, d); meaningful where expanded
    expanded: np.ndarray
    gen_offsets: np.ndarray
    n_trees: int
    max_generation: int
    truncated: bool
    stop_level: float = None

    @property
    def n_nodes(self):
        return self.L.size

    @property
    def n_max(self):
        """Deepest generation present in the arena."""
        return self.gen_offsets.size - 2

    @property
    def partial(self):
        """True when generation sums cannot be taken up to ``max_generation``."""
        return self.truncated or self.stop_level is not None

    @property
    def last_generation(self):
        """Deepest generation over which sums are exact."""
        return self.n_max if self.partial else self.max_generation

    def gen_slice(self, n):
        if n > self.n_max:
            return slice(self.n_nodes, self.n_nodes)
        return slice(self.gen_offsets[n], self.gen_offsets[n + 1])

    def population(self):
        """N_n per tree, shape ``(n_trees, n_max + 1)``."""
        out = np.zeros((self.n_trees, self.n_max + 1), dtype=np.int64)
        for n in range(self.n_max + 1):
            out[:, n] = np.bincount(self.tree[self.gen_slice(n)], minlength=self.n_trees)
        return out

    @property
    def survived(self):
        """Per-tree flag: N_n > 0 for every grown generation."""
        n = min(self.n_max, self.max_generation)
        alive = np.bincount(self.tree[self.gen_slice(n)], minlength=self.n_trees) > 0
        if n < self.max_generation and not self.partial:
            return np.zeros(self.n_trees, dtype=bool)
        return alive

    def abs_L_power(self, alpha, idx=slice(None)):
        """|L(v)|**alpha, switching to exp(-alpha*S) once L has underflowed."""
        L = np.abs(self.L[idx])
        tiny = L < 1e-300
        with np.errstate(divide="ignore", over="ignore"):
            direct = L ** alpha
        return np.where(tiny, np.exp(-alpha * self.S[idx]), direct)

    def address(self, i):
        """Ulam-Harris address of node ``i`` as a tuple of child positions."""
        path = []
        while self.parent[i] >= 0:
            path.append(int(self.child_index[i]))
            i = self.parent[i]
        return tuple(reversed(path))

    def ancestors(self, i):
        """Node indices of the strict ancestors of ``i``, root first."""
        out = []
        i = self.parent[i]
        while i >= 0:
            out.append(int(i))
            i = self.parent[i]
        return out[::-1]

    def children(self, i):
        i = int(i)
        n = int(self.depth[i])
        sl = self.gen_slice(n + 1)
        idx = np.flatnonzero(self.parent[sl] == i) + sl.start
        return idx

    def iter_lines(self):
        """Debug dump: one ``tree address L S tau`` line per node."""
        for i in range(self.n_nodes):
            addr = ".".join(map(str, self.address(i))) or "root"
            yield f"{self.tree[i]}\t{addr}\t{self.L[i]!r}\t{self.S[i]!r}\t{int(self.tau[i])}"


def grow(model, max_generation, rng=None, node_cap=DEFAULT_NODE_CAP, stop_level=None, n_trees=1):
    """Grow ``n_trees`` independent weighted branching trees breadth-first.

    With ``stop_level`` set, a node is only expanded while its own position and
    all ancestor positions are ``<= stop_level``; that is all a stopping line
    at any level up to ``stop_level`` needs.

    If the next generation would push the arena past ``node_cap`` nodes, growth
    stops and the tree is returned with ``truncated=True``.
    """
    rng = as_generator(rng)
    d = model.d
    tree_ids = [np.arange(n_trees, dtype=np.int64)]
    parent = [np.full(n_trees, -1, dtype=np.int64)]
    child_index = [np.zeros(n_trees, dtype=np.int32)]
    depth = [np.zeros(n_trees, dtype=np.int32)]
    L = [np.ones(n_trees)]
    S = [np.zeros(n_trees)]
    tau = [np.ones(n_trees, dtype=np.int8)]
    anc_max = [np.full(n_trees, -np.inf)]
    C_parts, exp_parts = [], []
    offsets = [0, n_trees]
    total = n_trees
    truncated = False

    for g in range(max_generation):
        fL, fS, ftau, fanc = L[-1], S[-1], tau[-1], anc_max[-1]
        m = fL.size
        Cg = np.zeros((m, d))
        expand = np.ones(m, dtype=bool)
        if stop_level is not None:
            expand = np.maximum(fS, fanc) <= stop_level
        idx = np.flatnonzero(expand)
        if idx.size == 0:
            C_parts.append(Cg)
            exp_parts.append(np.zeros(m, dtype=bool))
            break
        T, Cd = model.draw(rng, idx.size)
        rows, cols = np.nonzero(T)
        n_new = rows.size
        if total + n_new > node_cap:
            truncated = True
            C_parts.append(Cg)
            exp_parts.append(np.zeros(m, dtype=bool))
            break
        Cg[idx] = Cd
        C_parts.append(Cg)
        exp_parts.append(expand)
        if n_new == 0:
            break
        p_local = idx[rows]
        Tv = T[rows, cols]
        base = offsets[-2]
        parent.append(base + p_local)
        child_index.append((cols + 1).astype(np.int32))
        depth.append(np.full(n_new, g + 1, dtype=np.int32))
        tree_ids.append(tree_ids[-1][p_local])
        L.append(fL[p_local] * Tv)
        S.append(fS[p_local] - np.log(np.abs(Tv)))
        tau.append((ftau[p_local] * np.sign(Tv)).astype(np.int8))
        anc_max.append(np.maximum(fanc[p_local], fS[p_local]))
        total += n_new
        offsets.append(total)

    # the last generation was never drawn for
    if len(C_parts) < len(L):
        C_parts.append(np.zeros((L[-1].size, d)))
        exp_parts.append(np.zeros(L[-1].size, dtype=bool))

    return WeightedTree(
        parent=np.concatenate(parent), child_index=np.concatenate(child_index),
        depth=np.concatenate(depth), tree=np.concatenate(tree_ids),
        L=np.concatenate(L), S=np.concatenate(S), tau=np.concatenate(tau),
        anc_max=np.concatenate(anc_max), C=np.concatenate(C_parts),
        expanded=np.concatenate(exp_parts), gen_offsets=np.asarray(offsets, dtype=np.int64),
        n_trees=n_trees, max_generation=max_generation, truncated=truncated,
        stop_level=stop_level)


# -- martingales ------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleTrace:
    """Per-tree, per-generation functionals; arrays have a leading tree axis."""

    W: np.ndarray           # sum |L|^alpha over generation n
    Z: np.ndarray           # sum L over generation n
    Wstar: np.ndarray       # sum over |v| < n of L(v) C(v), shape (trees, gens, d)
    N: np.ndarray           # population size
    max_abs_L: np.ndarray   # sup over generation n of |L|
    alpha: float
    partial: bool

    @property
    def generations(self):
        return self.W.shape[1]


def martingale_trace(tree, alpha):
    """W_n, Z_n, W*_n and N_n for n = 0..G.

    ``G`` is the requested depth for a complete tree and the last complete
    generation otherwise (then ``partial`` is set).
    """
    G = tree.last_generation
    partial = tree.partial
    nt, d = tree.n_trees, tree.C.shape[1]
    W = np.zeros((nt, G + 1))
    Z = np.zeros((nt, G + 1))
    N = np.zeros((nt, G + 1), dtype=np.int64)
    M = np.zeros((nt, G + 1))
    Ws = np.zeros((nt, G + 1, d))
    acc = np.zeros((nt, d))
    for n in range(G + 1):
        sl = tree.gen_slice(n)
        ids = tree.tree[sl]
        Ws[:, n] = acc
        W[:, n] = np.bincount(ids, weights=tree.abs_L_power(alpha, sl), minlength=nt)
        Z[:, n] = np.bincount(ids, weights=tree.L[sl], minlength=nt)
        N[:, n] = np.bincount(ids, minlength=nt)
        if ids.size:
            np.maximum.at(M[:, n], ids, np.abs(tree.L[sl]))
            LC = tree.L[sl, None] * tree.C[sl]
            for k in range(d):
                acc[:, k] += np.bincount(ids, weights=LC[:, k], minlength=nt)
    return MartingaleTrace(W=W, Z=Z, Wstar=Ws, N=N, max_abs_L=M, alpha=float(alpha),
                           partial=partial)


# -- stopping lines ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StoppingLine:
    level: float
    members: np.ndarray     # node indices into the tree arena
    tree_of: np.ndarray
    L: np.ndarray
    S: np.ndarray
    tau: np.ndarray
    complete: np.ndarray    # per tree
    n_trees: int

    def per_tree_sum(self, values):
        return np.bincount(self.tree_of, weights=values, minlength=self.n_trees)

    def sizes(self):
        return np.bincount(self.tree_of, minlength=self.n_trees)


def stopping_line(tree, t):
    """First-passage anti-chain: S(v) > t while every ancestor has S <= t.

    A tree is flagged incomplete when some node that could still lead to a
    member (itself and all ancestors at or below ``t``) has no drawn children.
    """
    if t < 0:
        raise ValueError("level t must be nonnegative")
    inside = np.maximum(tree.S, tree.anc_max) <= t
    members = np.flatnonzero((tree.S > t) & (tree.anc_max <= t))
    open_nodes = inside & ~tree.expanded
    incomplete = np.bincount(tree.tree[open_nodes], minlength=tree.n_trees) > 0
    return StoppingLine(level=float(t), members=members, tree_of=tree.tree[members],
                        L=tree.L[members], S=tree.S[members], tau=tree.tau[members],
                        complete=~incomplete, n_trees=tree.n_trees)


def ladder_line(tree):
    """First strictly increasing ladder line.

    Members are the first strict records of ``S`` above ``S(root) = 0`` along
    each path, i.e. the stopping line at level 0.
    """
    return stopping_line(tree, 0.0)


def sign_ratio(tree, t, target_sign, beta, cutoff=math.inf, alpha=None, skip_empty=False):
    """Share of the stopping line at ``t`` carried by nodes of one sign.

    Numerator: sum over line members with ``tau == target_sign`` and
    ``S <= t + cutoff`` of ``exp(-beta (S - t))``. Denominator: sum over all
    members of ``exp(-alpha (S - t))`` (``alpha`` defaults to ``beta``).
    Returns one value per tree; ``skip_empty`` yields NaN for trees with an
    empty line instead of raising.
    """
    if target_sign not in (1, -1):
        raise ValueError("target_sign must be +1 or -1")
    alpha = beta if alpha is None else alpha
    line = stopping_line(tree, t)
    if not np.all(line.complete):
        raise IncompleteTreeError(f"stopping line at t={t} incomplete in "
                                  f"{int(np.sum(~line.complete))} tree(s); grow deeper")
    excess = line.S - t
    sel = (line.tau == target_sign) & (excess <= cutoff)
    num = line.per_tree_sum(np.where(sel, np.exp(-beta * excess), 0.0))
    den = line.per_tree_sum(np.exp(-alpha * excess))
    empty = den == 0
    if np.any(empty) and not skip_empty:
        raise UndefinedRatioError(f"empty stopping line in {int(empty.sum())} tree(s)")
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(empty, np.nan, num / np.where(empty, 1.0, den))
    return ratio


def spinal_sample(tree, n, alpha):
    """Positions S(v) of generation ``n`` with weights |L(v)|**alpha.

    Their weighted law, averaged over trees, is the law of the n-th step of
    the size-biased (spinal) random walk.
    """
    if tree.stop_level is not None or n > tree.last_generation:
        raise IncompleteTreeError(f"generation {n} not fully grown")
    sl = tree.gen_slice(n)
    return tree.S[sl], tree.abs_L_power(alpha, sl), tree.tree[sl]
