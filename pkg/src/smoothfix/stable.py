"""Multivariate alpha-stable laws with a discrete spectral measure.

Characteristic exponents, written for ``u = <t, s>`` and spectral atoms ``s``
with mass ``w``:

* ``skewed``           ``-sum w |u|^a (1 - i sign(u) tan(pi a / 2))``  (a != 1)
* ``symmetric``        ``-sum w |u|^a``  (spectral measure invariant under s -> -s)
* ``alpha1-centered``  ``i<shift, t> - sum w |u| - i (2/pi) sum w u log|u|``,
  requiring ``sum w s = 0``
* ``gaussian``         ``-t Sigma t^T / 2``

In Samorodnitsky-Taqqu notation each atom contributes ``s * Y`` with
``Y ~ S_a(w**(1/a), beta, 0)``, ``beta = 1`` for the skewed and centred
regimes and ``beta = 0`` for the symmetric one. Scalar variates come from the
Chambers-Mallows-Stuck transform of a uniform angle and an exponential.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_generator

REGIMES = ("skewed", "symmetric", "alpha1-centered", "gaussian")


class StableSpecError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.size == 0:
            atoms = atoms.reshape(0, atoms.shape[-1] if atoms.ndim == 2 else 1)
        if atoms.shape[0] != weights.size:
            raise StableSpecError("need one weight per atom")
        if np.any(weights <= 0):
            raise StableSpecError("spectral weights must be positive")
        if atoms.shape[0] and np.any(np.abs(np.linalg.norm(atoms, axis=1) - 1) > 1e-12):
            raise StableSpecError("spectral atoms must be unit vectors")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if self.symmetric and not _closed_under_reflection(atoms, weights):
            raise StableSpecError("symmetric measure must put equal mass on s and -s")

    @classmethod
    def from_directions(cls, directions, weights, symmetric=False):
        """Normalise ``directions`` to unit length; optionally symmetrise."""
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        w = np.atleast_1d(np.asarray(weights, dtype=float))
        if symmetric and not _closed_under_reflection(dirs, w):
            dirs = np.vstack([dirs, -dirs])
            w = np.concatenate([w, w]) / 2
        return cls(dirs, w, symmetric)

    @classmethod
    def null(cls, d):
        return cls(np.zeros((0, d)), np.zeros(0), symmetric=True)

    @property
    def d(self):
        return self.atoms.shape[1]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def first_moment(self):
        return self.weights @ self.atoms if self.weights.size else np.zeros(self.d)

    def scaled(self, c):
        return SpectralMeasure(self.atoms, self.weights * c, self.symmetric)

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist(),
                "symmetric": self.symmetric}


def _closed_under_reflection(atoms, weights, tol=1e-12):
    for s, w in zip(atoms, weights):
        match = np.all(np.abs(atoms + s) <= tol, axis=1)
        if not np.any(np.abs(weights[match] - w) <= tol * max(1.0, w)):
            return False
    return True


@dataclass(frozen=True, eq=False)
class StableLawSpec:
    alpha: float
    sigma: SpectralMeasure = None
    regime: str = "symmetric"
    shift: np.ndarray = None
    gaussian_matrix: np.ndarray = None
    d: int = field(default=None)

    def __post_init__(self):
        a = float(self.alpha)
        if not 0 < a <= 2:
            raise StableSpecError("alpha must lie in (0, 2]")
        object.__setattr__(self, "alpha", a)
        if self.regime not in REGIMES:
            raise StableSpecError(f"unknown regime {self.regime!r}")
        d = self.d
        if d is None:
            if self.sigma is not None:
                d = self.sigma.d
            elif self.gaussian_matrix is not None:
                d = np.atleast_2d(self.gaussian_matrix).shape[0]
            else:
                d = 1
        object.__setattr__(self, "d", int(d))
        if self.sigma is None:
            object.__setattr__(self, "sigma", SpectralMeasure.null(d))
        if self.sigma.d != d:
            raise StableSpecError("spectral measure dimension does not match d")
        shift = np.zeros(d) if self.shift is None else np.atleast_1d(np.asarray(self.shift, float))
        if shift.size != d:
            raise StableSpecError("shift must have length d")
        object.__setattr__(self, "shift", shift)

        if self.regime == "gaussian":
            if a != 2:
                raise StableSpecError("gaussian regime needs alpha = 2")
            G = np.zeros((d, d)) if self.gaussian_matrix is None else \
                np.atleast_2d(np.asarray(self.gaussian_matrix, dtype=float))
            if G.shape != (d, d) or not np.allclose(G, G.T):
                raise StableSpecError("gaussian matrix must be symmetric d x d")
            if np.linalg.eigvalsh(G).min() < -1e-12:
                raise StableSpecError("gaussian matrix must be positive semi-definite")
            object.__setattr__(self, "gaussian_matrix", G)
        elif self.regime == "skewed":
            if a == 1:
                raise StableSpecError(
                    "alpha = 1 skewed laws are not strictly stable; use 'alpha1-centered' "
                    "with a first-moment-free spectral measure")
        elif self.regime == "symmetric":
            if not self.sigma.symmetric:
                raise StableSpecError("symmetric regime needs a symmetric spectral measure")
        elif self.regime == "alpha1-centered":
            if a != 1:
                raise StableSpecError("alpha1-centered regime needs alpha = 1")
            if np.any(np.abs(self.sigma.first_moment()) > 1e-10):
                raise StableSpecError("alpha1-centered regime needs sum_i w_i s_i = 0")
        if self.regime != "alpha1-centered" and np.any(shift != 0):
            raise StableSpecError("a shift is only part of the alpha1-centered regime")

    @property
    def is_null(self):
        if self.regime == "gaussian":
            return not np.any(self.gaussian_matrix)
        return self.sigma.weights.size == 0

    def scaled(self, c):
        """Same regime with every spectral weight (or Sigma) multiplied by ``c``."""
        if self.regime == "gaussian":
            return StableLawSpec(2.0, regime="gaussian", gaussian_matrix=self.gaussian_matrix * c)
        return StableLawSpec(self.alpha, self.sigma.scaled(c), self.regime, self.shift * c)

    def to_dict(self):
        out = {"alpha": self.alpha, "regime": self.regime, "d": self.d}
        if self.regime == "gaussian":
            out["gaussian_matrix"] = self.gaussian_matrix.tolist()
        else:
            out["sigma"] = self.sigma.to_dict()
        if np.any(self.shift):
            out["shift"] = self.shift.tolist()
        return out

    @classmethod
    def from_dict(cls, cfg):
        cfg = dict(cfg)
        sig = cfg.pop("sigma", None)
        if sig is not None:
            sig = dict(sig)
            if sig.get("normalize", False):
                sig = SpectralMeasure.from_directions(sig["atoms"], sig["weights"],
                                                      sig.get("symmetric", False))
            else:
                sig = SpectralMeasure(sig.get("atoms", np.zeros((0, cfg.get("d", 1)))),
                                      sig.get("weights", []), sig.get("symmetric", False))
        return cls(alpha=cfg.pop("alpha"), sigma=sig, regime=cfg.pop("regime", "symmetric"),
                   shift=cfg.pop("shift", None), gaussian_matrix=cfg.pop("gaussian_matrix", None),
                   d=cfg.pop("d", None))


def stable_cf_exponent(spec, t):
    """Log characteristic function at ``t``.

    ``t`` may be a single point (scalar or length-d vector, returns a complex
    number) or an ``(m, d)`` array of points (returns shape ``(m,)``).
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 0 or (t.ndim == 1 and spec.d > 1) or (t.ndim == 1 and t.size == 1)
    pts = t.reshape(-1, spec.d)
    if spec.regime == "gaussian":
        out = -0.5 * np.einsum("mi,ij,mj->m", pts, spec.gaussian_matrix, pts) + 0j
    else:
        a = spec.alpha
        u = pts @ spec.sigma.atoms.T                      # (m, k)
        w = spec.sigma.weights
        au = np.abs(u)
        if spec.regime == "skewed":
            out = -(w * au ** a * (1 - 1j * np.sign(u) * math.tan(math.pi * a / 2))).sum(axis=1)
        elif spec.regime == "symmetric":
            out = -(w * au ** a).sum(axis=1) + 0j
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                ulog = np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)), 0.0)
            out = 1j * (pts @ spec.shift) - (w * au).sum(axis=1) - 1j * (2 / math.pi) * (w * ulog).sum(axis=1)
    return complex(out[0]) if single else out


def stable_cf(spec, t):
    return np.exp(stable_cf_exponent(spec, t))


def scalar_stable(alpha, beta, size, rng):
    """Standard S_alpha(1, beta, 0) variates (Chambers-Mallows-Stuck)."""
    rng = as_generator(rng)
    V = rng.uniform(-math.pi / 2, math.pi / 2, size)
    E = rng.exponential(1.0, size)
    if alpha == 1:
        h = math.pi / 2 + beta * V
        return (2 / math.pi) * (h * np.tan(V) - beta * np.log((math.pi / 2) * E * np.cos(V) / h))
    zeta = beta * math.tan(math.pi * alpha / 2)
    B = math.atan(zeta) / alpha
    scale = (1 + zeta * zeta) ** (1 / (2 * alpha))
    aVB = alpha * (V + B)
    return (scale * np.sin(aVB) / np.cos(V) ** (1 / alpha)
            * (np.cos(V - aVB) / E) ** ((1 - alpha) / alpha))


def sample_stable(spec, rng=None, size=None):
    """Draw from the law whose characteristic exponent is ``stable_cf_exponent``.

    Returns a length-d vector, or ``(size, d)`` when ``size`` is given.
    """
    rng = as_generator(rng)
    n = 1 if size is None else int(size)
    d = spec.d
    if spec.regime == "gaussian":
        X = rng.multivariate_normal(np.zeros(d), spec.gaussian_matrix, size=n, method="eigh")
    else:
        X = np.zeros((n, d))
        a = spec.alpha
        beta = 0.0 if spec.regime == "symmetric" else 1.0
        for s, w in zip(spec.sigma.atoms, spec.sigma.weights):
            scale = w ** (1 / a)
            Y = scale * scalar_stable(a, beta, n, rng)
            if a == 1 and beta:
                # rescaling an alpha = 1 skewed variate shifts it by (2/pi) beta w log w
                Y += (2 / math.pi) * beta * w * math.log(w)
            X += Y[:, None] * s
        X += spec.shift
    return X[0] if size is None else X
