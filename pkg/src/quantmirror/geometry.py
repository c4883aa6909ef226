"""Bregman geometries, feasible sets and mirror steps.

Two geometries are provided, both with closed-form mirror steps:

* ``euclidean()`` -- phi(x) = 0.5 * ||x||^2, usable over any feasible set.
* ``negative_entropy(dim)`` -- phi(x) = sum x log x, restricted to the
  simplex with every coordinate bounded below by ``eps / dim``.  The lower
  bound keeps the gradient of phi Lipschitz on the set.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

DEFAULT_ENTROPY_EPS = 1e-6


def _as_point(x, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


# --------------------------------------------------------------------------
# Feasible sets
# --------------------------------------------------------------------------


class Box:
    """Axis-aligned box ``{x : lower <= x <= upper}``."""

    kind = "box"

    def __init__(self, lower, upper):
        lower = _as_point(lower, "lower")
        upper = _as_point(upper, "upper")
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper coordinate-wise")
        self.lower = lower
        self.upper = upper

    @classmethod
    def uniform(cls, dim, low, high):
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self):
        return self.lower.size

    def project(self, y):
        return np.clip(y, self.lower, self.upper)

    def contains(self, x, tol=0.0):
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def farthest_distance(self, b):
        """sup over the box of ``||x - b||``, attained at a corner."""
        b = np.asarray(b, dtype=np.float64)
        far = np.maximum(np.abs(self.upper - b), np.abs(b - self.lower))
        return float(np.linalg.norm(far))

    def farthest_point(self, b):
        b = np.asarray(b, dtype=np.float64)
        return np.where(np.abs(self.upper - b) >= np.abs(b - self.lower), self.upper, self.lower)

    def linear_minimize(self, c):
        """argmin over the box of ``<c, x>``."""
        return np.where(np.asarray(c) > 0, self.lower, self.upper)

    def sample(self, rng, size):
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))

    def extreme_points(self, limit=256):
        """Up to ``limit`` corners (all of them when ``2**dim <= limit``)."""
        n = self.dim
        count = min(2**n, limit)
        idx = np.arange(count)[:, None]
        bits = (idx >> np.arange(n)[None, :]) & 1
        return np.where(bits == 1, self.upper, self.lower)

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"Box(dim={self.dim})"


class Simplex:
    """Probability simplex with an optional per-coordinate floor.

    The set is ``{x : sum(x) = 1, x >= floor}``; ``floor = 0`` gives the full
    simplex.  Requires ``dim * floor <= 1``.
    """

    kind = "simplex"

    def __init__(self, dim, floor=0.0):
        dim = int(dim)
        if dim < 1:
            raise ValueError("simplex dimension must be >= 1")
        floor = float(floor)
        if floor < 0 or dim * floor > 1 + 1e-15:
            raise ValueError("simplex floor must satisfy 0 <= dim * floor <= 1")
        self._dim = dim
        self.floor = floor

    @property
    def dim(self):
        return self._dim

    @property
    def radius(self):
        # mass left above the floor
        return max(0.0, 1.0 - self._dim * self.floor)

    def project(self, y):
        y = np.asarray(y, dtype=np.float64)
        return self.floor + _project_scaled_simplex(y - self.floor, self.radius)

    def contains(self, x, tol=0.0):
        x = np.asarray(x)
        return bool(abs(x.sum() - 1.0) <= max(tol, 1e-12) and np.all(x >= self.floor - tol))

    def vertices(self):
        return self.floor + self.radius * np.eye(self._dim)

    def extreme_points(self, limit=256):
        return self.vertices()[:limit]

    def farthest_distance(self, b):
        b = np.asarray(b, dtype=np.float64)
        return float(np.max(np.linalg.norm(self.vertices() - b, axis=1)))

    def farthest_point(self, b):
        v = self.vertices()
        return v[int(np.argmax(np.linalg.norm(v - np.asarray(b), axis=1)))]

    def linear_minimize(self, c):
        return self.vertices()[int(np.argmin(c))]

    def sample(self, rng, size):
        return self.floor + self.radius * rng.dirichlet(np.ones(self._dim), size=size)

    def to_dict(self):
        return {"kind": "simplex", "dim": self._dim, "floor": self.floor}

    def __repr__(self):
        return f"Simplex(dim={self._dim}, floor={self.floor:g})"


def _project_scaled_simplex(v, radius):
    """Euclidean projection of ``v`` onto ``{w >= 0, sum(w) = radius}``."""
    n = v.size
    if radius <= 0:
        return np.zeros(n)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    rho = ks[cond][-1]
    shift = css[rho - 1] / rho
    return np.maximum(v - shift, 0.0)


def feasible_set_from_dict(data):
    kind = data["kind"]
    if kind == "box":
        return Box(data["lower"], data["upper"])
    if kind == "simplex":
        return Simplex(data["dim"], data.get("floor", 0.0))
    raise ValueError(f"unknown feasible set kind {kind!r}")


def euclidean_project(feasible_set, y):
    """Nearest point of ``feasible_set`` to ``y`` in the Euclidean norm."""
    return feasible_set.project(_as_point(y, "y"))


# --------------------------------------------------------------------------
# Geometries
# --------------------------------------------------------------------------


class GeometryKind(str, Enum):
    EUCLIDEAN = "euclidean"
    NEGATIVE_ENTROPY = "negative_entropy"


@dataclass(frozen=True)
class BregmanGeometry:
    """Distance-generating function together with its constants.

    Attributes
    ----------
    kind : GeometryKind
    sigma_phi : float
        Strong-convexity modulus of phi (Euclidean norm).
    l_phi : float
        Lipschitz constant of grad phi on the domain.
    floor : float
        Smallest admissible coordinate (entropy only).
    """

    kind: GeometryKind
    sigma_phi: float
    l_phi: float
    floor: float = 0.0

    def phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind is GeometryKind.EUCLIDEAN:
            return 0.5 * float(x @ x)
        if np.any(x < 0):
            raise ValueError("negative entropy requires nonnegative coordinates")
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(np.sum(np.where(x > 0, x * np.log(x), 0.0)))

    def grad_phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind is GeometryKind.EUCLIDEAN:
            return x.copy()
        if np.any(x <= 0):
            raise ValueError("grad of negative entropy requires strictly positive coordinates")
        return 1.0 + np.log(x)

    def divergence(self, a, b):
        return bregman_divergence(self, a, b)

    def mirror_step(self, feasible_set, anchor, g, eta):
        return mirror_step(self, feasible_set, anchor, g, eta)

    def to_dict(self):
        return {"kind": self.kind.value, "floor": self.floor}


def euclidean():
    return BregmanGeometry(GeometryKind.EUCLIDEAN, sigma_phi=1.0, l_phi=1.0)


def negative_entropy(dim, eps=DEFAULT_ENTROPY_EPS):
    """Negative entropy on the eps-interior of the ``dim``-simplex.

    The eps-interior is ``(1 - eps) * simplex + eps * uniform``, i.e. every
    coordinate is at least ``eps / dim``.  On it phi is 1-strongly convex and
    its gradient is ``dim / eps``-Lipschitz.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    floor = eps / dim
    return BregmanGeometry(GeometryKind.NEGATIVE_ENTROPY, sigma_phi=1.0, l_phi=1.0 / floor, floor=floor)


def geometry_from_dict(data, dim):
    kind = GeometryKind(data["kind"])
    if kind is GeometryKind.EUCLIDEAN:
        return euclidean()
    floor = data.get("floor")
    eps = DEFAULT_ENTROPY_EPS if floor is None else floor * dim
    return negative_entropy(dim, eps)


def entropy_simplex(dim, eps=DEFAULT_ENTROPY_EPS):
    """Matching (geometry, feasible set) pair for the entropy setup."""
    geom = negative_entropy(dim, eps)
    return geom, Simplex(dim, geom.floor)


def bregman_divergence(geom, a, b):
    """``V(a, b) = phi(a) - phi(b) - <grad phi(b), a - b>``."""
    a = _as_point(a, "a")
    b = _as_point(b, "b")
    if a.shape != b.shape:
        raise ValueError("a and b must have the same dimension")
    if geom.kind is GeometryKind.EUCLIDEAN:
        diff = a - b
        return 0.5 * float(diff @ diff)
    if np.any(b <= 0):
        raise ValueError("negative-entropy divergence needs strictly positive b")
    if np.any(a < 0):
        raise ValueError("negative-entropy divergence needs nonnegative a")
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0) / b), 0.0)
    val = float(np.sum(xlogx - a + b))
    return max(val, 0.0)


def _check_pairing(geom, feasible_set):
    if geom.kind is GeometryKind.NEGATIVE_ENTROPY:
        if not isinstance(feasible_set, Simplex):
            raise ValueError("negative entropy geometry is only supported on the simplex")
        if feasible_set.floor < geom.floor * (1 - 1e-12):
            raise ValueError("simplex floor must be at least the entropy floor")


def mirror_step(geom, feasible_set, anchor, g, eta):
    """``argmin_{x in set} <g, x> + V(x, anchor) / eta`` in closed form."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    anchor = _as_point(anchor, "anchor")
    g = _as_point(g, "g")
    _check_pairing(geom, feasible_set)
    if geom.kind is GeometryKind.EUCLIDEAN:
        return feasible_set.project(anchor - eta * g)
    return _entropy_step(anchor, g, eta, feasible_set.floor)


def _entropy_step(anchor, g, eta, floor):
    if np.any(anchor <= 0):
        raise ValueError("entropy mirror step needs a strictly positive anchor")
    logits = np.log(anchor) - eta * g
    s = np.exp(logits - logits.max())
    n = s.size
    if floor <= 0:
        return s / s.sum()
    if n * floor >= 1 - 1e-15:
        return np.full(n, 1.0 / n)
    # water-filling: x_i = max(floor, c * s_i) with sum(x) = 1
    order = np.argsort(s)
    s_sorted = s[order]
    tail = np.cumsum(s_sorted[::-1])[::-1]
    for k in range(n):
        c = (1.0 - k * floor) / tail[k]
        if c * s_sorted[k] >= floor and (k == 0 or c * s_sorted[k - 1] <= floor):
            return np.maximum(floor, c * s)
    raise RuntimeError("entropy mirror step failed to locate the normalising constant")


def optimality_residual(geom, feasible_set, anchor, g, eta, result, points):
    """Smallest value of ``<eta g + grad phi(result) - grad phi(anchor), x - result>``.

    Evaluated over the rows of ``points``; a mirror step is optimal when the
    returned value is nonnegative (up to rounding).
    """
    direction = eta * np.asarray(g) + geom.grad_phi(result) - geom.grad_phi(anchor)
    return float(np.min((np.asarray(points) - result) @ direction))


def prox_nonexpansiveness_gap(geom, feasible_set, anchor, g1, g2, eta):
    """``(eta / sigma) ||g2 - g1|| - ||step(g2) - step(g1)||``; nonnegative in theory."""
    x1 = mirror_step(geom, feasible_set, anchor, g1, eta)
    x2 = mirror_step(geom, feasible_set, anchor, g2, eta)
    bound = eta / geom.sigma_phi * float(np.linalg.norm(np.asarray(g2) - np.asarray(g1)))
    return bound - float(np.linalg.norm(x2 - x1))


# --------------------------------------------------------------------------
# Divergence budget
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceBudget:
    """Uniform bound ``d_phi`` on V over the set and the implied diameter."""

    d_phi: float
    diameter: float
    sampled_max: float
    analytic: bool


def _analytic_budget(geom, feasible_set) -> Optional[float]:
    if geom.kind is GeometryKind.EUCLIDEAN:
        if isinstance(feasible_set, Box):
            return 0.5 * float(np.sum((feasible_set.upper - feasible_set.lower) ** 2))
        if isinstance(feasible_set, Simplex):
            # two vertices are the farthest pair
            return feasible_set.radius**2 if feasible_set.dim > 1 else 0.0
        return None
    if isinstance(feasible_set, Simplex):
        # V is jointly convex, so the sup is at a pair of distinct vertices
        f, r = feasible_set.floor, feasible_set.radius
        if feasible_set.dim == 1 or r == 0:
            return 0.0
        if f == 0:
            return float("inf")
        return r * float(np.log((f + r) / f))
    return None


def divergence_budget(geom, feasible_set, samples=1000, seed=0):
    """Bound ``D_phi >= sup V(x, y)`` over the feasible set.

    The analytic supremum is used whenever it is known; a sampled maximum
    over random points and extreme points is always computed alongside it.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _check_pairing(geom, feasible_set)
    rng = np.random.default_rng(seed)
    pts = np.vstack([feasible_set.extreme_points(64), feasible_set.sample(rng, samples)])
    pairs = rng.integers(0, len(pts), size=(max(samples, len(pts)), 2))
    sampled = 0.0
    for i, j in pairs:
        sampled = max(sampled, bregman_divergence(geom, pts[i], pts[j]))
    analytic = _analytic_budget(geom, feasible_set)
    d_phi = sampled if analytic is None else analytic
    return DivergenceBudget(
        d_phi=d_phi,
        diameter=float(np.sqrt(2.0 * d_phi / geom.sigma_phi)),
        sampled_max=sampled,
        analytic=analytic is not None,
    )
