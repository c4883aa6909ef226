"""Distributed objective families with exact subgradients and reference optima.

Both families split the objective across ``N`` agents and report the global
objective with a ``1/N`` scaling::

    quadratic   f_j(x) = a_j ||x - b_j||^2
    l1          f_j(x) = a_j ||x - b_j||_1

The subgradient bound ``G`` is computed analytically over the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Box


@dataclass(frozen=True)
class OracleResult:
    x: np.ndarray
    value: float
    exact: bool
    gap: float = 0.0
    iterations: int = 0


class DistributedProblem:
    """Sum of ``N`` local convex functions over a feasible set."""

    def __init__(self, kind, targets, coeffs, feasible_set, seed=None, params=None):
        if kind not in ("quadratic", "l1"):
            raise ValueError(f"unknown problem kind {kind!r}")
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
        if coeffs.size != targets.shape[0]:
            raise ValueError("one coefficient per agent is required")
        if np.any(coeffs <= 0):
            raise ValueError("coefficients a_j must be positive")
        if targets.shape[1] != feasible_set.dim:
            raise ValueError("target dimension does not match the feasible set")
        self.kind = kind
        self.targets = targets
        self.coeffs = coeffs
        self.feasible_set = feasible_set
        self.seed = seed
        self.params = dict(params or {})
        self.g_bound = self._analytic_g_bound()
        self._oracle: Optional[OracleResult] = None

    @property
    def n_agents(self):
        return self.targets.shape[0]

    @property
    def dim(self):
        return self.targets.shape[1]

    # -- local functions ---------------------------------------------------

    def local_values(self, X):
        """``f_j(X_j)`` for each agent; ``X`` is (N, n) or a single point."""
        diff = np.asarray(X) - self.targets
        if self.kind == "quadratic":
            return self.coeffs * np.einsum("ij,ij->i", diff, diff)
        return self.coeffs * np.abs(diff).sum(axis=1)

    def local_subgradients(self, X):
        """Row ``j`` is a subgradient of ``f_j`` at ``X_j`` (ties of |.| broken to 0)."""
        diff = np.asarray(X) - self.targets
        if self.kind == "quadratic":
            return 2.0 * self.coeffs[:, None] * diff
        return self.coeffs[:, None] * np.sign(diff)

    def objective(self, x):
        """Global objective ``(1/N) sum_j f_j(x)``."""
        return float(self.local_values(np.asarray(x, dtype=np.float64)).mean())

    def objective_many(self, xs):
        """Objective for each row of ``xs`` (m, n)."""
        xs = np.asarray(xs, dtype=np.float64)
        diff = xs[:, None, :] - self.targets[None, :, :]
        if self.kind == "quadratic":
            per = np.einsum("mjk,mjk->mj", diff, diff)
        else:
            per = np.abs(diff).sum(axis=2)
        return per @ self.coeffs / self.n_agents

    def _analytic_g_bound(self):
        if self.kind == "quadratic":
            far = [self.feasible_set.farthest_distance(b) for b in self.targets]
            return float(np.max(2.0 * self.coeffs * np.asarray(far)))
        return float(self.coeffs.max() * np.sqrt(self.dim))

    # -- reference optimum -------------------------------------------------

    @property
    def oracle(self):
        if self._oracle is None:
            self._oracle = centralized_oracle(self)
        return self._oracle

    @property
    def optimizer(self):
        return self.oracle.x

    @property
    def optimal_value(self):
        return self.oracle.value

    def to_dict(self):
        return {"kind": self.kind, "n_agents": self.n_agents, "dim": self.dim, "seed": self.seed, **self.params}

    def __repr__(self):
        return f"DistributedProblem(kind={self.kind!r}, N={self.n_agents}, n={self.dim})"


def _sample_targets(rng, feasible_set, n_agents, target_box):
    if target_box is not None:
        lo, hi = target_box
        return rng.uniform(lo, hi, size=(n_agents, feasible_set.dim))
    return feasible_set.sample(rng, n_agents)


def make_estimation_problem(n_agents, dim, coeff_range=(0.5, 1.5), target_box=None, seed=0, feasible_set=None):
    """Weighted least-squares estimation ``f_j(x) = a_j ||x - b_j||^2``.

    ``a_j`` is uniform on ``coeff_range``; targets ``b_j`` are uniform on
    ``target_box`` (a ``(low, high)`` pair, default: the feasible set itself).
    The feasible set defaults to the box ``[-100, 100]^dim``.
    """
    lo, hi = coeff_range
    if lo <= 0 or hi < lo:
        raise ValueError("coeff_range must satisfy 0 < low <= high")
    feasible_set = feasible_set if feasible_set is not None else Box.uniform(dim, -100.0, 100.0)
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(lo, hi, size=n_agents)
    targets = _sample_targets(rng, feasible_set, n_agents, target_box)
    params = {"coeff_range": [float(lo), float(hi)]}
    if target_box is not None:
        params["target_box"] = [float(target_box[0]), float(target_box[1])]
    return DistributedProblem("quadratic", targets, coeffs, feasible_set, seed=seed, params=params)


def make_l1_problem(n_agents, dim, seed=0, feasible_set=None, target_box=None):
    """Non-smooth ``f_j(x) = ||x - b_j||_1`` with targets drawn in the feasible set."""
    feasible_set = feasible_set if feasible_set is not None else Box.uniform(dim, -1.0, 1.0)
    rng = np.random.default_rng(seed)
    targets = _sample_targets(rng, feasible_set, n_agents, target_box)
    params = {}
    if target_box is not None:
        params["target_box"] = [float(target_box[0]), float(target_box[1])]
    return DistributedProblem("l1", targets, np.ones(n_agents), feasible_set, seed=seed, params=params)


def problem_from_dict(data, feasible_set):
    kind = data["kind"]
    tb = data.get("target_box")
    tb = tuple(tb) if tb is not None else None
    if kind == "quadratic":
        return make_estimation_problem(
            int(data["n_agents"]),
            int(data["dim"]),
            coeff_range=tuple(data.get("coeff_range", (0.5, 1.5))),
            target_box=tb,
            seed=int(data.get("seed", 0)),
            feasible_set=feasible_set,
        )
    if kind == "l1":
        return make_l1_problem(int(data["n_agents"]), int(data["dim"]), int(data.get("seed", 0)), feasible_set, tb)
    raise ValueError(f"unknown problem kind {kind!r}")


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------


def weighted_median(values, weights):
    """Lower weighted median: smallest v with cumulative weight >= half the total."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values)[order]
    cw = np.cumsum(np.asarray(weights)[order])
    return float(v[np.searchsorted(cw, 0.5 * cw[-1] - 1e-15 * cw[-1])])


def centralized_oracle(problem, feasible_set=None, tol=1e-10, max_iter=1_000_000):
    """Minimizer and optimal value of the global objective.

    Closed forms cover the quadratic family on any set (projection of the
    weighted centroid) and the l1 family on boxes (clamped coordinate-wise
    weighted medians).  Anything else falls back to a projected subgradient
    run with a certified lower bound; ``exact=False`` then and ``gap`` holds
    the remaining certified suboptimality.
    """
    X = feasible_set if feasible_set is not None else problem.feasible_set
    if problem.kind == "quadratic":
        centroid = problem.coeffs @ problem.targets / problem.coeffs.sum()
        x = X.project(centroid)
        return OracleResult(x, problem.objective(x), exact=True)
    if problem.kind == "l1" and isinstance(X, Box):
        med = np.array(
            [weighted_median(problem.targets[:, k], problem.coeffs) for k in range(problem.dim)]
        )
        x = X.project(med)
        return OracleResult(x, problem.objective(x), exact=True)
    return _subgradient_oracle(problem, X, tol, max_iter)


def _subgradient_oracle(problem, X, tol, max_iter):
    x = X.project(problem.targets.mean(axis=0))
    best_x, best_f = x, problem.objective(x)
    lower = -np.inf
    radius = max(X.farthest_distance(x), 1e-12)
    it = 0
    for it in range(1, max_iter + 1):
        g = problem.local_subgradients(np.broadcast_to(x, problem.targets.shape)).mean(axis=0)
        fx = problem.objective(x)
        if fx < best_f:
            best_x, best_f = x, fx
        # f(y) >= f(x) + <g, y - x> for all feasible y
        v = X.linear_minimize(g)
        lower = max(lower, fx + float(g @ (v - x)))
        if best_f - lower <= tol * max(1.0, abs(best_f)):
            break
        gn = float(np.linalg.norm(g))
        if gn == 0:
            lower = fx
            break
        x = X.project(x - radius / np.sqrt(it) * g / gn)
    gap = max(best_f - lower, 0.0)
    return OracleResult(best_x, best_f, exact=gap <= tol * max(1.0, abs(best_f)), gap=gap, iterations=it)


def grid_oracle(problem, resolution=400, feasible_set=None, chunk=20_000):
    """Brute-force minimum over a regular grid of a box (dims <= 3).

    Returns ``(x_grid, f_grid, cell)`` where ``cell`` is the per-coordinate
    grid spacing.
    """
    X = feasible_set if feasible_set is not None else problem.feasible_set
    if not isinstance(X, Box):
        raise ValueError("grid oracle needs a box feasible set")
    if problem.dim > 3:
        raise ValueError("grid oracle is limited to dims <= 3")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(X.lower, X.upper)]
    cell = (X.upper - X.lower) / (resolution - 1)
    best_f, best_x = np.inf, None
    if problem.dim > 1:
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, problem.dim - 1)
    else:
        rest = np.zeros((1, 0))
    for first in axes[0]:
        pts = np.column_stack([np.full(len(rest), first), rest])
        for start in range(0, len(pts), chunk):
            vals = problem.objective_many(pts[start : start + chunk])
            k = int(np.argmin(vals))
            if vals[k] < best_f:
                best_f, best_x = float(vals[k]), pts[start + k]
    return best_x, best_f, cell


def subgradient_bound_check(problem, samples=10_000, seed=0, points=None):
    """Largest observed ``||g_j(x)|| / G`` over random feasible points (or ``points``)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if points is None:
        rng = np.random.default_rng(seed)
        points = problem.feasible_set.sample(rng, samples)
    worst = 0.0
    for x in np.atleast_2d(points):
        g = problem.local_subgradients(np.broadcast_to(x, problem.targets.shape))
        worst = max(worst, float(np.linalg.norm(g, axis=1).max()))
    return worst / problem.g_bound
