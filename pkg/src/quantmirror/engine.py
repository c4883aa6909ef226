"""Synchronous simulation of delayed-subgradient mirror descent under adaptive quantization.

One call to :meth:`MirrorDescentEngine.step` performs a full round for all
agents:

1. interval ``d(t) = G alpha(t) beta(t) / sigma`` (same for every coordinate),
2. every agent quantizes ``x_j(t)`` around its mid-value ``z_j(t)``,
3. ``y_i(t) = sum_j P_ij(t) Q(z_j, d, x_j)`` and ``y~_i(t) = Proj(y_i(t))``,
4. subgradient of ``f_i`` at the delayed point ``y~_i(t - tau)``,
5. mirror steps from ``y~_i(t)`` with stepsizes ``alpha(t+1)(1 - beta(t+1))``
   (mid-value ``z``) and ``alpha(t+1)`` (state ``x``).

Every analytic error bound is evaluated on the fly; violations beyond
``MONITOR_TOL`` are collected rather than raised so that a harness can
decide what to do with them.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, GeometryKind, divergence_budget, mirror_step
from .quantizer import payload_bits, quantize

MONITOR_TOL = 1e-8
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class Schedules:
    """Power-law stepsize and quantization sequences plus the delay.

    ``alpha(t) = a0 / (t+1)^rho1`` and ``beta(t) = b0 / (t+1)^rho2``.
    """

    a0: float = 1.0
    rho1: float = 0.5
    b0: float = 1.0
    rho2: float = 0.5
    tau: int = 0

    def __post_init__(self):
        if not (0 < self.rho1 < 1 and 0 < self.rho2 < 1):
            raise ValueError("rho1 and rho2 must lie in (0, 1)")
        if not (0 < self.a0 and 0 < self.b0 <= 1):
            raise ValueError("a0 must be positive and b0 in (0, 1]")
        if self.tau < 0 or int(self.tau) != self.tau:
            raise ValueError("tau must be a nonnegative integer")

    def alpha(self, t):
        return self.a0 / (np.asarray(t, dtype=np.float64) + 1.0) ** self.rho1

    def beta(self, t):
        return self.b0 / (np.asarray(t, dtype=np.float64) + 1.0) ** self.rho2

    @property
    def predicted_rate(self):
        return min(self.rho1, self.rho2, 1.0 - self.rho1)


@dataclass
class StepDiagnostics:
    """Monitored quantities of one round ``t -> t+1`` (arrays are per agent)."""

    t: int
    d: float
    E: float
    quant_err: np.ndarray
    proj_err: np.ndarray
    bregman_err: np.ndarray
    bregman_bound: float
    xz_gap: np.ndarray
    xz_bound: float
    containment_excess: np.ndarray
    descent_slack: np.ndarray
    perturbation_slack: float
    y_outside: int
    bits: int
    violations: list = field(default_factory=list)


@dataclass
class EngineState:
    t: int
    x: np.ndarray
    z: np.ndarray
    history: deque
    running_sum: np.ndarray
    bits_cum: int = 0


@dataclass
class RunRecord:
    """Per-iteration metrics of a run; row ``k`` describes ``T = k + 1``.

    ``f_hat[k, l]`` is the global objective at agent ``l``'s ergodic average
    ``x_hat_l(T) = (1/T) sum_{s=1..T} x_l(s)``; the step columns refer to the
    round that produced ``x(T)``.
    """

    f_hat: np.ndarray
    consensus: np.ndarray
    quant_err_max: np.ndarray
    E_t: np.ndarray
    proj_err_max: np.ndarray
    bregman_err_max: np.ndarray
    containment_max: np.ndarray
    descent_slack_min: np.ndarray
    perturbation_slack_min: np.ndarray
    y_outside: np.ndarray
    bits_cum: np.ndarray
    x_hat: np.ndarray
    violations: list
    meta: dict
    trace: list = field(default_factory=list)

    @property
    def horizon(self):
        return len(self.f_hat)

    @property
    def ok(self):
        return not self.violations

    def violation_summary(self, limit=5):
        by_name = {}
        for t, agent, name, excess in self.violations:
            by_name.setdefault(name, []).append((t, agent, excess))
        return {k: {"count": len(v), "first": v[:limit]} for k, v in by_name.items()}


def descent_inequality_slack(geom, x_star, y_tilde, x_next, g, eta, g_bound):
    """Per-agent slack of the one-step descent inequality.

    ``(1/eta)[V(x*, y~) - V(x*, x+)] + G^2 eta / (2 sigma) - <g, y~ - x*>``,
    which is nonnegative for an exact mirror step with ``||g|| <= G``.
    Arrays are (N, n); ``eta`` is the stepsize actually used for ``x+``.
    """
    if geom.kind is GeometryKind.EUCLIDEAN:
        # ||a||^2 - ||b||^2 = <a - b, a + b> avoids cancellation
        dv = 0.5 * np.einsum("ij,ij->i", x_next - y_tilde, 2 * x_star - y_tilde - x_next)
    else:
        dv = np.array(
            [geom.divergence(x_star, yt) - geom.divergence(x_star, xn) for yt, xn in zip(y_tilde, x_next)]
        )
    inner = np.einsum("ij,ij->i", g, y_tilde - x_star)
    return dv / eta + g_bound**2 * eta / (2 * geom.sigma_phi) - inner


class MirrorDescentEngine:
    """Simulator state and iteration for one run.

    Parameters
    ----------
    problem : DistributedProblem
    geometry : BregmanGeometry
    schedule : GraphSchedule
    schedules : Schedules
    k : int
        Interior quantizer levels (ignored when ``quantize`` is False).
    quantize : bool
        False gives the perfect-channel variant (``e_j(t) = 0``).
    init_points : ndarray, optional
        (N, n) feasible starting points; default is the first feasible-set
        sample drawn with ``seed``.
    init_history : sequence of ndarray, optional
        ``tau`` arrays (N, n) for ``y~(-tau) .. y~(-1)``; default repeats
        ``init_points``.
    monitor_perturbation : bool
        Also evaluate the divergence-perturbation inequality for every
        ``(i, j)`` pair each round (costly, meant for small instances).
    trace : bool
        Keep the full per-round arrays (for replay audits of short runs).
    """

    def __init__(
        self,
        problem,
        geometry,
        schedule,
        schedules,
        k=5,
        quantize=True,
        init_points=None,
        init_history=None,
        seed=0,
        monitor_perturbation=False,
        trace=False,
    ):
        if schedule.n_agents != problem.n_agents:
            raise ValueError("schedule and problem disagree on the number of agents")
        if quantize and (int(k) != k or k < 2):
            raise ValueError("K must be an integer >= 2")
        self.problem = problem
        self.geometry = geometry
        self.feasible_set = problem.feasible_set
        self.schedule = schedule
        self.schedules = schedules
        self.k = int(k)
        self.quantize = bool(quantize)
        self.seed = seed
        self.monitor_perturbation = monitor_perturbation
        self.trace = trace
        self.g_bound = problem.g_bound
        self.x_star = problem.optimizer
        self.budget = divergence_budget(geometry, self.feasible_set, samples=64, seed=seed)
        self.state = self.initialize(init_points, init_history)
        self._trace = []

    # -- setup -------------------------------------------------------------

    def initialize(self, init_points=None, init_history=None):
        N, n = self.problem.n_agents, self.problem.dim
        X = self.feasible_set
        if init_points is None:
            rng = np.random.default_rng(self.seed)
            init_points = X.sample(rng, N)
        x0 = np.array(init_points, dtype=np.float64).reshape(N, n)
        for i, xi in enumerate(x0):
            if not X.contains(xi, FEASIBILITY_TOL):
                raise ValueError(f"initial point of agent {i} is infeasible")
        tau = self.schedules.tau
        if init_history is None:
            init_history = [x0.copy() for _ in range(tau)]
        if len(init_history) != tau:
            raise ValueError(f"expected {tau} history entries, got {len(init_history)}")
        history = deque(maxlen=tau + 1)
        for h in init_history:
            h = np.array(h, dtype=np.float64).reshape(N, n)
            if not all(X.contains(r, FEASIBILITY_TOL) for r in h):
                raise ValueError("initial history must lie in the feasible set")
            history.append(h)
        self.initial_norm_sum = float(np.linalg.norm(x0, axis=1).sum())
        return EngineState(t=0, x=x0, z=x0.copy(), history=history, running_sum=np.zeros_like(x0))

    # -- stepsizes (overridable) ---------------------------------------------

    def x_stepsize(self, t):
        return float(self.schedules.alpha(t + 1))

    def z_stepsize(self, t):
        return float(self.schedules.alpha(t + 1) * (1.0 - self.schedules.beta(t + 1)))

    def interval(self, t):
        s = self.schedules
        return float(self.g_bound * s.alpha(t) * s.beta(t) / self.geometry.sigma_phi)

    def error_bound(self, t):
        return self.problem.dim * self.interval(t) if self.quantize else 0.0

    # -- iteration -----------------------------------------------------------

    def _mirror_rows(self, anchors, G, eta):
        if self.geometry.kind is GeometryKind.EUCLIDEAN and isinstance(self.feasible_set, Box):
            return self.feasible_set.project(anchors - eta * G)
        return np.array([mirror_step(self.geometry, self.feasible_set, a, g, eta) for a, g in zip(anchors, G)])

    def _project_rows(self, Y):
        if isinstance(self.feasible_set, Box):
            return self.feasible_set.project(Y)
        return np.array([self.feasible_set.project(y) for y in Y])

    def step(self):
        """Advance one round; returns the diagnostics of round ``t``."""
        st = self.state
        t = st.t
        N, n = st.x.shape
        X = self.feasible_set
        violations = []

        if self.quantize:
            d = self.interval(t)
            E = self.error_bound(t)
            containment = np.maximum(np.abs(st.x - st.z) - d, 0.0).max(axis=1)
            q = quantize(st.z, d, self.k, st.x)
            bits = self.schedule.message_count(t) * payload_bits(n, self.k)
        else:
            d = E = 0.0
            containment = np.zeros(N)
            q = st.x
            bits = self.schedule.message_count(t) * 64 * n
        e = q - st.x

        P = self.schedule.matrix(t)
        y = P @ q
        y_tilde = self._project_rows(y)
        p = y_tilde - y
        st.history.append(y_tilde)
        delayed = st.history[0]
        g = self.problem.local_subgradients(delayed)

        eta_x, eta_z = self.x_stepsize(t), self.z_stepsize(t)
        x_next = self._mirror_rows(y_tilde, g, eta_x)
        z_next = self._mirror_rows(y_tilde, g, eta_z)

        sigma = self.geometry.sigma_phi
        quant_err = np.linalg.norm(e, axis=1)
        proj_err = np.linalg.norm(p, axis=1)
        bregman_err = np.linalg.norm(x_next - y_tilde, axis=1)
        bregman_bound = self.g_bound * eta_x / sigma
        xz_gap = np.linalg.norm(x_next - z_next, axis=1)
        xz_bound = self.g_bound * float(self.schedules.alpha(t + 1) * self.schedules.beta(t + 1)) / sigma
        slack = descent_inequality_slack(self.geometry, self.x_star, y_tilde, x_next, g, eta_x, self.g_bound)
        pert = self._perturbation_slack(st.x, e, p, E) if self.monitor_perturbation else np.inf

        def flag(name, excess):
            for agent in np.flatnonzero(excess > MONITOR_TOL):
                violations.append((t, int(agent), name, float(excess[agent])))

        flag("containment", containment)
        flag("quantization_error", quant_err - E)
        flag("projection_error", proj_err - 2 * N * E)
        flag("bregman_error", bregman_err - bregman_bound)
        if self.quantize:
            flag("xz_gap", xz_gap - xz_bound)
        flag("descent_slack", -slack)
        if pert < -MONITOR_TOL:
            violations.append((t, -1, "divergence_perturbation", float(-pert)))
        for name, pts in (("infeasible_x", x_next), ("infeasible_z", z_next), ("infeasible_y_tilde", y_tilde)):
            bad = np.array([not X.contains(r, FEASIBILITY_TOL) for r in pts])
            flag(name, bad.astype(float))

        if self.trace:
            self._trace.append(
                {"t": t, "x": st.x, "z": st.z, "d": d, "q": q, "y_tilde": y_tilde, "delayed": delayed,
                 "g": g, "x_next": x_next, "z_next": z_next, "eta_x": eta_x, "eta_z": eta_z}
            )

        st.x, st.z = x_next, z_next
        st.t = t + 1
        st.running_sum = st.running_sum + x_next
        st.bits_cum += bits
        return StepDiagnostics(
            t=t, d=d, E=E, quant_err=quant_err, proj_err=proj_err, bregman_err=bregman_err,
            bregman_bound=bregman_bound, xz_gap=xz_gap, xz_bound=xz_bound,
            containment_excess=containment, descent_slack=slack, perturbation_slack=pert,
            y_outside=int(np.count_nonzero(proj_err > 0)), bits=bits, violations=violations,
        )

    def _perturbation_slack(self, x, e, p, E):
        """Min over (i, j) of RHS - LHS of the divergence-perturbation inequality."""
        geom, N = self.geometry, x.shape[0]
        L = geom.l_phi
        rhs_extra = 2 * (4 * N**2 + 1) * L * E**2 + (2 * N + 1) * L * self.budget.diameter * E
        base = np.array([geom.divergence(self.x_star, xj) for xj in x])
        worst = np.inf
        for i in range(N):
            pts = x + e + p[i]
            if geom.kind is GeometryKind.EUCLIDEAN:
                lhs = 0.5 * np.sum((self.x_star - pts) ** 2, axis=1)
            else:
                lhs = np.array([geom.divergence(self.x_star, q) if np.all(q > 0) else -np.inf for q in pts])
            worst = min(worst, float(np.min(base + rhs_extra - lhs)))
        return worst

    def run(self, T):
        """Execute ``T`` rounds and collect a :class:`RunRecord`."""
        if T < 1:
            raise ValueError("T must be >= 1")
        N = self.problem.n_agents
        cols = {
            name: np.zeros(T)
            for name in (
                "consensus", "quant_err_max", "E_t", "proj_err_max", "bregman_err_max",
                "containment_max", "descent_slack_min", "perturbation_slack_min",
            )
        }
        f_hat = np.zeros((T, N))
        y_outside = np.zeros(T, dtype=np.int64)
        bits_cum = np.zeros(T, dtype=np.int64)
        violations = []
        start = time.perf_counter()
        for k in range(T):
            diag = self.step()
            st = self.state
            x_hat = st.running_sum / st.t
            f_hat[k] = self.problem.objective_many(x_hat)
            cols["consensus"][k] = np.linalg.norm(st.x - st.x.mean(axis=0), axis=1).sum()
            cols["quant_err_max"][k] = diag.quant_err.max()
            cols["E_t"][k] = diag.E
            cols["proj_err_max"][k] = diag.proj_err.max()
            cols["bregman_err_max"][k] = diag.bregman_err.max()
            cols["containment_max"][k] = diag.containment_excess.max()
            cols["descent_slack_min"][k] = diag.descent_slack.min()
            cols["perturbation_slack_min"][k] = diag.perturbation_slack
            y_outside[k] = diag.y_outside
            bits_cum[k] = st.bits_cum
            violations.extend(diag.violations)
        elapsed = time.perf_counter() - start
        mix = self.schedule.mixing
        s = self.schedules
        meta = {
            "n_agents": N,
            "dim": self.problem.dim,
            "k": self.k,
            "quantize": self.quantize,
            "tau": s.tau,
            "a0": s.a0, "rho1": s.rho1, "b0": s.b0, "rho2": s.rho2,
            "g_bound": self.g_bound,
            "sigma_phi": self.geometry.sigma_phi,
            "l_phi": self.geometry.l_phi,
            "d_phi": self.budget.d_phi,
            "omega": mix.omega,
            "gamma": mix.gamma,
            "b_window": self.schedule.b_window,
            "theta": self.schedule.theta,
            "initial_norm_sum": self.initial_norm_sum,
            "optimal_value": self.problem.optimal_value,
            "objective_scaling": "1/N",
            "seed": self.seed,
            "wall_time": elapsed,
        }
        return RunRecord(
            f_hat=f_hat, y_outside=y_outside, bits_cum=bits_cum, x_hat=self.state.running_sum / self.state.t,
            violations=violations, meta=meta, trace=list(self._trace), **cols,
        )


def consensus_profile(record, schedules):
    """Cumulative disagreement ``sum_{t<=T} sum_i ||x_i(t) - x_bar(t)||`` and its envelope.

    Envelope: ``(N omega / (1-gamma)) A + B sum_{t=0..T} (G alpha(t)/sigma + 3 N E(t))``
    with ``B = 2N + N^2 omega / (1 - gamma)`` and ``A = sum_j ||x_j(0)||``.
    Returns ``(measured, envelope)``, both indexed by ``T - 1``.
    """
    m = record.meta
    N, n = m["n_agents"], m["dim"]
    omega, gamma = m["omega"], m["gamma"]
    G, sigma = m["g_bound"], m["sigma_phi"]
    T = record.horizon
    ts = np.arange(T + 1)
    alpha = schedules.alpha(ts)
    E = G * n * alpha * schedules.beta(ts) / sigma if m["quantize"] else np.zeros(T + 1)
    inc = np.cumsum(G * alpha / sigma + 3 * N * E)[1:]
    Bc = 2 * N + N**2 * omega / (1 - gamma)
    envelope = N * omega / (1 - gamma) * m["initial_norm_sum"] + Bc * inc
    return np.cumsum(record.consensus), envelope
