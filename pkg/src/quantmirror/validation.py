"""Aggregated invariant checks, the replay audit and mutation hooks.

``validate_suite`` runs every module's property checks plus a short traced
engine run whose every step is recomputed by an independent scalar-loop
reference (``replay_audit``).  ``mutate`` injects a known defect so the
suite's sensitivity can itself be tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import MONITOR_TOL, MirrorDescentEngine, Schedules, consensus_profile
from .geometry import (
    Box,
    bregman_divergence,
    entropy_simplex,
    euclidean,
    mirror_step,
    optimality_residual,
    prox_nonexpansiveness_gap,
)
from .network import check_assumptions, make_gossip_cycle, make_metropolis_sequence, mixing_check, ring_edges
from .problems import make_estimation_problem, make_l1_problem, subgradient_bound_check
from .quantizer import QuantizedMessage, decode, encode, QuantizerSpec, level_indices, quantize

MUTATIONS = (None, "drop-beta-factor", "k1")


@dataclass
class CheckLine:
    name: str
    passed: bool
    worst: float
    detail: str = ""

    def __str__(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name:<46} worst={self.worst:.6g} {self.detail}".rstrip()


@dataclass
class ValidationReport:
    lines: list = field(default_factory=list)
    mutation: str | None = None

    @property
    def passed(self):
        return all(line.passed for line in self.lines)

    def add(self, name, passed, worst, detail=""):
        self.lines.append(CheckLine(name, bool(passed), float(worst), detail))

    def __str__(self):
        head = f"validation (mutation={self.mutation})" if self.mutation else "validation"
        tail = "ALL PASS" if self.passed else "FAILURES PRESENT"
        return "\n".join([head, *map(str, self.lines), tail])


class _DropBetaEngine(MirrorDescentEngine):
    """Defective engine: the mid-value update uses the full stepsize."""

    def z_stepsize(self, t):
        return self.x_stepsize(t)


# --------------------------------------------------------------------------
# Replay audit
# --------------------------------------------------------------------------


def _ref_quantize(z, d, k, x):
    s = x - z
    if s < -d:
        return z - d
    if s >= d:
        return z + d
    j = min(int(math.floor((s + d) * k / (2 * d))), k - 1)
    return z + (2 * j - k) * d / k


def replay_audit(engine, record, tol=1e-9):
    """Recompute every traced round with plain scalar loops.

    Supports the Euclidean geometry on boxes.  Returns the largest
    discrepancy (relative to ``1 + |value|``) between the engine's arrays and
    the reference recursion, together with the first step where it exceeds
    ``tol``.
    """
    if not isinstance(engine.feasible_set, Box):
        raise ValueError("replay audit supports box feasible sets only")
    prob, s = engine.problem, engine.schedules
    lo, hi = engine.feasible_set.lower, engine.feasible_set.upper
    N, n = prob.n_agents, prob.dim
    G, sigma = prob.g_bound, engine.geometry.sigma_phi
    trace = record.trace
    if not trace:
        raise ValueError("record carries no trace; run the engine with trace=True")
    history = [[row.copy() for row in trace[0]["x"]] for _ in range(s.tau)]
    x = [row.copy() for row in trace[0]["x"]]
    z = [row.copy() for row in trace[0]["z"]]
    worst, first_bad = 0.0, None

    def cmp(ref, got, t):
        nonlocal worst, first_bad
        err = float(np.max(np.abs(np.asarray(ref) - got) / (1 + np.abs(got))))
        worst = max(worst, err)
        if err > tol and first_bad is None:
            first_bad = t

    for step in trace:
        t = step["t"]
        alpha = s.a0 / (t + 1) ** s.rho1
        beta = s.b0 / (t + 1) ** s.rho2
        d = G * alpha * beta / sigma
        if engine.quantize:
            q = [[_ref_quantize(z[j][c], d, engine.k, x[j][c]) for c in range(n)] for j in range(N)]
        else:
            q = [list(x[j]) for j in range(N)]
        P = engine.schedule.matrix(t)
        y_t = []
        for i in range(N):
            row = []
            for c in range(n):
                acc = 0.0
                for j in range(N):
                    if P[i, j] != 0:
                        acc += P[i, j] * q[j][c]
                row.append(min(max(acc, lo[c]), hi[c]))
            y_t.append(row)
        history.append(y_t)
        delayed = history.pop(0) if s.tau > 0 else y_t
        a_next = s.a0 / (t + 2) ** s.rho1
        b_next = s.b0 / (t + 2) ** s.rho2
        x_new, z_new = [], []
        for i in range(N):
            a_i, b_i = prob.coeffs[i], prob.targets[i]
            xr, zr = [], []
            for c in range(n):
                diff = delayed[i][c] - b_i[c]
                if prob.kind == "quadratic":
                    g = 2 * a_i * diff
                else:
                    g = a_i * ((diff > 0) - (diff < 0))
                xr.append(min(max(y_t[i][c] - a_next * g, lo[c]), hi[c]))
                zr.append(min(max(y_t[i][c] - a_next * (1 - b_next) * g, lo[c]), hi[c]))
            x_new.append(xr)
            z_new.append(zr)
        cmp(q, step["q"], t)
        cmp(y_t, step["y_tilde"], t)
        cmp(x_new, step["x_next"], t)
        cmp(z_new, step["z_next"], t)
        x, z = [np.array(r) for r in x_new], [np.array(r) for r in z_new]
    return worst, first_bad


# --------------------------------------------------------------------------
# Module checks
# --------------------------------------------------------------------------


def _geometry_checks(report, rng, trials):
    eu = euclidean()
    box = Box.uniform(4, -2.0, 3.0)
    ent, simplex = entropy_simplex(4)
    worst_gap = np.inf
    worst_opt = np.inf
    worst_sc = np.inf
    worst_sep = np.inf
    worst_feas = 0.0
    for geom, X in ((eu, box), (ent, simplex)):
        pts = X.sample(rng, trials + 1)
        for a, b in zip(pts[:-1], pts[1:]):
            v = bregman_divergence(geom, a, b)
            worst_sc = min(worst_sc, v - 0.5 * geom.sigma_phi * float(np.sum((a - b) ** 2)))
        for _ in range(trials):
            anchor = X.sample(rng, 1)[0]
            g1, g2 = rng.normal(size=(2, X.dim)) * rng.uniform(0.1, 5)
            eta = rng.uniform(0.01, 1.0)
            worst_gap = min(worst_gap, prox_nonexpansiveness_gap(geom, X, anchor, g1, g2, eta))
            res = mirror_step(geom, X, anchor, g1, eta)
            worst_feas = max(worst_feas, 0.0 if X.contains(res, 1e-9) else 1.0)
            probe = np.vstack([X.extreme_points(16), X.sample(rng, 8)])
            worst_opt = min(worst_opt, optimality_residual(geom, X, anchor, g1, eta, res, probe))
        for _ in range(max(trials // 10, 1)):
            a = X.sample(rng, 1)[0]
            bs = X.sample(rng, 4)
            w = rng.dirichlet(np.ones(4))
            lhs = bregman_divergence(geom, a, w @ bs)
            rhs = sum(wi * bregman_divergence(geom, a, bi) for wi, bi in zip(w, bs))
            worst_sep = min(worst_sep, rhs - lhs)
    report.add("geometry: strong convexity", worst_sc >= -1e-10, worst_sc)
    report.add("geometry: prox nonexpansiveness", worst_gap >= -MONITOR_TOL, worst_gap)
    report.add("geometry: mirror-step optimality", worst_opt >= -1e-8, worst_opt)
    report.add("geometry: mirror-step feasibility", worst_feas == 0, worst_feas)
    report.add("geometry: separate convexity", worst_sep >= -1e-10, worst_sep)


def _quantizer_checks(report, rng, k, samples):
    n = 10
    z = rng.uniform(-50, 50, size=(samples, n))
    d = rng.uniform(1e-3, 10, size=(samples, 1))
    x = z + d * rng.uniform(-1, 1, size=(samples, n))
    err = np.abs(quantize(z, d, k, x) - x)
    coord = float((err - d).max())
    norm = float((np.linalg.norm(err, axis=1) - math.sqrt(n) * d[:, 0]).max())
    report.add(f"quantizer: per-coordinate |x-Q| <= d (K={k})", coord <= 1e-12, coord)
    report.add(f"quantizer: vector bound sqrt(n)|d| (K={k})", norm <= 1e-12, norm)
    bad = 0
    for zi, di, xi in zip(z[:500], d[:500], x[:500]):
        spec = QuantizerSpec(max(k, 2), zi, di)
        msg = encode(spec, xi)
        back = QuantizedMessage.from_bytes(msg.to_bytes(), n, spec.k)
        if not np.array_equal(decode(spec, back), quantize(zi, di, spec.k, xi)):
            bad += 1
    report.add("quantizer: codec round trip", bad == 0, bad)
    idx = level_indices(z, d, max(k, 2), x)
    mono = np.all(np.diff(quantize(0.0, 1.0, max(k, 2), np.linspace(-2, 2, 4001))) >= 0)
    report.add("quantizer: monotone levels", bool(mono) and idx.max() <= max(k, 2) + 1, float(idx.max()))


def _network_checks(report):
    ring = make_gossip_cycle(30, ring_edges(30))
    metro = make_metropolis_sequence(30, seed=0)
    for label, sched in (("gossip ring", ring), ("metropolis", metro)):
        res = check_assumptions(sched, horizon=4 * sched.b_window)
        ok = all(r.passed for r in res.values())
        report.add(f"network: assumptions ({label})", ok, res["doubly_stochastic"].value)
    mix = mixing_check(ring, 200)
    report.add("network: geometric mixing (ring, 200)", mix.passed, mix.value, f"at (m, n)={mix.detail}")


def _problem_checks(report, rng, samples):
    for label, prob in (
        ("quadratic", make_estimation_problem(6, 3, seed=1)),
        ("l1", make_l1_problem(6, 3, seed=1)),
    ):
        ratio = subgradient_bound_check(prob, samples=samples, seed=2)
        pts = prob.feasible_set.sample(rng, samples)
        X2 = prob.feasible_set.sample(rng, samples)
        worst_sub = np.inf
        for x, y in zip(pts[:500], X2[:500]):
            xs = np.broadcast_to(x, prob.targets.shape)
            g = prob.local_subgradients(xs)
            slack = prob.local_values(np.broadcast_to(y, prob.targets.shape)) - prob.local_values(xs) - g @ (y - x)
            worst_sub = min(worst_sub, float(slack.min()))
        opt_gap = float((prob.objective_many(pts) - prob.optimal_value).min())
        report.add(f"problems: G bound ({label})", ratio <= 1 + 1e-12, ratio)
        report.add(f"problems: subgradient inequality ({label})", worst_sub >= -1e-9, worst_sub)
        report.add(f"problems: oracle optimality ({label})", opt_gap >= -1e-9, opt_gap)


def _engine_checks(report, mutation, k):
    prob = make_estimation_problem(5, 3, seed=3, feasible_set=Box.uniform(3, -10.0, 10.0))
    net = make_metropolis_sequence(5, seed=3, phases=2, edge_prob=0.3)
    cls = _DropBetaEngine if mutation == "drop-beta-factor" else MirrorDescentEngine
    sched = Schedules(tau=2)
    try:
        eng = cls(prob, euclidean(), net, sched, k=k, seed=3, monitor_perturbation=True, trace=True)
    except ValueError as exc:
        report.add("engine: construction", False, float("nan"), str(exc))
        return
    rec = eng.run(200)
    names = ("containment", "quantization_error", "projection_error", "bregman_error", "xz_gap",
             "descent_slack", "divergence_perturbation")
    summary = rec.violation_summary()
    for name in names:
        hits = summary.get(name, {"count": 0, "first": []})
        first = hits["first"][0] if hits["first"] else None
        report.add(f"engine: {name.replace('_', ' ')}", hits["count"] == 0, hits["count"],
                   f"first={first}" if first else "")
    infeasible = sum(v["count"] for key, v in summary.items() if key.startswith("infeasible"))
    report.add("engine: feasibility", infeasible == 0, infeasible)
    measured, envelope = consensus_profile(rec, sched)
    margin = float(np.min(envelope - measured))
    report.add("engine: consensus envelope", margin >= 0, margin)
    worst, first_bad = replay_audit(eng, rec)
    report.add("engine: replay audit", first_bad is None, worst, f"first step={first_bad}" if first_bad is not None else "")


def validate_suite(mutate=None, trials=1000, seed=0):
    """Run every invariant check; returns a :class:`ValidationReport`."""
    if mutate not in MUTATIONS:
        raise ValueError(f"mutate must be one of {MUTATIONS}")
    rng = np.random.default_rng(seed)
    k = 1 if mutate == "k1" else 5
    report = ValidationReport(mutation=mutate)
    _geometry_checks(report, rng, trials)
    _quantizer_checks(report, rng, k, 100 * trials)
    _network_checks(report)
    _problem_checks(report, rng, 10 * trials)
    _engine_checks(report, mutate, k)
    return report
