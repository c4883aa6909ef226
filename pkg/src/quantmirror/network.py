"""Time-varying communication schedules with doubly stochastic weights.

A schedule is periodic: ``P(t) = matrices[t % period]``.  Every generator
certifies its own connectivity window ``B`` and records the smallest
positive weight it actually produced as ``theta``; the geometric mixing
constants are derived from those certified values.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

STOCHASTIC_TOL = 1e-12


class CheckResult(NamedTuple):
    passed: bool
    value: float
    detail: object = None


@dataclass(frozen=True)
class MixingConstants:
    omega: float
    gamma: float

    @classmethod
    def from_schedule(cls, n_agents, theta, b_window):
        base = 1.0 - theta / (4.0 * n_agents**2)
        return cls(omega=base**-2, gamma=base ** (1.0 / b_window))

    def bound(self, gap):
        return self.omega * self.gamma**gap


@dataclass(frozen=True)
class GraphSchedule:
    """Periodic sequence of doubly stochastic weight matrices."""

    n_agents: int
    matrices: tuple
    b_window: int
    theta: float
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def period(self):
        return len(self.matrices)

    def matrix(self, t):
        return self.matrices[t % self.period]

    def __call__(self, t):
        return self.matrix(t)

    @property
    def mixing(self):
        return MixingConstants.from_schedule(self.n_agents, self.theta, self.b_window)

    def message_count(self, t):
        """Number of directed transmissions in round ``t`` (off-diagonal support)."""
        P = self.matrix(t)
        return int(np.count_nonzero(P) - np.count_nonzero(np.diag(P)))

    def to_dict(self):
        out = {
            "n_agents": self.n_agents,
            "b_window": self.b_window,
            "theta": self.theta,
            "kind": self.kind,
            "params": self.params,
        }
        if self.kind == "static":
            out["matrices"] = [m.tolist() for m in self.matrices]
        return out


def _min_positive(matrices):
    return float(min(m[m > 0].min() for m in matrices))


def _finalize(n_agents, matrices, b_window, kind, params, theta=None):
    matrices = tuple(np.asarray(m, dtype=np.float64) for m in matrices)
    for m in matrices:
        m.setflags(write=False)
    realized = _min_positive(matrices)
    if theta is not None and realized < theta:
        raise ValueError(f"realized minimum weight {realized:g} is below requested theta {theta:g}")
    return GraphSchedule(n_agents, matrices, b_window, realized, kind, params)


def _undirected_connected(n_agents, edges):
    adj = [[] for _ in range(n_agents)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    return len(_reach(adj, 0)) == n_agents


def _reach(adj, start):
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def _check_edges(n_agents, edges):
    edges = [(int(i), int(j)) for i, j in edges]
    for i, j in edges:
        if not (0 <= i < n_agents and 0 <= j < n_agents) or i == j:
            raise ValueError(f"invalid edge {(i, j)} for {n_agents} agents")
    return edges


def make_gossip_cycle(n_agents, base_edges, theta=None):
    """Pairwise-averaging gossip cycling through ``base_edges`` (0-based).

    Round ``t`` averages the endpoints of edge ``t % len(base_edges)``:
    ``P = I - 0.5 (e_i - e_j)(e_i - e_j)^T``.  The union over any
    ``len(base_edges)`` consecutive rounds is the base graph, so that length
    is the certified connectivity window.
    """
    edges = _check_edges(n_agents, base_edges)
    if theta is not None and theta > 0.5:
        raise ValueError("gossip weights are 1/2, so theta must be <= 1/2")
    if n_agents == 1:
        return _finalize(1, [np.eye(1)], 1, "gossip_cycle", {"edges": []}, theta)
    if not edges or not _undirected_connected(n_agents, edges):
        raise ValueError("base graph must be connected")
    mats = []
    for i, j in edges:
        P = np.eye(n_agents)
        P[i, i] = P[j, j] = P[i, j] = P[j, i] = 0.5
        mats.append(P)
    return _finalize(n_agents, mats, len(edges), "gossip_cycle", {"edges": [list(e) for e in edges]}, theta)


def ring_edges(n_agents):
    if n_agents < 2:
        return []
    if n_agents == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n_agents) for i in range(n_agents)]


def metropolis_weights(n_agents, edges):
    """Symmetric doubly stochastic Metropolis-Hastings weights for an undirected graph."""
    deg = np.zeros(n_agents, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    W = np.zeros((n_agents, n_agents))
    for i, j in edges:
        W[i, j] = W[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    W[np.diag_indices(n_agents)] = 1.0 - W.sum(axis=1)
    return W


def make_metropolis_sequence(n_agents, seed, phases=3, edge_prob=0.15, theta=None):
    """Random connected graph whose edges are split across ``phases`` rounds.

    A ring plus independent chords (probability ``edge_prob``) forms the base
    graph; its edges are shuffled and dealt round-robin to ``phases``
    subgraphs, each weighted with Metropolis weights.  Any window of
    ``phases`` consecutive rounds covers the base graph.
    """
    if n_agents == 1:
        return _finalize(1, [np.eye(1)], 1, "metropolis_sequence", {"seed": seed}, theta)
    rng = np.random.default_rng(seed)
    edges = set(tuple(sorted(e)) for e in ring_edges(n_agents))
    for i in range(n_agents):
        for j in range(i + 1, n_agents):
            if rng.random() < edge_prob:
                edges.add((i, j))
    edges = sorted(edges)
    order = rng.permutation(len(edges))
    groups = [[] for _ in range(phases)]
    for rank, e in enumerate(order):
        groups[rank % phases].append(edges[e])
    mats = [metropolis_weights(n_agents, g) for g in groups]
    params = {"seed": int(seed), "phases": int(phases), "edge_prob": float(edge_prob)}
    return _finalize(n_agents, mats, phases, "metropolis_sequence", params, theta)


def make_static(matrix, theta=None):
    """Constant schedule ``P(t) = matrix``; must be doubly stochastic and strongly connected."""
    P = np.asarray(matrix, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("weight matrix must be square")
    ok = check_doubly_stochastic(P)
    if not ok.passed:
        raise ValueError(f"matrix is not doubly stochastic (deviation {ok.value:g})")
    if not _strongly_connected(P > 0):
        raise ValueError("static graph must be strongly connected")
    return _finalize(P.shape[0], [P], 1, "static", {}, theta)


def schedule_from_dict(data):
    kind = data["kind"]
    params = data.get("params", {})
    n = int(data["n_agents"])
    if kind == "gossip_cycle":
        sched = make_gossip_cycle(n, params["edges"])
    elif kind == "metropolis_sequence":
        sched = make_metropolis_sequence(n, params["seed"], params.get("phases", 3), params.get("edge_prob", 0.15))
    elif kind == "static":
        sched = make_static(data["matrices"][0])
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    if "b_window" in data and int(data["b_window"]) != sched.b_window:
        raise ValueError("recorded B does not match the regenerated schedule")
    if "theta" in data and abs(float(data["theta"]) - sched.theta) > 1e-12:
        raise ValueError("recorded theta does not match the regenerated schedule")
    return sched


def save_schedule(schedule, path):
    Path(path).write_text(json.dumps(schedule.to_dict(), indent=2, sort_keys=True) + "\n")


def load_schedule(path):
    return schedule_from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# Checks
# --------------------------------------------------------------------------


def check_doubly_stochastic(P, tol=STOCHASTIC_TOL):
    """Pass iff entries are nonnegative and all row/column sums are 1 within ``tol``."""
    P = np.asarray(P, dtype=np.float64)
    dev = max(np.abs(P.sum(axis=0) - 1).max(), np.abs(P.sum(axis=1) - 1).max())
    return CheckResult(bool(dev <= tol and np.all(P >= 0)), float(dev))


def check_weight_floor(P, theta):
    """Every positive entry and every diagonal entry is at least ``theta``."""
    P = np.asarray(P)
    positive = P[P > 0]
    worst = float(min(positive.min(), np.diag(P).min()))
    return CheckResult(worst >= theta, worst)


def _strongly_connected(adj_matrix):
    n = adj_matrix.shape[0]
    fwd = [list(np.flatnonzero(adj_matrix[i])) for i in range(n)]
    rev = [list(np.flatnonzero(adj_matrix[:, i])) for i in range(n)]
    return len(_reach(fwd, 0)) == n and len(_reach(rev, 0)) == n


def check_b_connectivity(schedule, horizon):
    """Strong connectivity of the union graph over each window ``(cB, (c+1)B]``.

    Returns the index of the first failing window in ``detail`` (None when
    every window inside ``horizon`` passes).
    """
    B = schedule.b_window
    if horizon < B:
        raise ValueError("horizon must be at least B")
    n = schedule.n_agents
    for c in range(horizon // B):
        union = np.zeros((n, n), dtype=bool)
        for t in range(c * B + 1, (c + 1) * B + 1):
            union |= schedule.matrix(t) > 0
        if not _strongly_connected(union):
            return CheckResult(False, float(c), c)
    return CheckResult(True, float(horizon // B), None)


def transition_product(schedule, m, n):
    """``P(m, n) = P(m) P(m-1) ... P(n)``, with ``P(n-1, n) = I``."""
    if n < 0:
        raise ValueError("transition product needs n >= 0")
    if m < n - 1:
        raise ValueError("transition product needs m >= n - 1")
    M = np.eye(schedule.n_agents)
    for s in range(n, m + 1):
        M = schedule.matrix(s) @ M
    return M


def mixing_check(schedule, horizon):
    """Worst ``|[P(m,n)]_ij - 1/N| / (omega gamma^(m-n))`` over ``1 <= n <= m <= horizon``.

    ``detail`` holds the ``(m, n)`` pair attaining the worst ratio.
    """
    N = schedule.n_agents
    mix = schedule.mixing
    worst, where = 0.0, None
    for n in range(1, horizon + 1):
        M = np.eye(N)
        for m in range(n, horizon + 1):
            M = schedule.matrix(m) @ M
            ratio = np.abs(M - 1.0 / N).max() / mix.bound(m - n)
            if ratio > worst:
                worst, where = float(ratio), (m, n)
    return CheckResult(worst <= 1 + 1e-9, worst, where)


def check_assumptions(schedule, horizon=None):
    """Doubly stochastic, weight floor and B-connectivity checks in one report."""
    horizon = horizon or 4 * max(schedule.b_window, schedule.period)
    ds = [check_doubly_stochastic(P) for P in schedule.matrices]
    floors = [check_weight_floor(P, schedule.theta) for P in schedule.matrices]
    return {
        "doubly_stochastic": CheckResult(all(r.passed for r in ds), max(r.value for r in ds)),
        "weight_floor": CheckResult(all(r.passed for r in floors), min(r.value for r in floors)),
        "b_connectivity": check_b_connectivity(schedule, horizon),
    }
