"""Run configuration: a flat INI file with explicit seeds.

Example::

    [run]
    horizon = 5000
    tau = 5
    k = 5
    quantize = true
    seed = 0

    [problem]
    kind = quadratic
    n_agents = 30
    dim = 10
    seed = 0

    [feasible_set]
    kind = box
    lower = -100
    upper = 100

    [geometry]
    kind = euclidean

    [schedules]
    a0 = 1.0
    rho1 = 0.5
    b0 = 1.0
    rho2 = 0.5

    [network]
    kind = metropolis_sequence
    seed = 0
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .engine import MirrorDescentEngine, Schedules
from .geometry import Box, Simplex, euclidean, negative_entropy
from .metrics import condition_check
from .network import make_gossip_cycle, make_metropolis_sequence, make_static, metropolis_weights, ring_edges
from .problems import make_estimation_problem, make_l1_problem

PROBLEM_KINDS = ("quadratic", "l1")
NETWORK_KINDS = ("metropolis_sequence", "gossip_ring", "static_ring")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run."""

    problem: str = "quadratic"
    n_agents: int = 30
    dim: int = 10
    problem_seed: int = 0
    coeff_low: float = 0.5
    coeff_high: float = 1.5
    target_low: float | None = None
    target_high: float | None = None
    set_kind: str = "box"
    lower: float = -100.0
    upper: float = 100.0
    geometry: str = "euclidean"
    entropy_eps: float = 1e-6
    a0: float = 1.0
    rho1: float = 0.5
    b0: float = 1.0
    rho2: float = 0.5
    tau: int = 0
    horizon: int = 5000
    k: int = 5
    quantize: bool = True
    network: str = "metropolis_sequence"
    network_seed: int = 0
    phases: int = 3
    edge_prob: float = 0.15
    seed: int = 0
    output: str = "runs/default"
    name: str = field(default="run", compare=False)

    def __post_init__(self):
        if self.problem not in PROBLEM_KINDS:
            raise ValueError(f"problem must be one of {PROBLEM_KINDS}")
        if self.network not in NETWORK_KINDS:
            raise ValueError(f"network must be one of {NETWORK_KINDS}")
        if self.set_kind not in ("box", "simplex"):
            raise ValueError("feasible_set kind must be box or simplex")
        if self.geometry not in ("euclidean", "negative_entropy"):
            raise ValueError("geometry must be euclidean or negative_entropy")
        if self.geometry == "negative_entropy" and self.set_kind != "simplex":
            raise ValueError("negative entropy geometry needs the simplex feasible set")
        if self.horizon < 1 or self.tau < 0:
            raise ValueError("horizon must be >= 1 and tau >= 0")
        if (self.target_low is None) != (self.target_high is None):
            raise ValueError("target_low and target_high go together")
        report = condition_check(self.schedules.alpha, self.schedules.beta, self.tau)
        if not report.passed:
            raise ValueError(f"schedules fail the convergence conditions: {report.verdicts}")

    # -- derived objects -----------------------------------------------------

    @property
    def schedules(self):
        return Schedules(self.a0, self.rho1, self.b0, self.rho2, self.tau)

    def build_feasible_set(self):
        if self.set_kind == "box":
            return Box.uniform(self.dim, self.lower, self.upper)
        floor = self.entropy_eps / self.dim if self.geometry == "negative_entropy" else 0.0
        return Simplex(self.dim, floor)

    def build_geometry(self):
        if self.geometry == "euclidean":
            return euclidean()
        return negative_entropy(self.dim, self.entropy_eps)

    def build_problem(self):
        X = self.build_feasible_set()
        tb = None if self.target_low is None else (self.target_low, self.target_high)
        if self.problem == "quadratic":
            return make_estimation_problem(
                self.n_agents, self.dim, (self.coeff_low, self.coeff_high), tb, self.problem_seed, X
            )
        return make_l1_problem(self.n_agents, self.dim, self.problem_seed, X, tb)

    def build_network(self):
        if self.network == "metropolis_sequence":
            return make_metropolis_sequence(self.n_agents, self.network_seed, self.phases, self.edge_prob)
        if self.network == "gossip_ring":
            return make_gossip_cycle(self.n_agents, ring_edges(self.n_agents))
        return make_static(metropolis_weights(self.n_agents, ring_edges(self.n_agents)))

    def build_engine(self, **kwargs):
        problem = self.build_problem()
        return MirrorDescentEngine(
            problem, self.build_geometry(), self.build_network(), self.schedules,
            k=self.k, quantize=self.quantize, seed=self.seed, **kwargs,
        )

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    # -- INI round trip -----------------------------------------------------

    def to_ini(self):
        cp = configparser.ConfigParser()
        for section, keys in _LAYOUT.items():
            cp[section] = {}
            for key, attr in keys.items():
                value = getattr(self, attr)
                if value is not None:
                    cp[section][key] = str(value).lower() if isinstance(value, bool) else str(value)
        return cp

    def save(self, path):
        with open(path, "w") as fh:
            self.to_ini().write(fh)


# section -> {ini key: field name}
_LAYOUT = {
    "run": {"name": "name", "horizon": "horizon", "tau": "tau", "k": "k", "quantize": "quantize",
            "seed": "seed", "output": "output"},
    "problem": {"kind": "problem", "n_agents": "n_agents", "dim": "dim", "seed": "problem_seed",
                "coeff_low": "coeff_low", "coeff_high": "coeff_high",
                "target_low": "target_low", "target_high": "target_high"},
    "feasible_set": {"kind": "set_kind", "lower": "lower", "upper": "upper"},
    "geometry": {"kind": "geometry", "eps": "entropy_eps"},
    "schedules": {"a0": "a0", "rho1": "rho1", "b0": "b0", "rho2": "rho2"},
    "network": {"kind": "network", "seed": "network_seed", "phases": "phases", "edge_prob": "edge_prob"},
}
_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(attr, raw):
    default = _FIELDS[attr].default
    if attr in ("target_low", "target_high"):
        return float(raw)
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ValueError(f"{attr}: not a boolean: {raw!r}")
        return low in ("true", "yes", "1", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def config_from_parser(cp, name=None):
    values = {}
    for section in cp.sections():
        if section not in _LAYOUT:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in cp[section].items():
            if key not in _LAYOUT[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            attr = _LAYOUT[section][key]
            values[attr] = _coerce(attr, raw)
    if name is not None and "name" not in values:
        values["name"] = name
    return RunConfig(**values)


def load_config(path):
    """Parse an INI run configuration; missing keys take the defaults."""
    cp = configparser.ConfigParser()
    path = Path(path)
    if not cp.read(path):
        raise FileNotFoundError(path)
    return config_from_parser(cp, name=path.stem)


def parse_override(attr, raw):
    """Convert a string override (sweep grid value) for field ``attr``."""
    if attr not in _FIELDS:
        raise ValueError(f"unknown config field {attr!r}")
    return _coerce(attr, raw)
