"""Distributed mirror descent with delayed subgradients and adaptive quantization."""

from .estimator import DistributedMirrorDescent
from .engine import MirrorDescentEngine, RunRecord, Schedules, consensus_profile, descent_inequality_slack
from .geometry import Box, BregmanGeometry, Simplex, euclidean, negative_entropy
from .network import GraphSchedule, make_gossip_cycle, make_metropolis_sequence, make_static
from .problems import DistributedProblem, make_estimation_problem, make_l1_problem
from .quantizer import QuantizerSpec, decode, encode, quantize

__all__ = [
    "Box", "BregmanGeometry", "DistributedMirrorDescent", "DistributedProblem", "GraphSchedule", "MirrorDescentEngine",
    "QuantizerSpec", "RunRecord", "Schedules", "Simplex", "consensus_profile", "decode",
    "descent_inequality_slack", "encode", "euclidean", "make_estimation_problem", "make_gossip_cycle",
    "make_l1_problem", "make_metropolis_sequence", "make_static", "negative_entropy", "quantize",
]
