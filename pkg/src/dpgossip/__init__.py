"""Differentially private distributed online learning with sparse (L1) regularization.

Nodes on a fixed communication graph run online mirror descent on the hinge
loss, soft-threshold their dual parameters into sparse models and gossip
Laplace-perturbed copies of those parameters to their neighbors.
"""
from .config import ConfigError, ExperimentConfig
from .data import LabeledExample, SyntheticModel, generate_stream, normalize, parse_libsvm
from .evaluation import BoundInputs, compute_regret, offline_comparator, theoretical_bound
from .learning import Schedule, auto_schedule, soft_threshold
from .privacy import PrivacyLedger, PrivacyParams, empirical_dp_check, sensitivity
from .simulator import run_experiment, simulate
from .topology import Graph, MixingMatrix, build_graph, metropolis_weights, validate_mixing_matrix

__version__ = "0.1.0"
