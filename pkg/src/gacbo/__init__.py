"""Causal Bayesian optimisation when the causal graph is unknown.

Graph hypotheses are scored with Gaussian-process marginal likelihoods,
pruned with mixture confidence bands, and actions are chosen by optimistic
rollouts over the surviving graphs.
"""

from .acquisition import Proposal, SearchBudget, maximize_box, select_action_hard, select_action_soft
from .dag_space import (
    ComponentCache,
    CycleError,
    Dag,
    GraphPosterior,
    HypothesisSpaceTooLarge,
    enumerate_dags,
    graph_log_likelihood,
    graph_posterior,
    mis,
    topological_order,
)
from .data import Hard, Observation, ObservationLog, Soft
from .discovery import (
    ComponentScoreTable,
    PlausibleSet,
    find_subgraph,
    mixture_moments,
    sample_graphs,
    update_plausible,
)
from .envs import REGISTRY, make_env
from .harness import RunConfig, RoundRecord, compute_metrics, run_experiment
from .kernel_gp import (
    ComponentData,
    GpPosterior,
    HyperPrior,
    Kernel,
    component_score,
    kernel_eval,
    log_marginal_likelihood,
    posterior_at,
)
from .surrogate import SurrogateModel, rollout_hard, rollout_soft

__version__ = "0.1.0"

__all__ = [
    "component_score",
    "ComponentCache",
    "ComponentData",
    "ComponentScoreTable",
    "compute_metrics",
    "CycleError",
    "Dag",
    "enumerate_dags",
    "find_subgraph",
    "GpPosterior",
    "graph_log_likelihood",
    "graph_posterior",
    "GraphPosterior",
    "Hard",
    "HyperPrior",
    "HypothesisSpaceTooLarge",
    "Kernel",
    "kernel_eval",
    "log_marginal_likelihood",
    "make_env",
    "maximize_box",
    "mis",
    "mixture_moments",
    "Observation",
    "ObservationLog",
    "PlausibleSet",
    "posterior_at",
    "Proposal",
    "REGISTRY",
    "rollout_hard",
    "rollout_soft",
    "RoundRecord",
    "run_experiment",
    "RunConfig",
    "sample_graphs",
    "SearchBudget",
    "select_action_hard",
    "select_action_soft",
    "Soft",
    "SurrogateModel",
    "topological_order",
    "update_plausible",
]
