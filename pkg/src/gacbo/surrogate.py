"""Optimistic rollouts of a graph's GP network.

Each node's hallucinated value is ``mu + beta * sigma * eta`` evaluated at
its hallucinated parents, walking the graph in topological order.  ``eta``
holds one number in [-1, 1] per node (entries for nodes outside the rollout
are ignored).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dag_space import ComponentCache, Dag, topological_order
from .kernel_gp import GpPosterior


@dataclass(frozen=True)
class SurrogateModel:
    g: Dag
    gps: Mapping[int, GpPosterior]
    beta: float

    def __post_init__(self):
        for i in self.g.ancestral().nodes:
            gp = self.gps.get(i)
            if gp is None:
                raise ValueError(f"no GP for node {i}")
            expected = len(self.g.parents[i]) + len(self.g.actions[i])
            if gp.kernel.dim != expected:
                raise ValueError(f"GP for node {i} has input dimension {gp.kernel.dim}, expected {expected}")

    @classmethod
    def from_cache(cls, g: Dag, cache: ComponentCache, beta: float) -> "SurrogateModel":
        anc = g.ancestral()
        return cls(g, {i: cache.gp(c) for i, c in ((c[0], c) for c in anc.components())}, beta)


def _check_eta(eta: np.ndarray) -> None:
    if np.any(np.abs(eta) > 1.0 + 1e-12):
        raise ValueError("eta entries must lie in [-1, 1]")


def _propagate(model: SurrogateModel, g: Dag, actions: np.ndarray, eta: np.ndarray,
               pinned: Mapping[int, np.ndarray]) -> np.ndarray:
    n = actions.shape[0]
    values = np.zeros((n, g.m + 1))
    for i in topological_order(g):
        if i in pinned:
            values[:, i] = pinned[i]
            continue
        x = np.hstack([values[:, list(g.parents[i])], actions[:, list(g.actions[i])]])
        mu, var = model.gps[i].predict(x)
        values[:, i] = mu + model.beta * np.sqrt(var) * eta[:, i]
    return values[:, g.target]


def rollout_soft_batch(model: SurrogateModel, actions: np.ndarray, eta: np.ndarray) -> np.ndarray:
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    _check_eta(eta)
    return _propagate(model, model.g.ancestral(), actions, eta, {})


def rollout_soft(model: SurrogateModel, a: Sequence[float], eta: Sequence[float]) -> float:
    return float(rollout_soft_batch(model, np.asarray(a, float)[None, :], np.asarray(eta, float)[None, :])[0])


def rollout_hard_batch(model: SurrogateModel, nodes: Sequence[int], values: np.ndarray,
                       eta: np.ndarray) -> np.ndarray:
    """Rollout under do(nodes = values); ``values`` has one column per pinned node."""
    nodes = tuple(nodes)
    if model.g.target in nodes:
        raise ValueError("the target node cannot be intervened on")
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    _check_eta(eta)
    n = eta.shape[0]
    values = np.asarray(values, dtype=float).reshape(n, len(nodes))
    mutated = model.g.mutate(nodes).ancestral()
    pinned = {i: values[:, k] for k, i in enumerate(nodes) if i in mutated.nodes}
    return _propagate(model, mutated, np.zeros((n, 0)), eta, pinned)


def rollout_hard(model: SurrogateModel, nodes: Sequence[int], a_nodes: Sequence[float],
                 eta: Sequence[float]) -> float:
    eta = np.asarray(eta, float)[None, :]
    return float(rollout_hard_batch(model, nodes, np.asarray(a_nodes, float)[None, :], eta)[0])
