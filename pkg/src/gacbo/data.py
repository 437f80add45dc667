"""Interventions, observations and the append-only observation log."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Soft:
    """Set every action variable; the graph itself is left intact."""

    a: tuple[float, ...]

    def serialize(self) -> str:
        return "a=(" + ";".join(f"{x:.6g}" for x in self.a) + ")"


@dataclass(frozen=True)
class Hard:
    """do(V_i = a_i) for i in ``nodes``; an empty node tuple is the observational arm."""

    nodes: tuple[int, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.nodes) != len(self.values):
            raise ValueError("nodes and values must have equal length")
        if list(self.nodes) != sorted(set(self.nodes)):
            raise ValueError("nodes must be strictly ascending")

    def serialize(self) -> str:
        if not self.nodes:
            return "do()"
        return "do(" + ";".join(f"{i}={v:.6g}" for i, v in zip(self.nodes, self.values)) + ")"


Intervention = Union[Soft, Hard]


@dataclass(frozen=True)
class Observation:
    values: np.ndarray
    intervention: Intervention
    round: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"non-finite node values {self.values}")


@dataclass
class ObservationLog:
    """Global data set D_t.

    ``actions`` holds the soft action vector of each round (zero columns in the
    hard setting); ``pinned`` marks which nodes were set by a hard intervention.
    """

    n_nodes: int
    n_actions: int = 0
    values: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    pinned: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.zeros((0, self.n_nodes))
        self.actions = np.zeros((0, self.n_actions))
        self.pinned = np.zeros((0, self.n_nodes), dtype=bool)

    def __len__(self) -> int:
        return self.values.shape[0]

    def append(self, obs: Observation) -> None:
        v = np.asarray(obs.values, dtype=float).reshape(1, self.n_nodes)
        a = np.zeros((1, self.n_actions))
        p = np.zeros((1, self.n_nodes), dtype=bool)
        if isinstance(obs.intervention, Soft):
            a[0] = obs.intervention.a
        else:
            p[0, list(obs.intervention.nodes)] = True
        self.values = np.vstack([self.values, v])
        self.actions = np.vstack([self.actions, a])
        self.pinned = np.vstack([self.pinned, p])

    def component_rows(self, node: int) -> np.ndarray:
        """Rows in which ``node`` was produced by its own mechanism."""
        return np.flatnonzero(~self.pinned[:, node])

    def component_inputs(self, node: int, parents, actions) -> tuple[np.ndarray, np.ndarray]:
        rows = self.component_rows(node)
        x = np.hstack([self.values[np.ix_(rows, list(parents))], self.actions[np.ix_(rows, list(actions))]])
        return x, self.values[rows, node]
