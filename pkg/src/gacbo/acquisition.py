"""Optimistic action selection over plausible graphs.

For each plausible graph the joint maximum over actions and per-node eta is
found with a derivative-free search: uniform random restarts followed by
coordinate-wise pattern moves with step halving.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dag_space import Dag, mis
from .data import Hard, Intervention, Soft
from .discovery import PlausibleSet
from .surrogate import SurrogateModel, rollout_hard, rollout_hard_batch, rollout_soft, rollout_soft_batch


@dataclass(frozen=True)
class SearchBudget:
    restarts: int = 256
    local_steps: int = 50
    seed: int = 0
    refine: int = 4
    max_graphs: int = 16
    min_step: float = 1e-4
    init_step: float = 0.25

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class Proposal:
    graph_id: int
    intervention: Intervention
    eta: tuple[float, ...]
    value: float
    graph: Dag | None = None


def maximize_box(f: Callable[[np.ndarray], np.ndarray], lower: np.ndarray, upper: np.ndarray,
                 ternary: np.ndarray, rng: np.random.Generator, budget: SearchBudget) -> tuple[np.ndarray, float]:
    """Maximize a batched function over a box.

    ``ternary`` marks coordinates initialised from {lower, midpoint, upper}
    instead of uniformly (the eta coordinates).  Ties go to the
    lexicographically smallest point.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    width = upper - lower
    x0 = lower + rng.random((budget.restarts, d)) * width
    if ternary.any():
        picks = rng.integers(0, 3, size=(budget.restarts, int(ternary.sum())))
        x0[:, ternary] = (lower[ternary] + 0.5 * picks * width[ternary])
    vals = f(x0)
    if d == 0:
        return np.zeros(0), float(vals[0])

    def best_of(x, v):
        order = np.lexsort(tuple(x[:, k] for k in reversed(range(d))) + (-v,))
        return order

    order = best_of(x0, vals)
    k = min(budget.refine, budget.restarts)
    x = x0[order[:k]].copy()
    v = vals[order[:k]].copy()
    step = np.tile(budget.init_step * width, (k, 1))
    stop = budget.min_step * np.maximum(width, 1e-300)
    for _ in range(budget.local_steps):
        live = step > stop
        if not live.any():
            break
        trials = np.repeat(x[:, None, None, :], 2, axis=1).repeat(d, axis=2)  # (k, 2, d, d)
        eye = np.eye(d)
        trials[:, 0] += step[:, None, :] * eye[None]
        trials[:, 1] -= step[:, None, :] * eye[None]
        trials = np.clip(trials, lower, upper)
        tv = f(trials.reshape(-1, d)).reshape(k, 2, d)
        tv = np.where(live[:, None, :], tv, -np.inf)
        best_dir = tv.max(axis=1)  # (k, d)
        # halve steps of coordinates that did not improve
        step = np.where(best_dir > v[:, None], step, step * 0.5)
        for r in range(k):
            j = int(np.argmax(best_dir[r]))
            if best_dir[r, j] > v[r]:
                s = int(np.argmax(tv[r, :, j]))
                x[r] = trials[r, s, j]
                v[r] = best_dir[r, j]
    allx = np.vstack([x0, x])
    allv = np.concatenate([vals, v])
    top = best_of(allx, allv)[0]
    return allx[top], float(allv[top])


def candidate_groups(plausible: PlausibleSet, cap: int) -> list[tuple[int, float, Dag]]:
    """Plausible graphs merged by ancestral subgraph, heaviest first, at most ``cap`` of them."""
    merged: dict[Dag, list] = {}
    for g, gid, w in zip(plausible.graphs, plausible.ids, plausible.weights):
        key = g.ancestral()
        if key in merged:
            merged[key][0] = min(merged[key][0], gid)
            merged[key][1] += float(w)
        else:
            merged[key] = [gid, float(w)]
    items = [(gid, w, key) for key, (gid, w) in merged.items()]
    items.sort(key=lambda t: (-t[1], t[0]))
    return items[:cap]


def _round_rng(budget: SearchBudget, *stream: int) -> np.random.Generator:
    return np.random.default_rng([budget.seed, *stream])


def _pick(best: Proposal | None, cand: Proposal, rank) -> Proposal:
    if best is None or rank(cand) < rank(best):
        return cand
    return best


def select_action_soft(plausible: PlausibleSet, models: Mapping[Dag, SurrogateModel], budget: SearchBudget,
                       action_box: Sequence[tuple[float, float]]) -> Proposal:
    """Argmax over plausible graphs of the optimistic rollout value.

    ``models`` maps each ancestral subgraph to its surrogate.
    """
    box = np.asarray(action_box, dtype=float).reshape(-1, 2)
    n_act = box.shape[0]
    rank = lambda p: (-p.value, p.graph_id, p.intervention.a)  # noqa: E731
    best = None
    for gid, _, anc in candidate_groups(plausible, budget.max_graphs):
        model = models[anc]
        nodes = sorted(anc.nodes)
        n_eta = len(nodes)
        lower = np.concatenate([box[:, 0], -np.ones(n_eta)])
        upper = np.concatenate([box[:, 1], np.ones(n_eta)])
        ternary = np.r_[np.zeros(n_act, bool), np.ones(n_eta, bool)]

        def f(z, model=model, nodes=nodes):
            eta = np.zeros((z.shape[0], anc.m + 1))
            eta[:, nodes] = z[:, n_act:]
            return rollout_soft_batch(model, z[:, :n_act], eta)

        z, val = maximize_box(f, lower, upper, ternary, _round_rng(budget, gid), budget)
        eta = np.zeros(anc.m + 1)
        eta[nodes] = z[n_act:]
        a = tuple(float(x) for x in z[:n_act])
        check = rollout_soft(model, a, eta)
        if not np.isclose(check, val, rtol=1e-9, atol=1e-9):
            raise RuntimeError(f"proposal value {val} does not match its rollout {check}")
        best = _pick(best, Proposal(gid, Soft(a), tuple(eta), val, anc), rank)
    return best


def select_action_hard(plausible: PlausibleSet, models: Mapping[Dag, SurrogateModel], budget: SearchBudget,
                       node_box: Mapping[int, tuple[float, float]],
                       family: Sequence[Sequence[int]] | None = None) -> Proposal:
    """Argmax over plausible graphs and their minimal intervention sets.

    Only sets that are also in ``family`` (when given) compete; the empty set
    is the observational arm.
    """
    allowed = None if family is None else {tuple(sorted(s)) for s in family}
    intervenable = sorted(node_box)
    rank = lambda p: (-p.value, p.graph_id, len(p.intervention.nodes), p.intervention.nodes,  # noqa: E731
                      p.intervention.values)
    best = None
    for gid, _, anc in candidate_groups(plausible, budget.max_graphs):
        model = models[anc]
        for s_idx, s in enumerate(mis(anc, intervenable)):
            if allowed is not None and s not in allowed:
                continue
            mutated = anc.mutate(s).ancestral()
            free = [i for i in sorted(mutated.nodes) if i not in s]
            k = len(s)
            lower = np.concatenate([[node_box[i][0] for i in s], -np.ones(len(free))])
            upper = np.concatenate([[node_box[i][1] for i in s], np.ones(len(free))])
            ternary = np.r_[np.zeros(k, bool), np.ones(len(free), bool)]

            def f(z, model=model, s=s, free=free, k=k):
                eta = np.zeros((z.shape[0], anc.m + 1))
                eta[:, free] = z[:, k:]
                return rollout_hard_batch(model, s, z[:, :k], eta)

            z, val = maximize_box(f, lower, upper, ternary, _round_rng(budget, gid, s_idx), budget)
            eta = np.zeros(anc.m + 1)
            eta[free] = z[k:]
            vals = tuple(float(x) for x in z[:k])
            check = rollout_hard(model, s, vals, eta)
            if not np.isclose(check, val, rtol=1e-9, atol=1e-9):
                raise RuntimeError(f"proposal value {val} does not match its rollout {check}")
            best = _pick(best, Proposal(gid, Hard(tuple(s), vals), tuple(eta), val, anc), rank)
    return best
