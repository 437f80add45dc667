"""Causal subgraph sampling and maintenance of the plausible graph set."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dag_space import Component, ComponentCache, Dag, GraphPosterior, graph_posterior, normalize_log_weights

log = logging.getLogger(__name__)


def component_space(
    m: int,
    n_actions: int = 0,
    action_targets: Sequence[Sequence[int]] | None = None,
    forbidden_edges: Iterable[tuple[int, int]] = (),
    max_parents: int | None = None,
    max_actions: int | None = None,
) -> dict[int, list[tuple[tuple[int, ...], tuple[int, ...]]]]:
    """Admissible (parents, actions) pairs per node; the target is never a parent."""
    forbidden = set(forbidden_edges)
    space = {}
    for i in range(m + 1):
        pool = [j for j in range(m) if j != i and (j, i) not in forbidden]
        acts = [a for a in range(n_actions) if action_targets is None or i in action_targets[a]]
        parent_sets = [s for r in range(len(pool) + 1) for s in itertools.combinations(pool, r)]
        action_sets = [s for r in range(len(acts) + 1) for s in itertools.combinations(acts, r)]
        if max_parents is not None:
            parent_sets = [s for s in parent_sets if len(s) <= max_parents]
        if max_actions is not None:
            action_sets = [s for s in action_sets if len(s) <= max_actions]
        space[i] = [(p, a) for p in parent_sets for a in action_sets]
    return space


@dataclass(frozen=True)
class ComponentScoreTable:
    """Log scores for every admissible component of every node."""

    entries: dict[int, tuple[tuple[tuple[int, ...], tuple[int, ...], float], ...]]

    def __post_init__(self):
        for node, rows in self.entries.items():
            keys = [(p, a) for p, a, _ in rows]
            if len(set(keys)) != len(keys):
                raise ValueError(f"duplicate component for node {node}")
            if not all(np.isfinite(s) for _, _, s in rows):
                raise ValueError(f"non-finite score for node {node}")

    @property
    def n_nodes(self) -> int:
        return max(self.entries) + 1

    @classmethod
    def from_cache(cls, cache: ComponentCache, space) -> "ComponentScoreTable":
        return cls({i: tuple((p, a, cache.score((i, p, a))) for p, a in comps) for i, comps in space.items()})

    @classmethod
    def uniform(cls, space) -> "ComponentScoreTable":
        return cls({i: tuple((p, a, 0.0) for p, a in comps) for i, comps in space.items()})


def _draw_component(rows, banned: frozenset[int], rng: np.random.Generator):
    allowed = [(p, a, s) for p, a, s in rows if not banned.intersection(p)]
    if not allowed:
        return (), ()
    logs = np.array([s for _, _, s in allowed])
    probs = np.exp(logs - logs.max())
    probs /= probs.sum()
    k = int(rng.choice(len(allowed), p=probs))
    return allowed[k][0], allowed[k][1]


def _grow(table: ComponentScoreTable, start: int, descendants: frozenset[int],
          parents: dict, actions: dict, rng: np.random.Generator) -> None:
    # depth-first: every node on the current path is a descendant of the node being visited
    if start in parents:
        return
    p, a = _draw_component(table.entries[start], descendants, rng)
    parents[start] = p
    actions[start] = a
    for j in rng.permutation(np.array(p, dtype=int)) if p else ():
        _grow(table, int(j), descendants | {start}, parents, actions, rng)


def find_subgraph(scores: ComponentScoreTable, rng: np.random.Generator, target: int | None = None) -> Dag:
    """Sample the target's ancestral subgraph by recursive parent selection."""
    n = scores.n_nodes
    target = n - 1 if target is None else target
    if target not in scores.entries:
        raise ValueError("score table does not cover the target node")
    parents: dict[int, tuple] = {}
    actions: dict[int, tuple] = {}
    _grow(scores, target, frozenset(), parents, actions, rng)
    return Dag(
        tuple(parents.get(i, ()) for i in range(n)),
        tuple(actions.get(i, ()) for i in range(n)),
        frozenset(parents),
    )


def complete_graph(sub: Dag, scores: ComponentScoreTable, rng: np.random.Generator) -> Dag:
    """Extend an ancestral subgraph to every node by continuing the recursion from unvisited nodes."""
    parents = {i: sub.parents[i] for i in sub.nodes}
    actions = {i: sub.actions[i] for i in sub.nodes}
    rest = [i for i in range(sub.m + 1) if i not in sub.nodes]
    for i in rng.permutation(np.array(rest, dtype=int)) if rest else ():
        _grow(scores, int(i), frozenset(), parents, actions, rng)
    n = sub.m + 1
    return Dag(tuple(parents[i] for i in range(n)), tuple(actions[i] for i in range(n)))


def sample_graphs(n: int, scores: ComponentScoreTable, rng: np.random.Generator,
                  complete: bool = False) -> list[tuple[Dag, int]]:
    """``n`` independent draws, deduplicated with multiplicities in first-seen order.

    Draw ``k`` uses its own stream seeded from ``(base, k)`` so draws are
    independent of evaluation order.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    base = int(rng.integers(2**63))
    counts: dict[Dag, int] = {}
    for k in range(n):
        stream = np.random.default_rng([base, k])
        g = find_subgraph(scores, stream)
        if complete:
            g = complete_graph(g, scores, stream)
        counts[g] = counts.get(g, 0) + 1
    return list(counts.items())


# ---------------------------------------------------------------------------
# mixture moments and plausible set
# ---------------------------------------------------------------------------


def _moments(mu: np.ndarray, var: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=float)[:, None] if np.ndim(mu) == 2 else np.asarray(w, dtype=float)
    e = (w * mu).sum(axis=0)
    v = (w * (mu - e) ** 2).sum(axis=0) + (w * var).sum(axis=0)
    return e, np.maximum(v, 0.0)


def mixture_moments(node: int, z, a, posterior: GraphPosterior, cache: ComponentCache) -> tuple[float, float]:
    """Law of total expectation/variance for ``node`` at a full input.

    ``z`` holds a value for every node and ``a`` every action; each graph
    reads only its own parent and action coordinates.
    """
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float) if a is not None else np.zeros(0)
    mus, vars_ = [], []
    for g in posterior.graphs:
        comp = (node, g.parents[node], g.actions[node])
        x = np.concatenate([z[list(comp[1])], a[list(comp[2])]])[None, :]
        m, v = cache.gp(comp).predict(x)
        mus.append(m[0])
        vars_.append(v[0])
    e, v = _moments(np.array(mus), np.array(vars_), posterior.weights)
    return float(e), float(v)


@dataclass(frozen=True)
class PlausibleSet:
    graphs: tuple[Dag, ...]
    ids: tuple[int, ...]
    weights: np.ndarray
    beta: float
    generation: int = 0
    eliminated: frozenset = field(default_factory=frozenset)
    next_id: int = 0

    def __post_init__(self):
        if not self.graphs:
            raise ValueError("plausible set is empty")
        if len(self.ids) != len(self.graphs) or len(self.weights) != len(self.graphs):
            raise ValueError("graphs, ids and weights must align")

    def __len__(self) -> int:
        return len(self.graphs)

    def weight_of(self, g: Dag) -> float:
        return float(sum(w for h, w in zip(self.graphs, self.weights) if h == g))

    @classmethod
    def initial(cls, graphs: Sequence[Dag], beta: float, ids: Sequence[int] | None = None) -> "PlausibleSet":
        graphs = tuple(graphs)
        ids = tuple(range(len(graphs))) if ids is None else tuple(ids)
        w = np.full(len(graphs), 1.0 / len(graphs))
        return cls(graphs, ids, w, beta, 0, frozenset(), max(ids) + 1)


@dataclass(frozen=True)
class DiscoveryConfig:
    beta: float
    n_samples: int = 20
    sampling: bool = False
    eps_weight: float = 1e-8


def band_check(graphs: Sequence[Dag], weights: np.ndarray, active: np.ndarray, cache: ComponentCache,
               beta: float) -> np.ndarray:
    """True for graphs that have, at every node, a function inside ``E +- beta * sqrt(V)`` at all logged inputs.

    Two candidate functions are tried per component: one from its own band
    ``mu +- beta * sigma``, and its GP smoothing of the mixture mean ``E``
    (what the component's inputs can express of the consensus).
    """
    ok = np.ones(len(graphs), dtype=bool)
    if not np.isfinite(beta):
        return ok
    w = np.where(active, weights, 0.0)
    w = w / w.sum()
    n_nodes = len(graphs[0].parents)
    for i in range(n_nodes):
        comps: dict[Component, int] = {}
        members = []
        for g in graphs:
            if i in g.nodes:
                members.append(comps.setdefault((i, g.parents[i], g.actions[i]), len(comps)))
            else:
                members.append(-1)
        gps = [cache.gp(c) for c in comps]
        if not gps or len(gps[0].data) == 0:
            continue
        fitted = [gp.predict(gp.data.inputs) for gp in gps]
        mu = np.stack([f[0] for f in fitted])
        var = np.stack([f[1] for f in fitted])
        cw = np.zeros(len(gps))
        for idx, wg in zip(members, w):
            if idx >= 0:
                cw[idx] += wg
        if cw.sum() <= 0:
            continue
        e, v = _moments(mu, var, cw / cw.sum())
        band = beta * np.sqrt(v) + 1e-12 * (1.0 + np.abs(e))
        own = np.all(np.abs(mu - e) <= band + beta * np.sqrt(var), axis=1)
        projected = np.array([np.all(np.abs(gp.smooth(e) - e) <= band + beta * np.sqrt(vk)) for gp, vk in zip(gps, var)])
        inside = own | projected
        ok &= np.array([idx < 0 or inside[idx] for idx in members])
    return ok


def update_plausible(prev: PlausibleSet, cache: ComponentCache, config: DiscoveryConfig,
                     fresh: Sequence[Dag] = ()) -> PlausibleSet:
    """One generation of plausible-set maintenance.

    Candidates are the previous survivors plus fresh samples that were never
    eliminated; each candidate is kept when all its node functions sit inside
    the mixture confidence band at the logged data.
    """
    graphs = list(prev.graphs)
    ids = list(prev.ids)
    next_id = prev.next_id
    seen = set(graphs)
    for g in fresh:
        if g not in seen and g not in prev.eliminated:
            graphs.append(g)
            ids.append(next_id)
            next_id += 1
            seen.add(g)
    if len(cache.log) == 0:
        w = np.full(len(graphs), 1.0 / len(graphs))
        return PlausibleSet(tuple(graphs), tuple(ids), w, config.beta, prev.generation + 1, prev.eliminated, next_id)
    post = graph_posterior(graphs, cache)
    active = post.active(config.eps_weight)
    keep = band_check(graphs, post.weights, active, cache, config.beta)
    if not keep.any():
        best = int(np.argmax(post.weights))
        log.warning("plausible set emptied at generation %d; keeping max-posterior graph %s",
                    prev.generation + 1, graphs[best].key())
        keep[best] = True
    idx = np.flatnonzero(keep)
    dropped = frozenset(g for g, k in zip(graphs, keep) if not k)
    return PlausibleSet(
        tuple(graphs[k] for k in idx),
        tuple(ids[k] for k in idx),
        normalize_log_weights(post.log_weights[idx]),
        config.beta,
        prev.generation + 1,
        prev.eliminated | dropped,
        next_id,
    )
