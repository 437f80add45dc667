"""DAG hypotheses over observed nodes with the target as sink.

Nodes are integers ``0..m``; node ``m`` is the target.  In the soft setting
each node additionally carries a set of action-variable indices that enter
its mechanism alongside its parents.
"""

from __future__ import annotations

import heapq
import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .data import ObservationLog
from .kernel_gp import ComponentData, GpPosterior, HyperPrior, Kernel, fit_component

Component = tuple[int, tuple[int, ...], tuple[int, ...]]
InterventionSet = tuple[int, ...]

DEFAULT_MAX_NODES = 4
NEGLIGIBLE_WEIGHT = 1e-8


class CycleError(ValueError):
    pass


class HypothesisSpaceTooLarge(ValueError):
    pass


def _toposort(parents: Sequence[Sequence[int]], members: Iterable[int]) -> list[int]:
    members = sorted(members)
    member_set = set(members)
    indeg = {i: 0 for i in members}
    children: dict[int, list[int]] = {i: [] for i in members}
    for i in members:
        for p in parents[i]:
            if p not in member_set:
                raise ValueError(f"node {i} has parent {p} outside the graph")
            indeg[i] += 1
            children[p].append(i)
    heap = [i for i in members if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for c in children[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(members):
        raise CycleError("graph contains a directed cycle")
    return order


@dataclass(frozen=True)
class Dag:
    """Parent and action sets per node.

    ``nodes`` restricts the graph to a subset of node indices (the target is
    always a member); ``None`` means every node ``0..m`` is present.
    """

    parents: tuple[tuple[int, ...], ...]
    actions: tuple[tuple[int, ...], ...] | None = None
    nodes: frozenset[int] | None = None

    def __post_init__(self):
        n = len(self.parents)
        if n == 0:
            raise ValueError("a Dag needs at least the target node")
        parents = tuple(tuple(sorted(set(p))) for p in self.parents)
        actions = tuple(() for _ in range(n)) if self.actions is None else tuple(
            tuple(sorted(set(a))) for a in self.actions
        )
        if len(actions) != n:
            raise ValueError("one action set per node required")
        nodes = frozenset(range(n)) if self.nodes is None else frozenset(self.nodes)
        if n - 1 not in nodes:
            raise ValueError("target node must belong to the graph")
        for i in range(n):
            if i not in nodes and (parents[i] or actions[i]):
                raise ValueError(f"node {i} is not in the graph but has inputs")
            if i in parents[i]:
                raise CycleError(f"self loop on node {i}")
            if n - 1 in parents[i]:
                raise ValueError("the target node cannot be a parent")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "nodes", nodes)
        _toposort(parents, nodes)

    @property
    def m(self) -> int:
        return len(self.parents) - 1

    @property
    def target(self) -> int:
        return self.m

    @property
    def is_full(self) -> bool:
        return len(self.nodes) == len(self.parents)

    def components(self) -> tuple[Component, ...]:
        return tuple((i, self.parents[i], self.actions[i]) for i in sorted(self.nodes))

    def children(self, i: int) -> list[int]:
        return [j for j in sorted(self.nodes) if i in self.parents[j]]

    def ancestors(self, i: int) -> set[int]:
        seen: set[int] = set()
        stack = list(self.parents[i])
        while stack:
            j = stack.pop()
            if j not in seen:
                seen.add(j)
                stack.extend(self.parents[j])
        return seen

    def has_path(self, src: int, dst: int) -> bool:
        return src == dst or src in self.ancestors(dst)

    def mutate(self, pinned: Iterable[int]) -> "Dag":
        """Graph after do(pinned): incoming edges of pinned nodes are cut."""
        pinned = set(pinned)
        parents = tuple(() if i in pinned else p for i, p in enumerate(self.parents))
        return Dag(parents, self.actions, self.nodes)

    def ancestral(self) -> "Dag":
        """Subgraph induced by the target and its ancestors."""
        keep = self.ancestors(self.target) | {self.target}
        parents = tuple(self.parents[i] if i in keep else () for i in range(self.m + 1))
        actions = tuple(self.actions[i] if i in keep else () for i in range(self.m + 1))
        return Dag(parents, actions, frozenset(keep))

    def to_text(self) -> str:
        lines = []
        for i in sorted(self.nodes):
            p = ",".join(map(str, self.parents[i]))
            a = ",".join(map(str, self.actions[i]))
            lines.append(f"node:{i} parents:[{p}] actions:[{a}]")
        return "\n".join(lines)

    def key(self) -> str:
        return " | ".join(self.to_text().splitlines())

    @classmethod
    def from_text(cls, text: str, n_nodes: int | None = None) -> "Dag":
        """Parse the ``node:i parents:[..] actions:[..]`` line format (``|`` also separates lines)."""
        pat = re.compile(r"node:(\d+)\s+parents:\[([\d,\s]*)\]\s+actions:\[([\d,\s]*)\]")
        entries = {}
        for line in re.split(r"[\n|]", text):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            match = pat.fullmatch(line)
            if not match:
                raise ValueError(f"cannot parse graph line {line!r}")
            i = int(match.group(1))
            if i in entries:
                raise ValueError(f"node {i} listed twice")
            ints = lambda s: tuple(int(x) for x in s.split(",") if x.strip())  # noqa: E731
            entries[i] = (ints(match.group(2)), ints(match.group(3)))
        if not entries:
            raise ValueError("empty graph description")
        n = max(entries) + 1 if n_nodes is None else n_nodes
        parents = tuple(entries.get(i, ((), ()))[0] for i in range(n))
        actions = tuple(entries.get(i, ((), ()))[1] for i in range(n))
        return cls(parents, actions, frozenset(entries))


def topological_order(g: Dag | Sequence[Sequence[int]]) -> list[int]:
    """Parents before children, ties broken by ascending index."""
    if isinstance(g, Dag):
        return _toposort(g.parents, g.nodes)
    return _toposort(g, range(len(g)))


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


def _observed_dags(m: int, forbidden: set[tuple[int, int]], max_parents: int | None):
    pairs = [(i, j) for i in range(m) for j in range(m) if i != j and (i, j) not in forbidden]
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        parents = [[] for _ in range(m)]
        for on, (i, j) in zip(bits, pairs):
            if on:
                parents[j].append(i)
        if max_parents is not None and any(len(p) > max_parents for p in parents):
            continue
        try:
            _toposort(parents, range(m))
        except CycleError:
            continue
        yield parents


def _subsets(items: Sequence[int]):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def _action_assignments(m: int, n_actions: int, mode: str, action_targets):
    if n_actions == 0 or mode == "none":
        yield tuple(() for _ in range(m + 1))
        return
    targets = [tuple(range(m + 1)) if action_targets is None else tuple(action_targets[j]) for j in range(n_actions)]
    if mode == "exclusive":
        choices = [[(node,) for node in t] for t in targets]
    elif mode == "free":
        choices = [[s for s in _subsets(t) if s] for t in targets]
    else:
        raise ValueError(f"unknown action mode {mode!r}")
    for combo in itertools.product(*choices):
        acts = [[] for _ in range(m + 1)]
        for j, nodes in enumerate(combo):
            for node in nodes:
                acts[node].append(j)
        yield tuple(tuple(a) for a in acts)


def count_dags(m: int, n_actions: int = 0, action_mode: str = "none", action_targets=None,
               forbidden_edges=(), max_parents: int | None = None) -> int:
    forbidden = set(forbidden_edges)
    n_obs = sum(1 for _ in _observed_dags(m, forbidden, max_parents))
    n_target = sum(
        1 for s in _subsets([i for i in range(m) if (i, m) not in forbidden])
        if max_parents is None or len(s) <= max_parents
    )
    if n_actions == 0 or action_mode == "none":
        n_act = 1
    else:
        targets = [m + 1 if action_targets is None else len(action_targets[j]) for j in range(n_actions)]
        n_act = int(np.prod([t if action_mode == "exclusive" else 2**t - 1 for t in targets]))
    return n_obs * n_target * n_act


def enumerate_dags(
    m: int,
    n_actions: int = 0,
    action_mode: str = "none",
    action_targets: Sequence[Sequence[int]] | None = None,
    forbidden_edges: Iterable[tuple[int, int]] = (),
    max_parents: int | None = None,
    max_nodes: int = DEFAULT_MAX_NODES,
    max_graphs: int | None = None,
) -> list[Dag]:
    """All DAGs over nodes ``0..m`` with ``m`` as sink, crossed with action assignments.

    ``action_mode`` is ``"none"`` (hard setting), ``"exclusive"`` (each action
    feeds exactly one node) or ``"free"`` (each action feeds a non-empty set of
    nodes).  ``action_targets[j]`` lists the nodes action ``j`` may feed.
    """
    if m > max_nodes:
        raise HypothesisSpaceTooLarge(
            f"{m} non-target nodes exceed the enumeration cap of {max_nodes}; use graph sampling mode"
        )
    forbidden = set(forbidden_edges)
    if max_graphs is not None:
        total = count_dags(m, n_actions, action_mode, action_targets, forbidden, max_parents)
        if total > max_graphs:
            raise HypothesisSpaceTooLarge(f"{total} graphs exceed max_graphs={max_graphs}; use graph sampling mode")
    target_sets = [
        s for s in _subsets([i for i in range(m) if (i, m) not in forbidden])
        if max_parents is None or len(s) <= max_parents
    ]
    assignments = list(_action_assignments(m, n_actions, action_mode, action_targets))
    out = []
    for obs in _observed_dags(m, forbidden, max_parents):
        for tp in target_sets:
            parents = tuple(tuple(p) for p in obs) + (tuple(tp),)
            for acts in assignments:
                out.append(Dag(parents, acts))
    return out


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComponentEntry:
    score: float
    gp: GpPosterior


class ComponentCache:
    """Per-component GP score and MAP posterior for the current data set.

    Entries are keyed by ``(node, parents, actions)`` so graphs sharing a
    component share its fit.  The cache invalidates itself when the log grows.
    """

    def __init__(self, log: ObservationLog, noise_sd: Sequence[float], grid_points: int = 5,
                 grid_low: float = 0.1, grid_high: float = 10.0, max_grid: int = 125):
        self.log = log
        self.noise_sd = np.asarray(noise_sd, dtype=float)
        if self.noise_sd.shape != (log.n_nodes,):
            raise ValueError("one noise scale per node required")
        self._grid_args = dict(points=grid_points, low=grid_low, high=grid_high, max_size=max_grid)
        self._priors: dict[int, HyperPrior] = {}
        self._entries: dict[Component, ComponentEntry] = {}
        self._n = len(log)
        self.fits = 0

    def prior(self, dim: int) -> HyperPrior:
        if dim not in self._priors:
            self._priors[dim] = HyperPrior.log_grid(dim, **self._grid_args)
        return self._priors[dim]

    def data(self, comp: Component) -> ComponentData:
        node, parents, actions = comp
        x, y = self.log.component_inputs(node, parents, actions)
        return ComponentData(x, y, float(self.noise_sd[node]))

    def entry(self, comp: Component) -> ComponentEntry:
        if len(self.log) != self._n:
            self._entries.clear()
            self._n = len(self.log)
        hit = self._entries.get(comp)
        if hit is not None:
            return hit
        data = self.data(comp)
        prior = self.prior(data.dim)
        if len(data) == 0:
            mid = prior.grid[len(prior.grid) // 2]
            entry = ComponentEntry(0.0, GpPosterior(Kernel(tuple(mid)), data))
        else:
            fit = fit_component(data, prior)
            entry = ComponentEntry(fit.score, GpPosterior(fit.kernel, data))
            self.fits += 1
        return self._entries.setdefault(comp, entry)

    def score(self, comp: Component) -> float:
        return self.entry(comp).score

    def gp(self, comp: Component) -> GpPosterior:
        return self.entry(comp).gp


def graph_log_likelihood(g: Dag, cache: ComponentCache) -> float:
    """Sum of component scores over the graph's nodes (log of the product of per-node evidences)."""
    return float(sum(cache.score(c) for c in g.components()))


@dataclass(frozen=True)
class GraphPosterior:
    graphs: tuple[Dag, ...]
    log_weights: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.graphs) == 0:
            raise ValueError("posterior over zero graphs")
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative and sum to one")

    def __len__(self) -> int:
        return len(self.graphs)

    def order(self) -> np.ndarray:
        """Indices sorted by descending weight (stable)."""
        return np.argsort(-self.weights, kind="stable")

    def weight_of(self, g: Dag) -> float:
        return float(sum(w for h, w in zip(self.graphs, self.weights) if h == g))

    def active(self, eps: float = NEGLIGIBLE_WEIGHT) -> np.ndarray:
        return self.weights >= eps * self.weights.max()


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    log_w = np.asarray(log_w, dtype=float)
    w = np.exp(log_w - logsumexp(log_w))
    return w / w.sum()


def graph_posterior(graphs: Sequence[Dag], cache: ComponentCache | None = None,
                    log_prior: Sequence[float] | None = None) -> GraphPosterior:
    """Posterior over ``graphs`` proportional to evidence times prior (uniform by default)."""
    graphs = tuple(graphs)
    if not graphs:
        raise ValueError("graph_posterior needs at least one graph")
    log_lik = np.zeros(len(graphs)) if cache is None else np.array([graph_log_likelihood(g, cache) for g in graphs])
    lp = np.zeros(len(graphs)) if log_prior is None else np.asarray(log_prior, dtype=float)
    log_w = log_lik + lp
    return GraphPosterior(graphs, log_w, normalize_log_weights(log_w))


# ---------------------------------------------------------------------------
# minimal intervention sets
# ---------------------------------------------------------------------------


def _valid_mis(g: Dag, s: tuple[int, ...]) -> bool:
    mutated = g.mutate(s)
    anc = mutated.ancestors(g.target)
    return all(x in anc for x in s)


def mis(g: Dag, intervenable: Iterable[int]) -> list[InterventionSet]:
    """Minimal intervention sets of ``g`` w.r.t. its target.

    A set qualifies when every member still reaches the target once the
    incoming edges of all members are cut.  Failing sets stay failing under
    supersets, so the search prunes on the first failure.
    """
    intervenable = set(intervenable)
    if g.target in intervenable:
        raise ValueError("the target is not intervenable")
    candidates = sorted(intervenable & g.ancestors(g.target))
    found: list[InterventionSet] = [()]

    def grow(current: tuple[int, ...], start: int) -> None:
        for k in range(start, len(candidates)):
            s = current + (candidates[k],)
            if _valid_mis(g, s):
                found.append(s)
                grow(s, k + 1)

    grow((), 0)
    return sorted(found, key=lambda s: (len(s), s))


def plausible_mis(posterior: GraphPosterior, intervenable: Iterable[int]) -> list[InterventionSet]:
    intervenable = set(intervenable)
    out: set[InterventionSet] = set()
    for g, w in zip(posterior.graphs, posterior.weights):
        if w > 0:
            out.update(mis(g, intervenable))
    return sorted(out, key=lambda s: (len(s), s))
