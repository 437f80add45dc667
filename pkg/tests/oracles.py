"""Independent brute-force oracles shared by the unit and acceptance tests."""

import itertools
from collections import Counter

import numpy as np

from gacbo.dag_space import Dag
from gacbo.discovery import ComponentScoreTable


def dense_posterior(x, y, noise, ls, s):
    """Condition the joint Gaussian of (f(s), y) directly."""
    pts = np.vstack([x, s[None, :]])
    d = (pts[:, None, :] - pts[None, :, :]) / np.asarray(ls)
    cov = np.exp(-0.5 * (d**2).sum(-1))
    n = len(y)
    cyy = cov[:n, :n] + noise**2 * np.eye(n)
    cfy = cov[n, :n]
    w = np.linalg.solve(cyy, cfy)
    return float(w @ y), float(cov[n, n] - w @ cfy)


def acyclic(adj: np.ndarray) -> bool:
    """Nilpotency check: a directed graph is acyclic iff A^n = 0."""
    n = len(adj)
    p = np.eye(n, dtype=np.int64)
    for _ in range(n):
        p = np.minimum(p @ adj, 1)
    return not p.any()


def brute_force_dags(n: int, sink: int | None = None):
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        adj = np.zeros((n, n), dtype=np.int64)
        for on, (i, j) in zip(bits, pairs):
            adj[i, j] = on
        if sink is not None and adj[sink].any():
            continue
        if acyclic(adj):
            yield adj


def reaches(adj: np.ndarray, src: int, dst: int) -> bool:
    seen, stack = set(), [src]
    while stack:
        u = stack.pop()
        if u == dst:
            return True
        if u not in seen:
            seen.add(u)
            stack.extend(np.flatnonzero(adj[u]).tolist())
    return False


def brute_force_mis(adj: np.ndarray, target: int, intervenable) -> set:
    out = set()
    for r in range(len(intervenable) + 1):
        for s in itertools.combinations(sorted(intervenable), r):
            cut = adj.copy()
            cut[:, list(s)] = 0
            if all(reaches(cut, x, target) for x in s):
                out.add(s)
    return out


def dag_from_adj(adj: np.ndarray) -> Dag:
    n = len(adj)
    return Dag(tuple(tuple(np.flatnonzero(adj[:, j]).tolist()) for j in range(n)))


def exact_distribution(table: ComponentScoreTable) -> dict:
    """Probability of every ancestral subgraph, by walking the full recursion tree."""
    n = table.n_nodes
    out: Counter = Counter()

    def visit(stack, parents, prob):
        # stack: pending (node, path) pairs in visiting order
        if not stack:
            nodes = frozenset(parents)
            g = Dag(tuple(parents.get(i, ((), ()))[0] for i in range(n)),
                    tuple(parents.get(i, ((), ()))[1] for i in range(n)), nodes)
            out[g] += prob
            return
        (node, path), rest = stack[0], stack[1:]
        if node in parents:
            visit(rest, parents, prob)
            return
        rows = [(p, a, s) for p, a, s in table.entries[node] if not set(p) & path]
        if not rows:
            rows = [((), (), 0.0)]
        w = np.exp(np.array([s for *_, s in rows]) - max(s for *_, s in rows))
        w /= w.sum()
        for (p, a, _), wk in zip(rows, w):
            perms = list(itertools.permutations(p)) or [()]
            for order in perms:
                child = [(j, path | {node}) for j in order]
                visit(child + rest, {**parents, node: (p, a)}, prob * wk / len(perms))

    visit([(n - 1, frozenset())], {}, 1.0)
    return dict(out)
