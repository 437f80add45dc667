"""Benchmark simulators with ground-truth expected rewards.

Soft environments (function networks): ``dropwave``, ``rosenbrock``, ``alpine3``.
Hard environments (SCMs with do-interventions): ``toygraph``, ``epidemiology``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .dag_space import Dag
from .data import Hard, Intervention, Observation, Soft

ORACLE_SEED = 20240601
MC_SAMPLES = 100_000
GRID_POINTS = 10_001
_BOX_TOL = 1e-9

# probabilists' Gauss-Hermite nodes: E[f(sigma * xi)] ~ sum w f(sigma * x)
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(80)
_GH_W = _GH_W / _GH_W.sum()


@dataclass(frozen=True)
class EnvSpec:
    name: str
    setting: str
    node_names: tuple[str, ...]
    true_dag: Dag
    noise_sd: tuple[float, ...]
    beta: float
    action_names: tuple[str, ...] = ()
    action_box: tuple[tuple[float, float], ...] = ()
    node_box: dict = field(default_factory=dict)
    family: tuple[tuple[int, ...], ...] = ()
    action_mode: str = "none"
    action_targets: tuple[tuple[int, ...], ...] | None = None
    variants: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def m(self) -> int:
        return self.n_nodes - 1

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "setting": self.setting,
            "nodes": list(self.node_names),
            "target": self.m,
            "actions": list(self.action_names),
            "action_box": [list(b) for b in self.action_box],
            "intervenable": {str(k): list(v) for k, v in sorted(self.node_box.items())},
            "family": [list(s) for s in self.family],
            "noise_sd": list(self.noise_sd),
            "beta": self.beta,
            "action_mode": self.action_mode,
            "true_graph": self.true_dag.to_text(),
        }


class Environment:
    """Base simulator.  Subclasses provide ``spec`` and ``_simulate``."""

    spec: EnvSpec

    def __init__(self, noise: bool = True):
        self.noise = noise

    # subclasses: eps holds per-node exogenous draws (already scaled), rows = samples
    def _simulate(self, a: np.ndarray | None, do: dict, eps: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _exogenous(self, n: int, rng: np.random.Generator | None) -> np.ndarray:
        sd = np.asarray(self.spec.noise_sd)
        if rng is None:
            return np.zeros((n, self.spec.n_nodes))
        return rng.standard_normal((n, self.spec.n_nodes)) * sd

    def simulate(self, n: int, rng: np.random.Generator | None, intervention: Intervention) -> np.ndarray:
        """``n`` joint samples of all nodes; ``rng=None`` gives the noise-free values."""
        eps = self._exogenous(n, rng)
        if isinstance(intervention, Soft):
            a = np.broadcast_to(np.asarray(intervention.a, dtype=float), (n, self.spec.n_actions))
            return self._simulate(a, {}, eps)
        do = {i: np.full(n, v) for i, v in zip(intervention.nodes, intervention.values)}
        return self._simulate(None, do, eps)

    def validate(self, intervention: Intervention) -> None:
        spec = self.spec
        if isinstance(intervention, Soft):
            if spec.setting != "soft":
                raise ValueError(f"{spec.name} takes hard interventions")
            a = np.asarray(intervention.a, dtype=float)
            box = np.asarray(spec.action_box)
            if a.shape != (spec.n_actions,):
                raise ValueError(f"expected {spec.n_actions} actions, got {a.shape}")
            if np.any(a < box[:, 0] - _BOX_TOL) or np.any(a > box[:, 1] + _BOX_TOL):
                raise ValueError(f"action {intervention.a} outside box {spec.action_box}")
        else:
            if spec.setting != "hard":
                raise ValueError(f"{spec.name} takes soft interventions")
            if tuple(intervention.nodes) not in spec.family:
                raise ValueError(f"intervention set {intervention.nodes} not in family {spec.family}")
            for i, v in zip(intervention.nodes, intervention.values):
                lo, hi = spec.node_box[i]
                if not (lo - _BOX_TOL <= v <= hi + _BOX_TOL):
                    raise ValueError(f"value {v} for node {i} outside [{lo}, {hi}]")

    def step(self, intervention: Intervention, rng: np.random.Generator, round_index: int = 0) -> Observation:
        self.validate(intervention)
        values = self.simulate(1, rng if self.noise else None, intervention)[0]
        return Observation(values, intervention, round_index)

    def expected_reward(self, intervention: Intervention) -> float:
        """E[y] under the intervention; Monte Carlo with a fixed oracle seed unless overridden."""
        self.validate(intervention)
        return self._expected(intervention)

    def _expected(self, intervention: Intervention) -> float:
        y = self.simulate(MC_SAMPLES, np.random.default_rng(ORACLE_SEED), intervention)[:, self.spec.m]
        return float(y.mean())

    def optimum(self) -> tuple[Intervention, float]:
        raise NotImplementedError


def step_soft(env: Environment, a, rng: np.random.Generator, round_index: int = 0) -> Observation:
    return env.step(Soft(tuple(float(x) for x in a)), rng, round_index)


def step_hard(env: Environment, nodes, values, rng: np.random.Generator, round_index: int = 0) -> Observation:
    return env.step(Hard(tuple(nodes), tuple(float(v) for v in values)), rng, round_index)


def expected_reward(env: Environment, intervention: Intervention) -> float:
    return env.expected_reward(intervention)


def _refine_1d(fun, lo: float, hi: float, points: int = GRID_POINTS, polish: int = 20) -> tuple[float, float]:
    """Dense-grid argmax of a vectorized function, polishing the best ``polish`` grid peaks."""
    grid = np.linspace(lo, hi, points)
    vals = fun(grid)
    padded = np.r_[-np.inf, vals, -np.inf]
    peaks = np.flatnonzero((vals >= padded[:-2]) & (vals >= padded[2:]))
    peaks = peaks[np.argsort(-vals[peaks], kind="stable")[:polish]]
    best_x, best_v = float(grid[peaks[0]]), float(vals[peaks[0]])
    for k in peaks:
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, points - 1)]
        res = minimize_scalar(lambda x: -float(fun(np.array([x]))[0]), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > best_v:
            best_x, best_v = float(res.x), float(-res.fun)
    return best_x, best_v


# ---------------------------------------------------------------------------
# soft environments
# ---------------------------------------------------------------------------


def _dropwave_y(x0):
    return (1.0 + np.cos(12.0 * x0)) / (2.0 + 0.5 * x0**2)


class Dropwave(Environment):
    def __init__(self, noise: bool = True, noise_sd: float = 0.1):
        super().__init__(noise)
        true = Dag(((), (0,)), ((0, 1), ()))
        self.spec = EnvSpec(
            name="dropwave", setting="soft", node_names=("x0", "y"), true_dag=true,
            noise_sd=(noise_sd, noise_sd), beta=0.5, action_names=("a0", "a1"),
            action_box=((-5.12, 5.12), (-5.12, 5.12)), action_mode="exclusive",
            variants={
                "true": true,
                "missing": Dag(((), (0,)), ((0,), ())),
                "extra": Dag(((), (0,)), ((0, 1), (1,))),
            },
        )

    def _simulate(self, a, do, eps):
        x0 = np.sqrt(a[:, 0] ** 2 + a[:, 1] ** 2) + eps[:, 0]
        y = _dropwave_y(x0) + eps[:, 1]
        return np.column_stack([x0, y])

    def _mean_at_radius(self, r: np.ndarray) -> np.ndarray:
        sd = self.spec.noise_sd[0] if self.noise else 0.0
        r = np.asarray(r, dtype=float)
        return (_dropwave_y(r[..., None] + sd * _GH_X) * _GH_W).sum(axis=-1)

    def _expected(self, intervention):
        return float(self._mean_at_radius(np.array([np.hypot(*intervention.a)]))[0])

    @functools.lru_cache(maxsize=None)
    def optimum(self):
        r, val = _refine_1d(self._mean_at_radius, 0.0, 5.12 * np.sqrt(2.0))
        a = (r, 0.0) if r <= 5.12 else (5.12, float(np.sqrt(r**2 - 5.12**2)))
        return Soft(a), val


class Rosenbrock(Environment):
    """Chain x_0 .. x_{m-1} -> y; node k reads actions k and k+1."""

    def __init__(self, noise: bool = True, m: int = 2, noise_sd: float = 0.1):
        super().__init__(noise)
        n = m + 1
        parents = tuple(() if k == 0 else (k - 1,) for k in range(n))
        actions = tuple((k, k + 1) for k in range(n))
        true = Dag(parents, actions)
        missing = Dag(parents, tuple((k,) if k == 0 else a for k, a in enumerate(actions)))
        extra = Dag(tuple(tuple(range(k)) for k in range(n)), actions)
        self.spec = EnvSpec(
            name="rosenbrock", setting="soft",
            node_names=tuple(f"x{k}" for k in range(m)) + ("y",), true_dag=true,
            noise_sd=(noise_sd,) * n, beta=0.5, action_names=tuple(f"a{k}" for k in range(n + 1)),
            action_box=((-2.0, 2.0),) * (n + 1), action_mode="free",
            variants={"true": true, "missing": missing, "extra": extra},
        )

    def _simulate(self, a, do, eps):
        n = self.spec.n_nodes
        out = np.zeros((a.shape[0], n))
        prev = 0.0
        for k in range(n):
            f = -100.0 * (a[:, k + 1] - a[:, k] ** 2) ** 2 - (1.0 - a[:, k]) ** 2 + prev
            out[:, k] = f + eps[:, k]
            prev = out[:, k]
        return out

    def _expected(self, intervention):
        # noise enters additively and propagates linearly
        return float(self.simulate(1, None, intervention)[0, self.spec.m])

    def optimum(self):
        a = Soft((1.0,) * self.spec.n_actions)
        return a, self._expected(a)


def _alpine_factor(a):
    return np.sqrt(a) * np.sin(a)


class Alpine3(Environment):
    """x_0 = -sqrt(a_0) sin(a_0); x_i = sqrt(a_i) sin(a_i) x_{i-1}."""

    def __init__(self, noise: bool = True, m: int = 2, noise_sd: float = 0.1):
        super().__init__(noise)
        n = m + 1
        parents = tuple(() if k == 0 else (k - 1,) for k in range(n))
        actions = tuple((k,) for k in range(n))
        true = Dag(parents, actions)
        missing = Dag(tuple(() if k == n - 1 else p for k, p in enumerate(parents)), actions)
        extra = Dag(tuple(tuple(range(k)) for k in range(n)), actions)
        self.spec = EnvSpec(
            name="alpine3", setting="soft",
            node_names=tuple(f"x{k}" for k in range(m)) + ("y",), true_dag=true,
            noise_sd=(noise_sd,) * n, beta=0.5, action_names=tuple(f"a{k}" for k in range(n)),
            action_box=((0.0, 10.0),) * n, action_mode="exclusive",
            variants={"true": true, "missing": missing, "extra": extra},
        )

    def _simulate(self, a, do, eps):
        n = self.spec.n_nodes
        out = np.zeros((a.shape[0], n))
        out[:, 0] = -_alpine_factor(a[:, 0]) + eps[:, 0]
        for k in range(1, n):
            out[:, k] = _alpine_factor(a[:, k]) * out[:, k - 1] + eps[:, k]
        return out

    def _expected(self, intervention):
        # zero-mean noise enters linearly, so the mean is the noise-free chain
        return float(self.simulate(1, None, intervention)[0, self.spec.m])

    @functools.lru_cache(maxsize=None)
    def optimum(self):
        n = self.spec.n_nodes
        arg_lo, lo = _refine_1d(lambda x: -_alpine_factor(x), 0.0, 10.0)
        arg_hi, hi = _refine_1d(_alpine_factor, 0.0, 10.0)
        extremes = [(arg_lo, -lo), (arg_hi, hi)]
        best = None
        for picks in np.ndindex(*([2] * n)):
            a = tuple(extremes[p][0] for p in picks)
            val = -np.prod([extremes[p][1] for p in picks])
            if best is None or val > best[1]:
                best = (a, float(val))
        arm = Soft(best[0])
        return arm, self._expected(arm)


# ---------------------------------------------------------------------------
# hard environments
# ---------------------------------------------------------------------------


def _toy_y(z):
    return np.cos(z) - np.exp(-z / 20.0)


class ToyGraph(Environment):
    """X -> Z -> Y with X = e_x, Z = exp(-X) + e_z, Y = cos(Z) - exp(-Z/20) + e_y."""

    def __init__(self, noise: bool = True, noise_sd: float = 0.1,
                 x_box: tuple[float, float] = (-5.0, 5.0), z_box: tuple[float, float] = (-5.0, 20.0)):
        super().__init__(noise)
        true = Dag(((), (0,), (1,)))
        self.spec = EnvSpec(
            name="toygraph", setting="hard", node_names=("X", "Z", "Y"), true_dag=true,
            noise_sd=(noise_sd,) * 3, beta=1.0, node_box={0: tuple(x_box), 1: tuple(z_box)},
            family=((), (0,), (1,), (0, 1)),
            variants={
                "true": true,
                "missing": Dag(((), (0,), ())),
                "extra": Dag(((), (0,), (0, 1))),
            },
        )

    def _simulate(self, a, do, eps):
        n = eps.shape[0]
        x = do[0] if 0 in do else eps[:, 0]
        z = do[1] if 1 in do else np.exp(-x) + eps[:, 1]
        y = _toy_y(z) + eps[:, 2]
        return np.column_stack([np.broadcast_to(x, n), np.broadcast_to(z, n), y])

    def _mean_do_x(self, x):
        s2 = self.spec.noise_sd[1] ** 2 if self.noise else 0.0
        c = np.exp(-np.asarray(x, dtype=float))
        return np.cos(c) * np.exp(-s2 / 2.0) - np.exp(-c / 20.0) * np.exp(s2 / 800.0)

    def _expected(self, intervention):
        nodes = intervention.nodes
        vals = dict(zip(nodes, intervention.values))
        if 1 in vals:
            return float(_toy_y(vals[1]))
        if 0 in vals:
            return float(self._mean_do_x(vals[0]))
        sx = self.spec.noise_sd[0] if self.noise else 0.0
        return float((self._mean_do_x(sx * _GH_X) * _GH_W).sum())

    @functools.lru_cache(maxsize=None)
    def optimum(self):
        (zlo, zhi), (xlo, xhi) = self.spec.node_box[1], self.spec.node_box[0]
        z, vz = _refine_1d(_toy_y, zlo, zhi)
        x, vx = _refine_1d(self._mean_do_x, xlo, xhi)
        v0 = self._expected(Hard())
        arms = [(Hard((1,), (z,)), vz), (Hard((0,), (x,)), vx), (Hard(), v0)]
        return max(arms, key=lambda t: t[1])


class Epidemiology(Environment):
    """B, T exogenous; L = expit(0.5 T + B); R = 4 + L T; Y = 0.5 + cos(4T) + sin(2R - L) + B + e."""

    B, T, L, R, Y = range(5)

    def __init__(self, noise: bool = True, mc_samples: int = MC_SAMPLES):
        super().__init__(noise)
        self.mc_samples = mc_samples
        true = Dag(((), (), (0, 1), (1, 2), (0, 1, 2, 3)))
        self.spec = EnvSpec(
            name="epidemiology", setting="hard", node_names=("B", "T", "L", "R", "Y"), true_dag=true,
            noise_sd=(2 / np.sqrt(12), 4 / np.sqrt(12), 0.05, 0.05, 1.0), beta=1.0,
            node_box={1: (0.0, 4.0), 3: (0.0, 4.0)}, family=((), (1,), (3,), (1, 3)),
            variants={
                "true": true,
                "missing": Dag(((), (), (1,), (1, 2), (0, 2, 3))),
                "extra": Dag(((), (), (0, 1), (0, 1, 2), (0, 1, 2, 3))),
            },
        )

    def _exogenous(self, n, rng):
        eps = np.zeros((n, 5))
        if rng is None:
            eps[:, self.T] = 6.0
            return eps
        eps[:, self.B] = rng.uniform(-1.0, 1.0, n)
        eps[:, self.T] = rng.uniform(4.0, 8.0, n)
        eps[:, self.Y] = rng.standard_normal(n)
        return eps

    def _simulate(self, a, do, eps):
        n = eps.shape[0]
        b = eps[:, self.B]
        t = do.get(self.T, eps[:, self.T])
        lv = expit(0.5 * t + b)
        r = do.get(self.R, 4.0 + lv * t)
        y = 0.5 + np.cos(4.0 * t) + np.sin(-lv + 2.0 * r) + b + eps[:, self.Y]
        return np.column_stack([b, np.broadcast_to(t, n), lv, np.broadcast_to(r, n), y])

    def _expected(self, intervention):
        rng = np.random.default_rng(ORACLE_SEED) if self.noise else None
        n = self.mc_samples if self.noise else 1
        return float(self.simulate(n, rng, intervention)[:, self.Y].mean())

    def _grid_mean(self, nodes, grid: np.ndarray, n: int) -> np.ndarray:
        # common random numbers: every grid point sees the same exogenous draws
        eps = self._exogenous(n, np.random.default_rng(ORACLE_SEED) if self.noise else None)
        out = np.empty(grid.shape[0])
        for k, vals in enumerate(grid):
            do = {i: np.full(eps.shape[0], v) for i, v in zip(nodes, vals)}
            out[k] = self._simulate(None, do, eps)[:, self.Y].mean()
        return out

    @functools.lru_cache(maxsize=None)
    def optimum(self):
        arms = [(Hard(), self._expected(Hard()))]
        axis = np.linspace(0.0, 4.0, 81)
        for nodes in ((1,), (3,), (1, 3)):
            grid = axis[:, None] if len(nodes) == 1 else np.array(np.meshgrid(axis, axis, indexing="ij")).reshape(2, -1).T
            coarse = self._grid_mean(nodes, grid, 5_000)
            for k in np.argsort(-coarse)[:5]:
                arm = Hard(nodes, tuple(float(v) for v in grid[k]))
                arms.append((arm, self._expected(arm)))
        return max(arms, key=lambda t: t[1])


REGISTRY = {
    "dropwave": Dropwave,
    "rosenbrock": Rosenbrock,
    "alpine3": Alpine3,
    "toygraph": ToyGraph,
    "epidemiology": Epidemiology,
}


def make_env(name: str, noise: bool = True, **kwargs) -> Environment:
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(REGISTRY)}") from None
    return cls(noise=noise, **kwargs)
