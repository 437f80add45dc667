"""Experiment driver: the per-seed optimisation loop, CSV output and summary metrics."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .acquisition import SearchBudget, candidate_groups, select_action_hard, select_action_soft
from .dag_space import ComponentCache, Dag, HypothesisSpaceTooLarge, enumerate_dags
from .data import Hard, Intervention, ObservationLog, Soft
from .discovery import (
    ComponentScoreTable,
    DiscoveryConfig,
    PlausibleSet,
    component_space,
    sample_graphs,
    update_plausible,
)
from .envs import Environment, make_env
from .surrogate import SurrogateModel

log = logging.getLogger(__name__)

ALGORITHMS = ("gacbo-s", "gacbo-h", "mcbo", "gp-ucb")
DEFAULT_SEEDS = (47, 42, 73, 66, 13)
CSV_COLUMNS = (
    "seed", "round", "algo", "env", "intervention", "reward", "expected_reward",
    "regret", "n_plausible", "w_true_graph", "ms",
)
REGRET_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RunConfig:
    env: str
    algo: str
    rounds: int = 150
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    beta: float | None = None
    graph: Dag | None = None
    n_samples: int = 20
    sampling: bool | None = None
    fresh_samples: bool = True
    max_graphs: int = 10_000
    max_parents: int | None = None
    max_actions: int | None = None
    n_init: int = 10
    budget: SearchBudget = field(default_factory=SearchBudget)
    noise: bool = True
    timing: bool = True
    log_graphs: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algo!r}; choose from {ALGORITHMS}")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def validate(self, env: Environment) -> None:
        setting = env.spec.setting
        if self.algo == "gacbo-s" and setting != "soft":
            raise ValueError(f"gacbo-s needs a soft environment; {env.spec.name} is {setting}")
        if self.algo == "gacbo-h" and setting != "hard":
            raise ValueError(f"gacbo-h needs a hard environment; {env.spec.name} is {setting}")
        if self.algo == "gp-ucb" and setting != "soft":
            raise ValueError("gp-ucb has no counterpart under hard interventions")
        if self.algo == "mcbo":
            if self.graph is None:
                raise ValueError("mcbo needs a supplied graph")
            if len(self.graph.parents) != env.spec.n_nodes:
                raise ValueError(f"supplied graph has {len(self.graph.parents)} nodes, env has {env.spec.n_nodes}")


@dataclass(frozen=True)
class RoundRecord:
    seed: int
    round: int
    algo: str
    env: str
    intervention: str
    values: tuple[float, ...]
    reward: float
    expected_reward: float
    regret: float
    n_plausible: int
    w_true_graph: float
    ms: float
    graphs: tuple[tuple[str, float], ...] = ()

    def row(self) -> list[str]:
        return [
            str(self.seed), str(self.round), self.algo, self.env, self.intervention,
            repr(self.reward), repr(self.expected_reward), repr(self.regret),
            str(self.n_plausible), repr(self.w_true_graph), f"{self.ms:.3f}",
        ]


# ---------------------------------------------------------------------------
# hypothesis spaces per algorithm
# ---------------------------------------------------------------------------


def _flat_graph(env: Environment) -> Dag:
    """Target alone, fed by every action: the structure-free GP-UCB model."""
    spec = env.spec
    actions = tuple(() for _ in range(spec.m)) + (tuple(range(spec.n_actions)),)
    return Dag(tuple(() for _ in range(spec.n_nodes)), actions, frozenset({spec.m}))


class _Discovery:
    """Plausible-set bookkeeping for one seed."""

    def __init__(self, config: RunConfig, env: Environment, cache: ComponentCache, beta: float, seed: int):
        spec = env.spec
        self.cache = cache
        self.seed = seed
        self.frozen = config.algo in ("mcbo", "gp-ucb")
        self.dconfig = DiscoveryConfig(beta=beta, n_samples=config.n_samples)
        self.fresh = config.fresh_samples
        self.space = None
        if config.algo == "mcbo":
            self.plausible = PlausibleSet.initial([config.graph], beta)
            return
        if config.algo == "gp-ucb":
            self.plausible = PlausibleSet.initial([_flat_graph(env)], beta)
            return
        graphs = None
        if not config.sampling:
            try:
                graphs = enumerate_dags(
                    spec.m, spec.n_actions, spec.action_mode, spec.action_targets,
                    max_parents=config.max_parents, max_graphs=config.max_graphs,
                )
            except HypothesisSpaceTooLarge as exc:
                if config.sampling is False:
                    raise
                log.info("%s; switching to graph sampling", exc)
        if graphs is None:
            self.space = component_space(
                spec.m, spec.n_actions, spec.action_targets, max_parents=config.max_parents,
                max_actions=config.max_actions,
            )
            graphs = [g for g, _ in self._sample(0)]
        self.plausible = PlausibleSet.initial(graphs, beta)

    def _sample(self, t: int) -> list[tuple[Dag, int]]:
        table = ComponentScoreTable.from_cache(self.cache, self.space)
        rng = np.random.default_rng([self.seed, 2, t])
        return sample_graphs(self.dconfig.n_samples, table, rng, complete=True)

    def update(self, t: int) -> PlausibleSet:
        if self.frozen or t == 0:
            return self.plausible
        fresh = [g for g, _ in self._sample(t)] if self.space is not None and self.fresh else []
        self.plausible = update_plausible(self.plausible, self.cache, self.dconfig, fresh)
        return self.plausible


def _models(plausible: PlausibleSet, cache: ComponentCache, beta: float, cap: int) -> dict[Dag, SurrogateModel]:
    return {anc: SurrogateModel.from_cache(anc, cache, beta) for _, _, anc in candidate_groups(plausible, cap)}


def _initial_design(env: Environment, rng: np.random.Generator) -> Intervention:
    """Uniform draw from the action box, or from a uniformly chosen intervention set."""
    spec = env.spec
    if spec.setting == "soft":
        box = np.asarray(spec.action_box)
        return Soft(tuple(float(x) for x in rng.uniform(box[:, 0], box[:, 1])))
    nodes = spec.family[int(rng.integers(len(spec.family)))]
    return Hard(tuple(nodes), tuple(float(rng.uniform(*spec.node_box[i])) for i in nodes))


def _round_budget(base: SearchBudget, seed: int, t: int) -> SearchBudget:
    state = np.random.SeedSequence([seed, 1, t]).generate_state(1, dtype=np.uint32)[0]
    return replace(base, seed=int(state))


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def run_seed(config: RunConfig, seed: int) -> list[RoundRecord]:
    """One full optimisation run.  Errors abort this seed only; records so far are kept."""
    env = make_env(config.env, noise=config.noise)
    spec = env.spec
    config.validate(env)
    beta = spec.beta if config.beta is None else config.beta
    _, best = env.optimum()
    obs_log = ObservationLog(spec.n_nodes, spec.n_actions)
    cache = ComponentCache(obs_log, spec.noise_sd)
    env_rng = np.random.default_rng([seed, 0])
    records: list[RoundRecord] = []
    try:
        discovery = _Discovery(config, env, cache, beta, seed)
        for t in range(config.rounds):
            start = time.perf_counter()
            plausible = discovery.update(t)
            budget = _round_budget(config.budget, seed, t)
            models = _models(plausible, cache, beta, budget.max_graphs)
            if t < config.n_init:
                intervention = _initial_design(env, np.random.default_rng([seed, 3, t]))
            elif spec.setting == "soft":
                intervention = select_action_soft(plausible, models, budget, spec.action_box).intervention
            else:
                intervention = select_action_hard(plausible, models, budget, spec.node_box, spec.family).intervention
            obs = env.step(intervention, env_rng, t)
            obs_log.append(obs)
            expected = env.expected_reward(intervention)
            regret = best - expected
            if regret < -REGRET_TOLERANCE:
                log.warning("seed %d round %d: chosen arm beats the oracle optimum by %.3g", seed, t, -regret)
            ms = (time.perf_counter() - start) * 1000.0 if config.timing else 0.0
            dump = ()
            if config.log_graphs:
                dump = tuple((g.key(), float(w)) for g, w in zip(plausible.graphs, plausible.weights))
            records.append(RoundRecord(
                seed=seed, round=t, algo=config.algo, env=spec.name,
                intervention=intervention.serialize(),
                values=tuple(float(v) for v in obs.values), reward=float(obs.values[spec.m]),
                expected_reward=expected, regret=regret, n_plausible=len(plausible),
                w_true_graph=plausible.weight_of(spec.true_dag) if config.algo != "gp-ucb" else 0.0,
                ms=ms, graphs=dump,
            ))
            log.debug("seed %d round %d: %s reward %.4f regret %.4f |G|=%d", seed, t,
                      records[-1].intervention, obs.values[spec.m], regret, len(plausible))
    except Exception:
        log.exception("seed %d aborted after %d rounds", seed, len(records))
    return records


def _run_seed_args(args):
    return run_seed(*args)


def run_experiment(config: RunConfig) -> list[RoundRecord]:
    """All seeds of ``config``; records sorted by (seed order, round)."""
    if config.rounds == 0:
        return []
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(config.seeds))) as pool:
            per_seed = list(pool.map(_run_seed_args, [(config, s) for s in config.seeds]))
    else:
        per_seed = [run_seed(config, s) for s in config.seeds]
    return [r for recs in per_seed for r in recs]


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_csv(records: Iterable[RoundRecord], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("seed", "round", "n_plausible"):
            row[key] = int(row[key])
        for key in ("reward", "expected_reward", "regret", "w_true_graph", "ms"):
            row[key] = float(row[key])
    return rows


def write_graph_log(records: Iterable[RoundRecord], path: str | Path) -> None:
    lines = []
    for r in records:
        lines.append(f"# seed={r.seed} round={r.round} n={len(r.graphs)}")
        lines.extend(f"w={w:.6e} {key}" for key, w in r.graphs)
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph_log(path: str | Path) -> dict[tuple[int, int], dict[str, float]]:
    """``(seed, round) -> {graph key: weight}`` from a plausible-set dump."""
    out: dict[tuple[int, int], dict[str, float]] = {}
    current = None
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            fields = dict(tok.split("=") for tok in line[1:].split())
            current = (int(fields["seed"]), int(fields["round"]))
            out[current] = {}
        elif line.strip():
            w, key = line.split(" ", 1)
            out[current][key] = float(w[2:])
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Summary:
    env: str
    algo: str
    seeds: tuple[int, ...]
    rounds: np.ndarray
    mean_reward: np.ndarray
    se_reward: np.ndarray
    running_mean_reward: np.ndarray
    mean_regret: np.ndarray
    cumulative_regret: np.ndarray
    se_cumulative_regret: np.ndarray
    final_reward: float
    final_cumulative_regret: float


def _as_rows(records) -> list[dict]:
    rows = []
    for r in records:
        if isinstance(r, RoundRecord):
            rows.append({"seed": r.seed, "round": r.round, "algo": r.algo, "env": r.env,
                         "expected_reward": r.expected_reward, "regret": r.regret})
        else:
            rows.append(r)
    return rows


def compute_metrics(records: Sequence) -> dict[tuple[str, str], Summary]:
    """Across-seed statistics per (env, algo).

    Standard errors use the population standard deviation over seeds divided
    by sqrt(number of seeds).  Only rounds reached by every seed are kept.
    """
    rows = _as_rows(records)
    if not rows:
        raise ValueError("no records to summarise")
    groups: dict[tuple[str, str], dict[int, dict[int, tuple[float, float]]]] = {}
    for row in rows:
        per_seed = groups.setdefault((row["env"], row["algo"]), {})
        per_seed.setdefault(int(row["seed"]), {})[int(row["round"])] = (
            float(row["expected_reward"]), float(row["regret"]))
    out = {}
    for key, per_seed in sorted(groups.items()):
        seeds = tuple(sorted(per_seed))
        horizon = min(len(per_seed[s]) for s in seeds)
        rounds = np.arange(horizon)
        reward = np.array([[per_seed[s][t][0] for t in rounds] for s in seeds])
        regret = np.array([[per_seed[s][t][1] for t in rounds] for s in seeds])
        k = len(seeds)
        cum = np.cumsum(regret, axis=1)
        running = np.cumsum(reward, axis=1) / (rounds + 1)
        out[key] = Summary(
            env=key[0], algo=key[1], seeds=seeds, rounds=rounds,
            mean_reward=reward.mean(axis=0), se_reward=reward.std(axis=0) / np.sqrt(k),
            running_mean_reward=running.mean(axis=0), mean_regret=regret.mean(axis=0),
            cumulative_regret=cum.mean(axis=0), se_cumulative_regret=cum.std(axis=0) / np.sqrt(k),
            final_reward=float(reward[:, -1].mean()) if horizon else float("nan"),
            final_cumulative_regret=float(cum[:, -1].mean()) if horizon else 0.0,
        )
    return out


def window_mean(records: Sequence, seed: int, first: int, last: int, column: str = "expected_reward") -> float:
    """Mean of ``column`` over rounds ``first..last`` (inclusive, 0-based) of one seed."""
    vals = [float(r[column] if isinstance(r, dict) else getattr(r, column)) for r in records
            if (r["seed"] if isinstance(r, dict) else r.seed) == seed
            and first <= (r["round"] if isinstance(r, dict) else r.round) <= last]
    if not vals:
        raise ValueError(f"no rounds {first}..{last} for seed {seed}")
    return float(np.mean(vals))
