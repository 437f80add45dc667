"""Command line entry point: ``gacbo run | oracle | list-envs | summarize``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .acquisition import SearchBudget
from .dag_space import Dag
from .envs import REGISTRY, make_env
from .harness import (
    ALGORITHMS,
    DEFAULT_SEEDS,
    RunConfig,
    compute_metrics,
    read_csv,
    run_experiment,
    write_csv,
    write_graph_log,
)

# config-file keys and the argparse destinations they feed
_CONFIG_KEYS = {
    "env", "algo", "rounds", "seeds", "beta", "graph_file", "graph_variant", "out", "log_graphs",
    "no_noise", "no_timing", "n_samples", "sampling", "no_fresh", "restarts", "local_steps",
    "refine", "max_graphs", "workers", "n_init",
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys are read as underscores."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gacbo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write a CSV of per-round records")
    run.add_argument("--config", help="key = value file; flags given on the command line win")
    run.add_argument("--env")
    run.add_argument("--algo", choices=ALGORITHMS)
    run.add_argument("--rounds", type=int)
    run.add_argument("--seeds", type=_seeds)
    run.add_argument("--beta", type=float)
    run.add_argument("--graph-file", help="supplied graph for mcbo (node:i parents:[..] actions:[..] lines)")
    run.add_argument("--graph-variant", help="use a built-in graph variant of the env for mcbo (true, missing, extra)")
    run.add_argument("--out", help="CSV path (stdout when omitted)")
    run.add_argument("--log-graphs", nargs="?", const="", default=None, metavar="PATH",
                     help="dump the plausible set each round (default PATH: <out>.graphs)")
    run.add_argument("--no-noise", action="store_true", default=None)
    run.add_argument("--no-timing", action="store_true", default=None, help="write ms=0 for reproducible files")
    run.add_argument("--n-samples", type=int, help="graph samples per round in sampling mode")
    run.add_argument("--sampling", type=_parse_bool, help="force (true) or forbid (false) graph sampling mode")
    run.add_argument("--no-fresh", action="store_true", default=None, help="never add fresh graph samples")
    run.add_argument("--restarts", type=int)
    run.add_argument("--local-steps", type=int)
    run.add_argument("--refine", type=int)
    run.add_argument("--max-graphs", type=int, help="acquisition cap on graphs per round")
    run.add_argument("--workers", type=int)
    run.add_argument("--n-init", type=int, help="rounds of random interventions before the acquisition takes over")

    oracle = sub.add_parser("oracle", help="print the best arm of an environment and its expected reward")
    oracle.add_argument("--env", required=True)
    oracle.add_argument("--no-noise", action="store_true")

    sub.add_parser("list-envs", help="list environments with their machine-readable descriptions")

    summ = sub.add_parser("summarize", help="per-(env, algo) summary of one or more result CSVs")
    summ.add_argument("csv", nargs="+")
    summ.add_argument("--last", type=int, default=25, help="window for the final-rounds mean")
    return parser


def _merge_config(args: argparse.Namespace) -> dict:
    merged: dict = {}
    if args.config:
        file_values = read_config_file(args.config)
        converters = {
            "rounds": int, "seeds": _seeds, "beta": float, "n_samples": int, "restarts": int,
            "local_steps": int, "refine": int, "max_graphs": int, "workers": int, "n_init": int,
            "log_graphs": lambda s: "" if _parse_bool_or_path(s) is True else s,
            "no_noise": _parse_bool, "no_timing": _parse_bool, "no_fresh": _parse_bool, "sampling": _parse_bool,
        }
        for key, value in file_values.items():
            merged[key] = converters.get(key, str)(value)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _parse_bool_or_path(text: str):
    try:
        return _parse_bool(text)
    except ValueError:
        return text


def _config_from(values: dict) -> tuple[RunConfig, str | None, str | None]:
    for key in ("env", "algo"):
        if key not in values:
            raise SystemExit(f"missing required setting --{key}")
    env = make_env(values["env"])
    graph = None
    if "graph_file" in values:
        graph = Dag.from_text(Path(values["graph_file"]).read_text(), n_nodes=env.spec.n_nodes)
    elif "graph_variant" in values:
        try:
            graph = env.spec.variants[values["graph_variant"]]
        except KeyError:
            raise SystemExit(f"unknown graph variant {values['graph_variant']!r}") from None
    budget = SearchBudget()
    budget = replace(budget, **{k: values[k] for k in ("restarts", "local_steps", "refine", "max_graphs") if k in values})
    config = RunConfig(
        env=values["env"], algo=values["algo"], rounds=values.get("rounds", 150),
        seeds=values.get("seeds", DEFAULT_SEEDS), beta=values.get("beta"), graph=graph,
        n_samples=values.get("n_samples", 20), sampling=values.get("sampling"),
        fresh_samples=not values.get("no_fresh", False), budget=budget,
        noise=not values.get("no_noise", False), timing=not values.get("no_timing", False),
        log_graphs=values.get("log_graphs") is not None and values.get("log_graphs") is not False,
        workers=values.get("workers", 1), n_init=values.get("n_init", 10),
    )
    out = values.get("out")
    graph_path = None
    if config.log_graphs:
        graph_path = values["log_graphs"] or (f"{out}.graphs" if out else "graphs.log")
    return config, out, graph_path


def cmd_run(args) -> int:
    config, out, graph_path = _config_from(_merge_config(args))
    records = run_experiment(config)
    text = write_csv(records, out)
    if out is None:
        sys.stdout.write(text)
    if graph_path:
        write_graph_log(records, graph_path)
    expected = config.rounds * len(config.seeds)
    if len(records) != expected:
        logging.getLogger("gacbo").error("%d of %d rounds completed", len(records), expected)
        return 1
    return 0


def cmd_oracle(args) -> int:
    env = make_env(args.env, noise=not args.no_noise)
    arm, value = env.optimum()
    print(f"{args.env}\t{arm.serialize()}\t{value:.10g}")
    return 0


def cmd_list_envs(args) -> int:
    for name in sorted(REGISTRY):
        print(json.dumps(make_env(name).spec.describe()))
    return 0


def cmd_summarize(args) -> int:
    rows = [row for path in args.csv for row in read_csv(path)]
    summaries = compute_metrics(rows)
    print("env\talgo\tseeds\trounds\tfinal_reward\tlast_window_mean\tcumulative_regret")
    for (env, algo), s in summaries.items():
        window = s.mean_reward[-args.last:]
        print(f"{env}\t{algo}\t{len(s.seeds)}\t{len(s.rounds)}\t{s.final_reward:.4f}\t"
              f"{window.mean():.4f}\t{s.final_cumulative_regret:.4f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "oracle": cmd_oracle, "list-envs": cmd_list_envs, "summarize": cmd_summarize}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
