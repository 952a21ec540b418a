"""Experiment runner: budgets x policies x replications, CSV output."""

from __future__ import annotations

import ast
import csv
import io
import math
import operator
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .graph import CostModel, Graph, build_instance, default_probabilities, load_edge_list
from .policies import (
    HEURISTICS,
    AdaptiveGreedySelector,
    ExactGain,
    ExactMu,
    MCGain,
    MCMu,
    SampledAdaptiveGreedySelector,
    HeuristicSelector,
    execute_seeding_vector,
    greedy_nonadaptive,
    make_streams,
    run_adaptive_policy,
    sampled_greedy_nonadaptive,
)
from .realization import lazy_realization_oracle

ADAPTIVE = ("sampled_adaptive_greedy", "adaptive_greedy", "adaptive_greedy_exact") + HEURISTICS
NONADAPTIVE = ("sampled_greedy", "greedy", "greedy_exact")
POLICIES = ADAPTIVE + NONADAPTIVE


class ConfigError(ValueError):
    pass


# --- beta sampling ----------------------------------------------------------

def sample_truncated_normal(mean: float, variance: float, lo: float, hi: float,
                            rng: np.random.Generator, size: int | None = None):
    """Rejection-sample a normal restricted to ``[lo, hi]``; exact zeros are redrawn."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    if variance <= 0:
        raise ValueError("variance must be positive")
    sd = math.sqrt(variance)
    count = 1 if size is None else size
    out = np.empty(count)
    todo = np.arange(count)
    while len(todo):
        draw = rng.normal(mean, sd, len(todo))
        ok = (draw >= lo) & (draw <= hi) & (draw != 0.0)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return float(out[0]) if size is None else out


# --- config -----------------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.FloorDiv: operator.floordiv, ast.Pow: operator.pow}


def eval_budget_expression(expr: str, k: float) -> float:
    """Evaluate an arithmetic expression in the single variable ``k``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id == "k":
            return k
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ConfigError(f"unsupported expression element in {expr!r}")

    return ev(ast.parse(expr, mode="eval"))


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic:400:1010:0"
    directed: bool = False
    default_prob: str = "indegree"
    beta_mean: float = 0.5
    beta_variance: float = 1.0
    beta_lo: float = 0.0
    beta_hi: float = 1.0
    b: int = 5
    cost_base: float = 1.0
    cost_growth: float = 1.2
    budgets: list = field(default_factory=lambda: [0, 10, 20, 30, 40, 50])
    replications: int = 20
    eps: float = 0.5
    policies: list = field(default_factory=lambda: ["sampled_adaptive_greedy", *HEURISTICS])
    mc_sims: int = 300
    rr_count: str = "5000 + 1000 * (k / 10)"
    master_seed: int = 0
    timing: bool = True
    workers: int = 1

    def validate(self) -> None:
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(k < 0 for k in self.budgets):
            raise ConfigError("budgets must be nonnegative")
        if not 0.0 <= self.beta_lo < self.beta_hi <= 1.0:
            raise ConfigError("beta interval must lie within [0, 1]")
        if self.beta_variance <= 0:
            raise ConfigError("beta_variance must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (0, 1)")
        if self.b < 1:
            raise ConfigError("b must be >= 1")
        unknown = [p for p in self.policies if p not in POLICIES]
        if unknown:
            raise ConfigError(f"unknown policies {unknown}; known: {', '.join(POLICIES)}")
        if not self.policies:
            raise ConfigError("no policies configured")
        self.default_prob_value()
        eval_budget_expression(self.rr_count, 10.0)

    def default_prob_value(self) -> float | None:
        if self.default_prob == "indegree":
            return None
        if self.default_prob.startswith("constant:"):
            try:
                p = float(self.default_prob.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad default_prob {self.default_prob!r}") from None
            if not 0.0 < p <= 1.0:
                raise ConfigError("constant default probability must lie in (0, 1]")
            return p
        raise ConfigError("default_prob must be 'indegree' or 'constant:<p>'")

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment."""
        cfg = cls()
        types = {f.name: f.type for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            setattr(cfg, key, _coerce(key, value, getattr(cls(), key)))
        cfg.validate()
        return cfg

    def set(self, key: str, value: str) -> None:
        if not hasattr(self, key):
            raise ConfigError(f"unknown key {key!r}")
        setattr(self, key, _coerce(key, value, getattr(type(self)(), key)))


def _coerce(key, value: str, default):
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            items = [v.strip() for v in value.split(",") if v.strip()]
            return [float(v) for v in items] if key == "budgets" else items
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


# --- datasets -----------------------------------------------------------------

def synthetic_graph(n: int, m: int, seed: int) -> Graph:
    """Undirected scale-free graph with about ``m`` edges, each edge doubled."""
    import networkx as nx

    # dual Barabasi-Albert with 2 or 3 links per arrival averages m/n edges per node
    p = min(1.0, max(0.0, 3.0 - m / n))
    nxg = nx.dual_barabasi_albert_graph(n, 2, 3, p, seed=seed)
    und = sorted((min(u, v), max(u, v)) for u, v in nxg.edges())
    src = [e for u, v in und for e in (u, v)]
    dst = [e for u, v in und for e in (v, u)]
    return Graph(n, np.array(src), np.array(dst), np.full(len(src), np.nan))


def load_dataset(cfg: ExperimentConfig) -> Graph:
    source = cfg.dataset
    if source.startswith("synthetic:"):
        try:
            n, m, seed = (int(t) for t in source.split(":")[1:])
        except ValueError:
            raise ConfigError("synthetic dataset must be synthetic:<n>:<m>:<seed>") from None
        g = synthetic_graph(n, m, seed)
    else:
        if not os.path.isfile(source):
            raise ConfigError(f"dataset {source!r} not found")
        g = load_edge_list(source, directed=cfg.directed)
    return default_probabilities(g, cfg.default_prob_value())


# --- running -------------------------------------------------------------------

@dataclass
class ResultRow:
    dataset: str
    policy: str
    k: float
    replication: int
    master_seed: int
    spread: int
    cost: float
    iterations: int
    wall_ms: float


ROW_FIELDS = [f.name for f in fields(ResultRow)]


def replication_seeds(master_seed: int, rep: int):
    """Seed sequences for beta, the hidden realization and the policy streams.

    They depend on the replication only, so every policy and budget within a
    replication faces the same nodes and the same realization.
    """
    base = np.random.SeedSequence(master_seed, spawn_key=(rep,))
    beta_ss, phi_ss, policy_ss = base.spawn(3)
    return beta_ss, phi_ss, policy_ss


def make_selector(name: str, cfg: ExperimentConfig):
    if name == "sampled_adaptive_greedy":
        return SampledAdaptiveGreedySelector(cfg.eps)
    if name == "adaptive_greedy":
        return AdaptiveGreedySelector(MCGain(cfg.mc_sims))
    if name == "adaptive_greedy_exact":
        return AdaptiveGreedySelector(ExactGain())
    return HeuristicSelector(name)


def run_policy(name: str, inst, cfg: ExperimentConfig, phi_ss, policy_ss):
    """One run of one policy; returns the trace."""
    streams = make_streams(policy_ss)
    oracle = lazy_realization_oracle(inst, np.random.default_rng(phi_ss))
    if name in ADAPTIVE:
        return run_adaptive_policy(make_selector(name, cfg), inst, oracle, streams)
    if name == "sampled_greedy":
        theta = max(1, int(math.ceil(eval_budget_expression(cfg.rr_count, inst.k))))
        x = sampled_greedy_nonadaptive(inst, theta, streams)
    else:
        x = greedy_nonadaptive(inst, ExactMu() if name == "greedy_exact" else MCMu(cfg.mc_sims), streams)
    return execute_seeding_vector(inst, x, oracle)


def run_replication(cfg: ExperimentConfig, graph: Graph, rep: int, trace_dir=None) -> list[ResultRow]:
    beta_ss, phi_ss, policy_ss = replication_seeds(cfg.master_seed, rep)
    beta = sample_truncated_normal(cfg.beta_mean, cfg.beta_variance, cfg.beta_lo, cfg.beta_hi,
                                   np.random.default_rng(beta_ss), size=graph.n)
    base = build_instance(graph, beta, cfg.b, CostModel(cfg.cost_base, cfg.cost_growth), 0.0)
    rows = []
    for name in cfg.policies:
        for k in cfg.budgets:
            inst = base.with_budget(k)
            start = time.perf_counter()
            trace = run_policy(name, inst, cfg, phi_ss, policy_ss)
            wall = time.perf_counter() - start
            rows.append(ResultRow(cfg.dataset, name, float(k), rep, cfg.master_seed, int(trace.spread),
                                  float(trace.cost), int(trace.iterations),
                                  round(wall * 1000.0, 3) if cfg.timing else 0.0))
            if trace_dir is not None:
                path = Path(trace_dir) / f"{name}_k{k:g}_r{rep}.log"
                path.write_text(trace.to_text())
    return rows


def run_experiment(cfg: ExperimentConfig, trace_dir=None) -> list[ResultRow]:
    cfg.validate()
    graph = load_dataset(cfg)
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    reps = range(cfg.replications)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(run_replication, [cfg] * len(reps), [graph] * len(reps), reps,
                                   [trace_dir] * len(reps)))
    else:
        chunks = [run_replication(cfg, graph, rep, trace_dir) for rep in reps]
    rows = [row for chunk in chunks for row in chunk]
    order = {name: i for i, name in enumerate(cfg.policies)}
    rows.sort(key=lambda r: (order[r.policy], r.k, r.replication))
    return rows


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_FIELDS)
    for row in rows:
        writer.writerow([getattr(row, f) for f in ROW_FIELDS])
    return buf.getvalue()


SUMMARY_FIELDS = ["policy", "k", "n", "spread_mean", "spread_stderr", "cost_mean", "cost_stderr",
                  "iterations_mean", "wall_ms_mean"]


def summarize(rows: list[ResultRow]) -> list[dict]:
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        groups.setdefault((row.policy, row.k), []).append(row)
    out = []
    for (policy, k), group in groups.items():
        spread = np.array([r.spread for r in group], dtype=float)
        cost = np.array([r.cost for r in group], dtype=float)
        n = len(group)
        se = (lambda a: float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
        out.append({
            "policy": policy, "k": k, "n": n,
            "spread_mean": float(spread.mean()), "spread_stderr": se(spread),
            "cost_mean": float(cost.mean()), "cost_stderr": se(cost),
            "iterations_mean": float(np.mean([r.iterations for r in group])),
            "wall_ms_mean": float(np.mean([r.wall_ms for r in group])),
        })
    return out


def summary_to_csv(summary: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in summary:
        writer.writerow({key: (repr(v) if isinstance(v, float) else v) for key, v in row.items()})
    return buf.getvalue()


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
