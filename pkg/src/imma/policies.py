"""Seeding policies and the shared adaptive execution loop.

An adaptive run repeatedly asks a :class:`NodeSelector` for the next node,
passes the trial through the randomized budget gate, executes it against a
realization oracle and, on success, reveals the resulting diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .diffusion import kernel_seed, observe_diffusion
from .graph import Graph, Instance, trial_cost, vector_cost
from .realization import PartialRealization, residual_graph
from .ris import generalized_epic, sample_rr_collection

EPS = 1e-12


class Streams(NamedTuple):
    """Independent generators for selector/gate randomness (kappa), estimator
    sampling (omega) and the hidden realization (phi)."""

    kappa: np.random.Generator
    omega: np.random.Generator
    phi: np.random.Generator


def make_streams(seed) -> Streams:
    """Three generators derived from ``seed``.

    Children are built from the spawn key directly instead of
    ``SeedSequence.spawn``, which is stateful: repeated calls with the same
    sequence object must give the same streams.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = (np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,), pool_size=ss.pool_size)
                for i in range(3))
    return Streams(*(np.random.default_rng(c) for c in children))


def gate_proceed_probability(spent: float, k: float, next_cost: float) -> float:
    if spent + next_cost <= k + EPS:
        return 1.0
    return max(0.0, (k - spent) / next_cost)


def budget_gate(spent: float, k: float, next_cost: float, rng: np.random.Generator) -> bool:
    """True to execute the next trial, False to stop the run.

    A trial that would overshoot ``k`` is kept with probability
    ``(k - spent) / next_cost``.
    """
    if spent >= k:
        raise ValueError(f"budget gate called with spent={spent} >= k={k}")
    if next_cost <= 0:
        raise ValueError("trial cost must be positive")
    p = gate_proceed_probability(spent, k, next_cost)
    if p >= 1.0:
        return True
    return bool(rng.random() < p)


def max_iterations_r(inst: Instance, k: float | None = None) -> int:
    """Upper bound on the number of loop iterations of an adaptive run."""
    k = inst.k if k is None else k
    if k <= 0:
        return 0
    first = np.sort(inst.cost_table[:, 0])
    if first.sum() <= k:
        return inst.n
    return int(np.searchsorted(np.cumsum(first), k - EPS) + 1)


class SelectionContext:
    """State visible to a selector during one step of a run."""

    def __init__(self, inst: Instance, psi: PartialRealization, kappa=None, omega=None):
        self.inst = inst
        self.psi = psi
        self.kappa = kappa
        self.omega = omega
        self._residual = None
        self._residual_version = -1

    @property
    def x(self) -> np.ndarray:
        return self.psi.x()

    @property
    def residual(self) -> Graph:
        # the active set only grows, so its size identifies it within a run
        if self._residual_version != self.psi.n_active:
            self._residual = residual_graph(self.inst, self.psi)
            self._residual_version = self.psi.n_active
        return self._residual

    def feasible(self) -> np.ndarray:
        """Inactive nodes with trials left, ascending."""
        x = self.x
        return np.flatnonzero(~self.psi.active & (x < self.inst.b))

    def next_costs(self, nodes) -> np.ndarray:
        return self.inst.cost_table[nodes, self.x[nodes]]


def pick_best(nodes: np.ndarray, scores: np.ndarray, costs: np.ndarray) -> int:
    """Highest score; near-ties go to the cheaper next trial, then the lower id."""
    top = scores.max()
    tied = scores >= top - EPS * max(1.0, abs(top))
    cand = np.flatnonzero(tied)
    best = cand[np.lexsort((nodes[cand], costs[cand]))[0]]
    return int(nodes[best])


class NodeSelector:
    name = "selector"

    def select(self, ctx: SelectionContext) -> int | None:
        raise NotImplementedError

    def choices(self, ctx: SelectionContext) -> list[tuple[int, float]]:
        """Exact distribution of :meth:`select` (used by exhaustive evaluation)."""
        u = self.select(ctx)
        return [] if u is None else [(u, 1.0)]


# --- gain estimators -------------------------------------------------------

class GainEstimator:
    """Estimates ``Delta(u | x, psi)`` for inactive nodes."""

    def gains(self, ctx: SelectionContext, nodes: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ExactGain(GainEstimator):
    """Exhaustive enumeration; tiny instances only."""

    def gains(self, ctx, nodes):
        from .oracle import exact_marginal_gain

        x = ctx.x
        return np.array([exact_marginal_gain(ctx.inst, x, ctx.psi, int(u)) for u in nodes])


class MCGain(GainEstimator):
    """``beta_u`` times a Monte-Carlo single-seed spread on the residual graph."""

    def __init__(self, n_sims: int = 300):
        self.n_sims = n_sims

    def gains(self, ctx, nodes):
        res = ctx.residual
        local = np.searchsorted(res.origin, nodes)
        spreads = _kernels.single_seed_spreads(
            res.out_ptr, res.out_edges, res.dst, res.prob, res.n,
            local.astype(np.int64), self.n_sims, kernel_seed(ctx.omega),
        )
        return ctx.inst.beta[nodes] * spreads


class RISGain(GainEstimator):
    """``beta_u * n' * F_R({u})`` over a fixed number of RR sets of the residual graph."""

    def __init__(self, theta: int = 10000):
        self.theta = theta

    def gains(self, ctx, nodes):
        res = ctx.residual
        coll = sample_rr_collection(res, self.theta, ctx.omega)
        cover = coll.counts(ctx.inst.n)[nodes] / coll.theta
        return ctx.inst.beta[nodes] * res.n * cover


# --- selectors --------------------------------------------------------------

class AdaptiveGreedySelector(NodeSelector):
    name = "adaptive_greedy"

    def __init__(self, estimator: GainEstimator):
        self.estimator = estimator

    def select(self, ctx):
        nodes = ctx.feasible()
        if len(nodes) == 0:
            return None
        costs = ctx.next_costs(nodes)
        scores = self.estimator.gains(ctx, nodes) / costs
        return pick_best(nodes, scores, costs)


def adaptive_greedy_selector(estimator: GainEstimator) -> AdaptiveGreedySelector:
    return AdaptiveGreedySelector(estimator)


class SampledAdaptiveGreedySelector(NodeSelector):
    name = "sampled_adaptive_greedy"

    def __init__(self, eps: float = 0.5):
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        self.eps = eps

    def select(self, ctx):
        if len(ctx.feasible()) == 0:
            return None
        return generalized_epic(ctx.residual, ctx.inst, ctx.x, self.eps, ctx.omega)

    def choices(self, ctx):
        raise NotImplementedError("sampled selector has no enumerable distribution")


def sampled_adaptive_greedy_selector(eps: float = 0.5) -> SampledAdaptiveGreedySelector:
    return SampledAdaptiveGreedySelector(eps)


HEURISTICS = ("random", "max_degree", "max_prob", "max_degree_prob")


class HeuristicSelector(NodeSelector):
    """Random / MaxDegree / MaxProb / MaxDegreeProb node choice.

    Degrees are out-degrees in the original graph. Ties go to the lowest id.
    """

    def __init__(self, kind: str):
        if kind not in HEURISTICS:
            raise ValueError(f"unknown heuristic {kind!r}; expected one of {HEURISTICS}")
        self.kind = kind
        self.name = kind

    def _scores(self, ctx, nodes):
        inst = ctx.inst
        deg = inst.graph.out_degree()[nodes]
        num = {
            "max_degree": deg,
            "max_prob": inst.beta[nodes],
            "max_degree_prob": inst.beta[nodes] * deg,
        }[self.kind]
        return num / ctx.next_costs(nodes)

    def select(self, ctx):
        nodes = ctx.feasible()
        if len(nodes) == 0:
            return None
        if self.kind == "random":
            return int(nodes[ctx.kappa.integers(len(nodes))])
        return int(nodes[np.argmax(self._scores(ctx, nodes))])

    def choices(self, ctx):
        nodes = ctx.feasible()
        if self.kind == "random":
            return [(int(u), 1.0 / len(nodes)) for u in nodes]
        return super().choices(ctx)


def heuristic_selector(kind: str) -> HeuristicSelector:
    return HeuristicSelector(kind)


# --- execution --------------------------------------------------------------

class TrialRecord(NamedTuple):
    node: int
    index: int
    cost: float
    outcome: int
    spread: int


@dataclass
class PolicyTrace:
    trials: list = field(default_factory=list)
    x: np.ndarray | None = None
    psi: PartialRealization | None = None
    spread: int = 0
    cost: float = 0.0
    iterations: int = 0
    stop: str = ""
    seeds: dict = field(default_factory=dict)

    def to_text(self) -> str:
        """One trial per line: node, trial index, cost, outcome, cumulative spread."""
        lines = [f"{t.node} {t.index} {t.cost!r} {t.outcome} {t.spread}" for t in self.trials]
        lines.append(f"# spread={self.spread} cost={self.cost!r} iterations={self.iterations} stop={self.stop}")
        return "\n".join(lines) + "\n"


def run_adaptive_policy(selector: NodeSelector, inst: Instance, oracle, streams: Streams) -> PolicyTrace:
    """Run one adaptive policy against a hidden realization until the budget
    is exhausted, the gate stops the run or no feasible node remains."""
    psi = PartialRealization.empty(inst)
    ctx = SelectionContext(inst, psi, streams.kappa, streams.omega)
    trace = PolicyTrace(psi=psi)
    x = np.zeros(inst.n, dtype=np.int64)
    spent = 0.0
    while spent < inst.k - EPS:
        u = selector.select(ctx)
        if u is None:
            trace.stop = "exhausted"
            break
        c = trial_cost(inst, u, int(x[u]) + 1)
        if not budget_gate(spent, inst.k, c, streams.kappa):
            trace.stop = "gate"
            break
        x[u] += 1
        spent += c
        outcome = oracle.trial_outcome(u, int(x[u]))
        psi.record_trial(u, outcome)
        if outcome == 1:
            observe_diffusion(oracle, psi, u)
        trace.trials.append(TrialRecord(u, int(x[u]), c, outcome, psi.n_active))
    else:
        trace.stop = "budget"
    trace.x = x
    trace.spread = psi.n_active
    trace.cost = spent
    trace.iterations = len(trace.trials)
    return trace


def execute_seeding_vector(inst: Instance, x, oracle) -> PolicyTrace:
    """Execute a fixed (non-adaptive) seeding vector against a realization.

    All planned trials are paid for; the realized spread is that of the nodes
    with at least one successful trial.
    """
    x = np.asarray(x, dtype=np.int64)
    psi = PartialRealization.empty(inst)
    trace = PolicyTrace(psi=psi, x=x.copy())
    succeeded = []
    spent = 0.0
    for u in range(inst.n):
        for i in range(1, int(x[u]) + 1):
            c = trial_cost(inst, u, i)
            spent += c
            outcome = oracle.trial_outcome(u, i)
            psi.record_trial(u, outcome)
            if outcome == 1 and u not in succeeded:
                succeeded.append(u)
            trace.trials.append(TrialRecord(u, i, c, outcome, 0))
    for u in succeeded:
        if not psi.active[u]:
            observe_diffusion(oracle, psi, u)
    trace.spread = psi.n_active
    trace.cost = spent
    trace.iterations = len(trace.trials)
    trace.stop = "fixed"
    return trace


# --- non-adaptive greedy ----------------------------------------------------

class MuEvaluator:
    def marginals(self, inst: Instance, x: np.ndarray, nodes: np.ndarray, rng) -> np.ndarray:
        """``mu(x + e_u) - mu(x)`` for each ``u`` in ``nodes``."""
        raise NotImplementedError


class ExactMu(MuEvaluator):
    def marginals(self, inst, x, nodes, rng):
        from .oracle import exact_mu

        base = exact_mu(inst, x)
        out = []
        for u in nodes:
            y = x.copy()
            y[u] += 1
            out.append(exact_mu(inst, y) - base)
        return np.array(out)


class MCMu(MuEvaluator):
    """Monte-Carlo ``mu`` with common random numbers across the candidates of
    one step (equivalent to simulating the constructed graph)."""

    def __init__(self, n_sims: int = 300):
        self.n_sims = n_sims

    def _mu(self, inst, x, seed):
        g = inst.graph
        q = 1.0 - (1.0 - inst.beta) ** x
        if not q.any():
            return 0.0
        return float(_kernels.cascade_sizes(g.out_ptr, g.out_edges, g.dst, g.prob, g.n, q, self.n_sims, seed).mean())

    def marginals(self, inst, x, nodes, rng):
        seed = kernel_seed(rng)
        base = self._mu(inst, x, seed)
        out = np.empty(len(nodes))
        for j, u in enumerate(nodes):
            x[u] += 1
            out[j] = self._mu(inst, x, seed) - base
            x[u] -= 1
        return out


def _greedy_lattice(inst: Instance, gains_fn, rng, on_pick=None) -> np.ndarray:
    x = np.zeros(inst.n, dtype=np.int64)
    spent = 0.0
    while spent < inst.k - EPS:
        nodes = np.flatnonzero(x < inst.b)
        if len(nodes) == 0:
            break
        costs = inst.cost_table[nodes, x[nodes]]
        u = pick_best(nodes, gains_fn(x, nodes) / costs, costs)
        c = trial_cost(inst, u, int(x[u]) + 1)
        if not budget_gate(spent, inst.k, c, rng):
            break
        x[u] += 1
        spent += c
        if on_pick is not None:
            on_pick(u)
    return x


def greedy_nonadaptive(inst: Instance, evaluator: MuEvaluator, streams: Streams) -> np.ndarray:
    """Cost-effective lattice greedy on ``mu`` with the randomized last trial."""
    return _greedy_lattice(inst, lambda x, nodes: evaluator.marginals(inst, x, nodes, streams.omega),
                           streams.kappa)


def lattice_marginals(coll, survival: np.ndarray, beta: np.ndarray, size: int) -> np.ndarray:
    """``F(x + e_u) - F(x)`` for every node given per-set survival products."""
    per_node = np.bincount(coll.members, weights=survival[coll.set_ids()], minlength=size)
    return beta * per_node / coll.theta


def sampled_greedy_nonadaptive(inst: Instance, theta: int, streams: Streams, coll=None) -> np.ndarray:
    """Lattice greedy on the RR coverage estimator of ``mu``.

    A collection may be passed in to share RR sets with another procedure.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    if coll is None:
        coll = sample_rr_collection(inst.graph, theta, streams.omega)
    survival = np.ones(coll.theta)
    # sets containing each node, for updating survival after a pick
    order = np.argsort(coll.members, kind="stable")
    ptr = np.zeros(inst.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(coll.members, minlength=inst.n), out=ptr[1:])
    owners = coll.set_ids()[order]

    def gains(x, nodes):
        return lattice_marginals(coll, survival, inst.beta, inst.n)[nodes]

    def on_pick(u):
        survival[owners[ptr[u]:ptr[u + 1]]] *= 1.0 - inst.beta[u]

    return _greedy_lattice(inst, gains, streams.kappa, on_pick)


def seeding_cost(inst: Instance, x: Sequence[int]) -> float:
    return vector_cost(inst, x)
