"""Brute-force reference computations for tiny instances.

Everything here enumerates realizations, seed subsets or policy branches
exhaustively and is exponential in the instance size. The functions are kept
independent of the sampling code paths they are used to check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .graph import CostModel, Graph, Instance, build_instance, check_seeding_vector, trial_cost
from .realization import (
    UNKNOWN,
    FullRealization,
    GraphRealization,
    PartialRealization,
    is_subrealization,
    residual_graph,
)

TOL = 1e-9


class EnumerationCapError(ValueError):
    pass


class ConsistencyError(AssertionError):
    pass


def random_tiny_instance(rng: np.random.Generator, max_nodes: int = 3, max_edges: int = 4,
                         max_b: int = 2, k: float | None = None, varied_costs: bool = False) -> Instance:
    """Random instance small enough for every enumerator in this module.

    Edges are distinct ordered pairs without self loops. Probabilities and
    activation chances are drawn away from 0 and 1 so no branch is degenerate.
    With ``varied_costs`` every node gets its own nondecreasing cost table.
    """
    n = int(rng.integers(1, max_nodes + 1))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    m = int(rng.integers(0, min(max_edges, len(pairs)) + 1))
    chosen = sorted(rng.choice(len(pairs), size=m, replace=False).tolist()) if m else []
    src = np.array([pairs[j][0] for j in chosen], dtype=np.int64)
    dst = np.array([pairs[j][1] for j in chosen], dtype=np.int64)
    prob = rng.uniform(0.1, 0.9, size=m)
    g = Graph(n, src, dst, prob)
    beta = rng.uniform(0.1, 1.0, size=n)
    b = rng.integers(1, max_b + 1, size=n)
    if varied_costs:
        table = {(u, i + 1): float(c) for u in range(n)
                 for i, c in enumerate(np.sort(rng.uniform(0.3, 2.0, int(b[u]))))}
        cost = CostModel(table=table)
    else:
        cost = CostModel(1.0, float(rng.choice([1.0, 1.2, 1.5])))
    if k is None:
        k = float(rng.choice([0.5, 1.0, 1.7, 2.5, 4.0]))
    return build_instance(g, beta, b, cost, k)


def _reach(g: Graph, live, seeds: Iterable[int]) -> set[int]:
    seen = set(int(s) for s in seeds)
    frontier = list(seen)
    while frontier:
        v = frontier.pop()
        for e in range(g.m):
            if g.src[e] == v and live[e] and int(g.dst[e]) not in seen:
                seen.add(int(g.dst[e]))
                frontier.append(int(g.dst[e]))
    return seen


def graph_realizations(g: Graph, max_edges: int = 20):
    """Yield ``(live, probability)`` for all ``2**m`` graph realizations."""
    if g.m > max_edges:
        raise EnumerationCapError(f"{g.m} edges exceeds the enumeration cap of {max_edges}")
    for bits in itertools.product((0, 1), repeat=g.m):
        prob = 1.0
        for e, s in enumerate(bits):
            prob *= g.prob[e] if s else 1.0 - g.prob[e]
        yield bits, prob


def full_realizations(inst: Instance, max_items: int = 16):
    """Yield every full realization with its probability."""
    slots = int(inst.b.sum())
    if slots + inst.graph.m > max_items:
        raise EnumerationCapError("too many trial and edge slots to enumerate")
    for trial_bits in itertools.product((0, 1), repeat=slots):
        trials, pos, p_trials = [], 0, 1.0
        for u in range(inst.n):
            chunk = trial_bits[pos:pos + inst.b[u]]
            pos += inst.b[u]
            trials.append(tuple(chunk))
            for o in chunk:
                p_trials *= inst.beta[u] if o else 1.0 - inst.beta[u]
        for live, p_edges in graph_realizations(inst.graph, max_items):
            phi = FullRealization(tuple(trials), GraphRealization(np.array(live, dtype=np.int8)))
            yield phi, p_trials * p_edges


def exact_sigma(g: Graph, seeds: Iterable[int], max_edges: int = 20) -> float:
    seeds = list(seeds)
    if not seeds:
        return 0.0
    return sum(p * len(_reach(g, live, seeds)) for live, p in graph_realizations(g, max_edges))


def exact_mu(inst: Instance, x, max_edges: int = 20, max_support: int = 12) -> float:
    """Expected spread of a seeding vector: sum over seed subsets of the
    support weighted by their probability, times the exact spread."""
    x = check_seeding_vector(inst, x)
    support = np.flatnonzero(x > 0)
    if len(support) > max_support:
        raise EnumerationCapError(f"support of size {len(support)} exceeds cap {max_support}")
    q = 1.0 - (1.0 - inst.beta) ** x
    total = 0.0
    for mask in itertools.product((0, 1), repeat=len(support)):
        prob = 1.0
        for take, u in zip(mask, support):
            prob *= q[u] if take else 1.0 - q[u]
        if prob == 0.0:
            continue
        seeds = [int(u) for take, u in zip(mask, support) if take]
        total += prob * exact_sigma(inst.graph, seeds, max_edges)
    return total


def _gain_by_enumeration(inst: Instance, psi: PartialRealization, u: int, max_edges: int) -> float:
    g = inst.graph
    unknown = np.flatnonzero(psi.edges == UNKNOWN)
    if len(unknown) > max_edges:
        raise EnumerationCapError("too many unobserved edges")
    seeds = [v for v in range(inst.n) if psi.seeded(v)]
    live = psi.edges.copy()
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(unknown)):
        prob = 1.0
        for e, s in zip(unknown, bits):
            live[e] = s
            prob *= g.prob[e] if s else 1.0 - g.prob[e]
        if prob == 0.0:
            continue
        before = _reach(g, live, seeds)
        after = _reach(g, live, seeds + [u])
        # the next trial on u succeeds with probability beta_u, independently
        total += prob * inst.beta[u] * (len(after) - len(before))
    return total


def exact_marginal_gain(inst: Instance, x, psi: PartialRealization, u: int,
                        max_edges: int = 20, check: bool = True) -> float:
    """Conditional expected gain of one more trial on ``u``.

    Computed by averaging ``f(x + e_u, phi) - f(x, phi)`` over every full
    realization consistent with ``psi`` and, independently, as ``beta_u``
    times the exact single-seed spread of ``u`` in the residual graph. The two
    must agree to ``1e-9``.
    """
    x = np.asarray(x)
    if not np.array_equal(x, psi.x()):
        raise ValueError("x does not match the trials recorded in psi")
    if x[u] >= inst.b[u]:
        raise ValueError(f"node {u} has no trials left")
    if psi.active[u]:
        return 0.0
    direct = _gain_by_enumeration(inst, psi, u, max_edges)
    if check:
        res = residual_graph(inst, psi)
        local = int(np.searchsorted(res.origin, u))
        via_residual = inst.beta[u] * exact_sigma(res, [local], max_edges)
        if abs(direct - via_residual) > TOL:
            raise ConsistencyError(
                f"gain of node {u}: enumeration {direct!r} vs residual spread {via_residual!r}"
            )
    return direct


# --- policy branch expansion -------------------------------------------------

def _diffusion_branches(g: Graph, psi: PartialRealization, seed: int):
    """All outcomes of ``seed`` becoming active, with their probabilities."""
    out: list[tuple[float, PartialRealization]] = []
    start = psi.copy()
    start.activate(seed)

    def rec(state: PartialRealization, queue: list[int], prob: float):
        while queue:
            v = queue[0]
            for e in g.out_edge_ids(v):
                e = int(e)
                if state.edges[e] != UNKNOWN:
                    continue
                p = float(g.prob[e])
                for s, q in ((1, p), (0, 1.0 - p)):
                    if q == 0.0:
                        continue
                    child = state.copy()
                    child.edges[e] = s
                    nxt = list(queue)
                    w = int(g.dst[e])
                    if s == 1 and not child.active[w]:
                        child.activate(w)
                        nxt = sorted(nxt + [w])
                    rec(child, nxt, prob * q)
                return
            queue = queue[1:]
        out.append((prob, state))

    rec(start, [seed], 1.0)
    return out


def trial_branches(inst: Instance, psi: PartialRealization, u: int):
    """Outcomes of executing the next trial on inactive node ``u``."""
    if psi.active[u]:
        raise ValueError(f"node {u} is already active")
    beta = float(inst.beta[u])
    branches = []
    if beta > 0.0:
        hit = psi.copy()
        hit.record_trial(u, 1)
        branches.extend((beta * q, s) for q, s in _diffusion_branches(inst.graph, hit, u))
    if beta < 1.0:
        miss = psi.copy()
        miss.record_trial(u, 0)
        branches.append((1.0 - beta, miss))
    return branches


def _candidates(inst: Instance, psi: PartialRealization) -> list[int]:
    x = psi.x()
    return [u for u in range(inst.n) if not psi.active[u] and x[u] < inst.b[u]]


def reachable_states(inst: Instance, max_states: int = 200_000) -> list[PartialRealization]:
    """Every partial realization some trial sequence can produce, including the empty one."""
    start = PartialRealization.empty(inst)
    seen = {start.key(): start}
    frontier = [start]
    while frontier:
        psi = frontier.pop()
        for u in _candidates(inst, psi):
            for prob, child in trial_branches(inst, psi, u):
                if prob > 0.0 and child.key() not in seen:
                    seen[child.key()] = child
                    frontier.append(child)
                    if len(seen) > max_states:
                        raise EnumerationCapError("too many reachable states")
    return sorted(seen.values(), key=lambda s: (int(s.x().sum()), s.key()))


def _check_policy_cap(inst: Instance, max_slots: int, max_edges: int) -> None:
    if int(inst.b.sum()) > max_slots or inst.graph.m > max_edges:
        raise EnumerationCapError(
            f"instance has {int(inst.b.sum())} trial slots and {inst.graph.m} edges; "
            f"caps are {max_slots} and {max_edges}"
        )


@dataclass(frozen=True)
class PolicyValue:
    value: float
    expected_cost: float
    mass: float


def exact_policy_value(inst: Instance, selector, max_slots: int = 4, max_edges: int = 4) -> PolicyValue:
    """Expected spread and cost of a policy over every realization branch and
    every selector and budget-gate coin flip."""
    from .policies import SelectionContext, gate_proceed_probability

    _check_policy_cap(inst, max_slots, max_edges)
    k = inst.k

    def rec(psi: PartialRealization, spent: float):
        # returns (value, cost, mass) conditioned on reaching psi
        if spent >= k - 1e-12:
            return 0.0, 0.0, 1.0
        picks = selector.choices(SelectionContext(inst, psi))
        if not picks:
            return 0.0, 0.0, 1.0
        value = cost = mass = 0.0
        for u, p_pick in picks:
            c = trial_cost(inst, u, len(psi.trials[u]) + 1)
            go = gate_proceed_probability(spent, k, c)
            mass += p_pick * (1.0 - go)
            if go == 0.0:
                continue
            for q, child in trial_branches(inst, psi, u):
                v, cc, mm = rec(child, spent + c)
                w = p_pick * go * q
                value += w * (child.n_active - psi.n_active + v)
                cost += w * (c + cc)
                mass += w * mm
        return value, cost, mass

    value, cost, mass = rec(PartialRealization.empty(inst), 0.0)
    return PolicyValue(value, cost, mass)


def optimal_policy_value(inst: Instance, max_slots: int = 4, max_edges: int = 4) -> float:
    """Best expected spread over all randomized policies whose expected cost is
    at most ``k`` under every realization.

    The decision tree of all histories is expanded; a randomized policy is
    represented by its realization plan (the probability of taking each action
    at each decision node along a consistent path), which makes both the
    objective and the per-realization cost constraints linear.
    """
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    _check_policy_cap(inst, max_slots, max_edges)
    k = inst.k
    # decision nodes: (psi, chance probability of reaching it, parent action var)
    nodes = []
    actions = []  # (node index, cost, expected immediate gain)
    eq_rows = []

    def expand(psi: PartialRealization, reach: float, parent_var):
        idx = len(nodes)
        nodes.append((psi, reach, parent_var))
        stop_var = len(actions)
        actions.append((idx, 0.0, 0.0))
        own = [stop_var]
        for u in _candidates(inst, psi):
            c = trial_cost(inst, u, len(psi.trials[u]) + 1)
            branches = trial_branches(inst, psi, u)
            gain = sum(q * (child.n_active - psi.n_active) for q, child in branches)
            var = len(actions)
            actions.append((idx, c, gain))
            own.append(var)
            for q, child in branches:
                expand(child, reach * q, var)
        eq_rows.append((own, parent_var))

    expand(PartialRealization.empty(inst), 1.0, None)
    n_var = len(actions)
    objective = np.zeros(n_var)
    for var, (idx, c, gain) in enumerate(actions):
        objective[var] = -nodes[idx][1] * gain

    rows, cols, vals = [], [], []
    b_eq = np.zeros(len(eq_rows))
    for r, (own, parent) in enumerate(eq_rows):
        for var in own:
            rows.append(r); cols.append(var); vals.append(1.0)
        if parent is None:
            b_eq[r] = 1.0
        else:
            rows.append(r); cols.append(parent); vals.append(-1.0)
    a_eq = coo_matrix((vals, (rows, cols)), shape=(len(eq_rows), n_var)).tocsr()

    ub_rows, ub_cols, ub_vals = [], [], []
    n_ub = 0
    for phi, p in full_realizations(inst, max_items=max_slots + max_edges):
        if p == 0.0:
            continue
        consistent = [i for i, (psi, _, _) in enumerate(nodes) if _consistent(phi, psi)]
        cset = set(consistent)
        for var, (idx, c, _) in enumerate(actions):
            if c > 0 and idx in cset:
                ub_rows.append(n_ub); ub_cols.append(var); ub_vals.append(c)
        n_ub += 1
    a_ub = coo_matrix((ub_vals, (ub_rows, ub_cols)), shape=(n_ub, n_var)).tocsr()
    res = linprog(objective, A_ub=a_ub, b_ub=np.full(n_ub, k), A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    return float(-res.fun)


def _consistent(phi: FullRealization, psi: PartialRealization) -> bool:
    for u, observed in enumerate(psi.trials):
        if tuple(observed) != tuple(phi.trials[u][:len(observed)]):
            return False
    seen = psi.edges != UNKNOWN
    return bool(np.all(psi.edges[seen] == phi.edges.live[seen]))


# --- property checkers --------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    u: int
    x: tuple
    state: str
    value: float
    other_x: tuple | None = None
    other_state: str | None = None
    other_value: float | None = None

    def to_text(self) -> str:
        s = f"{self.kind}: u={self.u} x={self.x} psi=[{self.state}] gain={self.value!r}"
        if self.other_x is not None:
            s += f" | y={self.other_x} psi'=[{self.other_state}] gain={self.other_value!r}"
        return s


def _state_text(psi: PartialRealization) -> str:
    trials = ",".join("".join(map(str, t)) or "-" for t in psi.trials)
    edges = "".join("?01"[s + 1] for s in psi.edges)
    return f"trials={trials} edges={edges}"


GainFn = Callable[[Instance, np.ndarray, PartialRealization, int], float]


def _default_gain(inst, x, psi, u):
    return exact_marginal_gain(inst, x, psi, u)


def _gain_table(inst: Instance, states, gain: GainFn) -> dict:
    table = {}
    for i, psi in enumerate(states):
        x = psi.x()
        for u in range(inst.n):
            if x[u] < inst.b[u]:
                table[i, u] = gain(inst, x, psi, u)
    return table


def check_adaptive_monotone(inst: Instance, gain: GainFn | None = None) -> list[Violation]:
    """Every conditional marginal gain over reachable states must be >= -1e-9."""
    gain = gain or _default_gain
    states = reachable_states(inst)
    report = []
    for (i, u), value in sorted(_gain_table(inst, states, gain).items()):
        if value < -TOL:
            psi = states[i]
            report.append(Violation("monotone", u, tuple(psi.x().tolist()), _state_text(psi), value))
    return report


def check_adaptive_dr_submodular(inst: Instance, gain: GainFn | None = None) -> list[Violation]:
    """Gains must not grow along the (x, psi) order: for every reachable
    ``psi`` contained in reachable ``psi'`` and every ``u`` with trials left
    under ``psi'``, ``gain(u | psi) >= gain(u | psi') - 1e-9``."""
    gain = gain or _default_gain
    states = reachable_states(inst)
    table = _gain_table(inst, states, gain)
    xs = [psi.x() for psi in states]
    report = []
    for i, small in enumerate(states):
        for j, big in enumerate(states):
            if i == j or np.any(xs[i] > xs[j]) or not is_subrealization(small, big):
                continue
            for u in range(inst.n):
                if (j, u) not in table:
                    continue
                if table[i, u] < table[j, u] - TOL:
                    report.append(Violation(
                        "dr-submodular", u, tuple(xs[i].tolist()), _state_text(small), table[i, u],
                        tuple(xs[j].tolist()), _state_text(big), table[j, u],
                    ))
    return report


def report_text(report: list[Violation]) -> str:
    if not report:
        return "no violations\n"
    return "\n".join(v.to_text() for v in report) + "\n"
