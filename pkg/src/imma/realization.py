"""Graph realizations, full/partial realizations and the lazy realization oracle.

A partial realization records what a policy has observed so far: the outcome
of every executed activation trial (always a prefix ``1..x(u)`` per node) and
the state of every edge revealed by full-adoption feedback. Unknown entries
are encoded as ``-1`` (the ``?`` state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, Instance

UNKNOWN = -1


@dataclass(frozen=True, eq=False)
class GraphRealization:
    """Live (1) / blocked (0) state for every edge, indexed like ``Graph`` edges."""

    live: np.ndarray

    def __post_init__(self):
        live = np.ascontiguousarray(self.live, dtype=np.int8)
        if np.any((live != 0) & (live != 1)):
            raise ValueError("graph realization entries must be 0 or 1")
        live.setflags(write=False)
        object.__setattr__(self, "live", live)


@dataclass(frozen=True, eq=False)
class FullRealization:
    """Every trial outcome and every edge state resolved.

    ``trials[u]`` is a tuple of length ``b(u)`` over {0, 1}.
    """

    trials: tuple
    edges: GraphRealization

    def graph_realization(self) -> GraphRealization:
        return self.edges


def sample_graph_realization(g: Graph, rng: np.random.Generator) -> GraphRealization:
    return GraphRealization((rng.random(g.m) < g.prob).astype(np.int8))


def graph_realization_probability(g: Graph, gr: GraphRealization) -> float:
    live = gr.live.astype(bool)
    if len(live) != g.m:
        raise ValueError("realization does not match the graph's edge count")
    return float(np.prod(np.where(live, g.prob, 1.0 - g.prob)))


def full_realization_probability(inst: Instance, phi: FullRealization) -> float:
    prob = graph_realization_probability(inst.graph, phi.edges)
    for u, outcomes in enumerate(phi.trials):
        if len(outcomes) != inst.b[u]:
            raise ValueError(f"node {u}: expected {inst.b[u]} trial outcomes")
        beta = inst.beta[u]
        for o in outcomes:
            prob *= beta if o == 1 else 1.0 - beta
    return prob


class PartialRealization:
    """Observed trial outcomes, observed edge states and the active node set.

    The active set is maintained incrementally by the code that reveals
    diffusion (see :func:`imma.diffusion.observe_diffusion`); recording a
    successful trial alone does not activate the node.
    """

    __slots__ = ("trials", "edges", "active", "n_active")

    def __init__(self, n: int, m: int):
        self.trials: list[list[int]] = [[] for _ in range(n)]
        self.edges = np.full(m, UNKNOWN, dtype=np.int8)
        self.active = np.zeros(n, dtype=bool)
        self.n_active = 0

    @classmethod
    def empty(cls, inst: Instance) -> "PartialRealization":
        return cls(inst.n, inst.graph.m)

    def copy(self) -> "PartialRealization":
        other = PartialRealization.__new__(PartialRealization)
        other.trials = [list(t) for t in self.trials]
        other.edges = self.edges.copy()
        other.active = self.active.copy()
        other.n_active = self.n_active
        return other

    @property
    def n(self) -> int:
        return len(self.trials)

    def x(self) -> np.ndarray:
        """Seeding vector generating this partial realization."""
        return np.array([len(t) for t in self.trials], dtype=np.int64)

    def dom(self) -> set[tuple[int, int]]:
        return {(u, i) for u, t in enumerate(self.trials) for i in range(1, len(t) + 1)}

    def observed_edges(self) -> dict[int, int]:
        return {int(e): int(s) for e, s in enumerate(self.edges) if s != UNKNOWN}

    def seeded(self, u: int) -> bool:
        return 1 in self.trials[u]

    def record_trial(self, u: int, outcome: int) -> int:
        """Append the outcome of the next trial on ``u``; returns its index."""
        self.trials[u].append(int(outcome))
        return len(self.trials[u])

    def record_edge(self, e: int, state: int) -> None:
        prev = self.edges[e]
        if prev != UNKNOWN and prev != state:
            raise ValueError(f"edge {e} already observed as {prev}")
        self.edges[e] = state

    def activate(self, u: int) -> None:
        if not self.active[u]:
            self.active[u] = True
            self.n_active += 1

    def key(self) -> tuple:
        """Hashable canonical form."""
        return tuple(tuple(t) for t in self.trials), self.edges.tobytes()

    def __eq__(self, other):
        return isinstance(other, PartialRealization) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def dump(self, g: Graph | None = None) -> str:
        """Text table of trials and edges, for debugging and golden files."""
        sym = {UNKNOWN: "?", 0: "0", 1: "1"}
        lines = ["# trials"]
        for u, t in enumerate(self.trials):
            flag = " active" if self.active[u] else ""
            lines.append(f"{u}: {''.join(str(o) for o in t) or '-'}{flag}")
        lines.append("# edges")
        for e, s in enumerate(self.edges):
            ends = f" {int(g.src[e])}->{int(g.dst[e])}" if g is not None else ""
            lines.append(f"{e}{ends}: {sym[int(s)]}")
        return "\n".join(lines) + "\n"


def is_consistent(phi: FullRealization, psi: PartialRealization) -> bool:
    for u, observed in enumerate(psi.trials):
        if len(observed) > len(phi.trials[u]):
            return False
        if any(o != phi.trials[u][i] for i, o in enumerate(observed)):
            return False
    seen = psi.edges != UNKNOWN
    return bool(np.all(psi.edges[seen] == phi.edges.live[seen]))


def is_subrealization(psi: PartialRealization, other: PartialRealization) -> bool:
    """``psi`` is contained in ``other`` and they agree where both are observed."""
    for a, b in zip(psi.trials, other.trials):
        if len(a) > len(b) or a != b[:len(a)]:
            return False
    seen = psi.edges != UNKNOWN
    return bool(np.all(other.edges[seen] == psi.edges[seen]))


def residual_graph(inst: Instance, psi: PartialRealization) -> Graph:
    """Subgraph induced by the nodes that are inactive under ``psi``."""
    return inst.graph.induced_subgraph(~psi.active)


class RealizationOracle:
    """Answers trial and edge queries for one hidden full realization.

    One uniform number per trial slot and per edge is drawn up front from the
    generator; a state is resolved by thresholding on first query and then
    memoized. Because the uniforms are keyed by item rather than by query
    order, two oracles built from equal seeds encode the same realization no
    matter which policy queries them.
    """

    def __init__(self, inst: Instance, rng: np.random.Generator):
        self.inst = inst
        bmax = inst.cost_table.shape[1]
        self._trial_u = rng.random((inst.n, bmax))
        self._edge_u = rng.random(inst.graph.m)
        self._trials = np.full((inst.n, bmax), UNKNOWN, dtype=np.int8)
        self._edges = np.full(inst.graph.m, UNKNOWN, dtype=np.int8)

    def trial_outcome(self, u: int, i: int) -> int:
        if not 1 <= i <= self.inst.b[u]:
            raise IndexError(f"trial {i} outside 1..{self.inst.b[u]} for node {u}")
        if self._trials[u, i - 1] == UNKNOWN:
            self._trials[u, i - 1] = int(self._trial_u[u, i - 1] < self.inst.beta[u])
        return int(self._trials[u, i - 1])

    def edge_state(self, e: int) -> int:
        if self._edges[e] == UNKNOWN:
            self._edges[e] = int(self._edge_u[e] < self.inst.graph.prob[e])
        return int(self._edges[e])

    def materialize(self) -> FullRealization:
        """Resolve every item and return the full realization."""
        trials = tuple(
            tuple(self.trial_outcome(u, i) for i in range(1, self.inst.b[u] + 1))
            for u in range(self.inst.n)
        )
        edges = np.array([self.edge_state(e) for e in range(self.inst.graph.m)], dtype=np.int8)
        return FullRealization(trials, GraphRealization(edges))


def lazy_realization_oracle(inst: Instance, rng: np.random.Generator) -> RealizationOracle:
    return RealizationOracle(inst, rng)


class FixedOracle:
    """Oracle over an explicit full realization (tests and enumeration)."""

    def __init__(self, inst: Instance, phi: FullRealization):
        self.inst = inst
        self.phi = phi

    def trial_outcome(self, u: int, i: int) -> int:
        if not 1 <= i <= self.inst.b[u]:
            raise IndexError(f"trial {i} outside 1..{self.inst.b[u]} for node {u}")
        return int(self.phi.trials[u][i - 1])

    def edge_state(self, e: int) -> int:
        return int(self.phi.edges.live[e])

    def materialize(self) -> FullRealization:
        return self.phi
