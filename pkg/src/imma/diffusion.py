"""Independent cascade diffusion: exact spread on a fixed realization,
Monte-Carlo estimators, the constructed-graph reduction and the observation
step used by adaptive policies."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels
from .graph import Graph, Instance, check_seeding_vector
from .realization import PartialRealization


class Estimate(NamedTuple):
    mean: float
    stderr: float
    n: int


def _estimate(samples: np.ndarray) -> Estimate:
    n = len(samples)
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return Estimate(mean, stderr, n)


def kernel_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def spread(g: Graph, live, seeds: Iterable[int]) -> int:
    """Number of nodes reachable from ``seeds`` through live edges (seeds included)."""
    live = np.asarray(live)
    seen = np.zeros(g.n, dtype=bool)
    stack = []
    for s in seeds:
        if not seen[s]:
            seen[s] = True
            stack.append(int(s))
    while stack:
        v = stack.pop()
        for e in g.out_edge_ids(v):
            w = g.dst[e]
            if live[e] and not seen[w]:
                seen[w] = True
                stack.append(int(w))
    return int(seen.sum())


def mc_sigma(g: Graph, seeds: Iterable[int], n_sims: int, rng: np.random.Generator) -> Estimate:
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    seed_prob = np.zeros(g.n)
    seed_prob[list(seeds)] = 1.0
    if not seed_prob.any():
        return Estimate(0.0, 0.0, n_sims)
    sizes = _kernels.cascade_sizes(
        g.out_ptr, g.out_edges, g.dst, g.prob, g.n, seed_prob, n_sims, kernel_seed(rng)
    )
    return _estimate(sizes.astype(np.float64))


def seed_probabilities(inst: Instance, x) -> np.ndarray:
    """Probability that each node ends up an active seed under ``x`` trials."""
    x = check_seeding_vector(inst, x)
    return 1.0 - (1.0 - inst.beta) ** x


@dataclass(frozen=True, eq=False)
class ConstructedGraph:
    graph: Graph
    virtual_seeds: np.ndarray
    n_original: int


def constructed_graph(inst: Instance, x) -> ConstructedGraph:
    """Original graph plus one virtual node per seeded node.

    Virtual node ``n + j`` points at the ``j``-th node with ``x(u) > 0``
    through an edge of probability ``1 - (1 - beta_u)**x(u)``; nodes with
    ``x(u) = 0`` get no virtual edge (its probability would be zero).
    """
    g = inst.graph
    q = seed_probabilities(inst, x)
    targets = np.flatnonzero(q > 0)
    virtual = g.n + np.arange(len(targets))
    big = Graph(
        g.n + len(targets),
        np.concatenate([g.src, virtual]),
        np.concatenate([g.dst, targets]),
        np.concatenate([g.prob, q[targets]]),
    )
    return ConstructedGraph(big, virtual, g.n)


def mc_mu_constructed(inst: Instance, x, n_sims: int, rng: np.random.Generator) -> Estimate:
    """``mu(x)`` as ``sigma(virtual seeds) - |virtual seeds|`` on the constructed graph."""
    cg = constructed_graph(inst, x)
    if len(cg.virtual_seeds) == 0:
        return Estimate(0.0, 0.0, n_sims)
    est = mc_sigma(cg.graph, cg.virtual_seeds, n_sims, rng)
    return Estimate(est.mean - len(cg.virtual_seeds), est.stderr, est.n)


def mc_mu(inst: Instance, x, n_sims: int, rng: np.random.Generator) -> Estimate:
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    q = seed_probabilities(inst, x)
    if not q.any():
        return Estimate(0.0, 0.0, n_sims)
    g = inst.graph
    sizes = _kernels.cascade_sizes(g.out_ptr, g.out_edges, g.dst, g.prob, g.n, q, n_sims, kernel_seed(rng))
    return _estimate(sizes.astype(np.float64))


class DiffusionOutcome(NamedTuple):
    activated: list[int]
    observations: list[tuple[int, int]]


def observe_diffusion(oracle, psi: PartialRealization, seed: int) -> DiffusionOutcome:
    """Reveal the full-adoption feedback of ``seed`` becoming active.

    Every node reached from ``seed`` through live edges, the seed included,
    has all of its out-edges queried and recorded in ``psi``. Inactive heads of
    live edges become active. Nodes are processed in ascending id order.
    """
    g = oracle.inst.graph
    if psi.active[seed]:
        raise ValueError(f"node {seed} is already active")
    if not psi.seeded(seed):
        raise ValueError(f"node {seed} has no recorded successful trial")
    psi.activate(seed)
    activated = [seed]
    observations = []
    heap = [seed]
    while heap:
        v = heapq.heappop(heap)
        for e in g.out_edge_ids(v):
            e = int(e)
            state = oracle.edge_state(e)
            psi.record_edge(e, state)
            observations.append((e, state))
            w = int(g.dst[e])
            if state == 1 and not psi.active[w]:
                psi.activate(w)
                activated.append(w)
                heapq.heappush(heap, w)
    return DiffusionOutcome(activated, observations)
