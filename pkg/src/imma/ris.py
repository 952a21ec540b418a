"""Reverse reachable (RR) set sampling and the estimators built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _kernels
from .diffusion import kernel_seed
from .graph import Graph, Instance, trial_cost


@dataclass(frozen=True)
class RRSet:
    root: int
    members: frozenset


class RRCollection:
    """Multiset of RR sets stored as one flat member array plus offsets.

    Member ids are expressed in the id space of the *original* graph (the
    ``origin`` mapping of a residual graph is applied on creation), while
    ``n`` is the node count of the graph the sets were sampled from, i.e. the
    scale factor that turns a coverage fraction into a spread estimate.
    """

    def __init__(self, members: np.ndarray, offsets: np.ndarray, n: int):
        self.members = np.asarray(members, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.n = n
        self._counts = None
        self._set_ids = None

    @classmethod
    def from_sets(cls, sets: Iterable[Iterable[int]], n: int) -> "RRCollection":
        sets = [list(s) for s in sets]
        offsets = np.zeros(len(sets) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([len(s) for s in sets])
        members = np.array([v for s in sets for v in s], dtype=np.int64)
        return cls(members, offsets, n)

    @property
    def theta(self) -> int:
        return len(self.offsets) - 1

    def __len__(self):
        return self.theta

    def __getitem__(self, j: int) -> RRSet:
        chunk = self.members[self.offsets[j]:self.offsets[j + 1]]
        return RRSet(int(chunk[0]), frozenset(int(v) for v in chunk))

    def __iter__(self):
        return (self[j] for j in range(self.theta))

    def set_ids(self) -> np.ndarray:
        """Index of the owning set for every entry of ``members``."""
        if self._set_ids is None:
            self._set_ids = np.repeat(np.arange(self.theta), np.diff(self.offsets))
        return self._set_ids

    def counts(self, size: int) -> np.ndarray:
        """Number of sets containing each node id ``0..size-1``."""
        if self._counts is None or len(self._counts) < size:
            self._counts = np.bincount(self.members, minlength=size)
        return self._counts[:size]

    def extend(self, other: "RRCollection") -> None:
        if other.n != self.n:
            raise ValueError("collections sampled from graphs of different size")
        shift = self.offsets[-1]
        self.members = np.concatenate([self.members, other.members])
        self.offsets = np.concatenate([self.offsets, other.offsets[1:] + shift])
        self._counts = None
        self._set_ids = None


def sample_rr_collection(g: Graph, count: int, rng: np.random.Generator) -> RRCollection:
    """``count`` independent RR sets of ``g``, ids mapped through ``g.origin``."""
    if g.n == 0:
        raise ValueError("cannot sample RR sets from an empty graph")
    members, offsets = _kernels.rr_sets(
        g.in_ptr, g.in_edges, g.src, g.prob, g.n, int(count), kernel_seed(rng)
    )
    if g.origin is not None:
        members = g.origin[members]
    return RRCollection(members, offsets, g.n)


def sample_rr_set(g: Graph, rng: np.random.Generator) -> RRSet:
    return sample_rr_collection(g, 1, rng)[0]


def coverage_fraction(coll: RRCollection, seeds: Iterable[int]) -> float:
    """Fraction of RR sets that intersect ``seeds``."""
    if coll.theta < 1:
        raise ValueError("empty RR collection")
    seeds = np.fromiter(seeds, dtype=np.int64)
    if len(seeds) == 0:
        return 0.0
    hit = np.isin(coll.members, seeds)
    covered = np.zeros(coll.theta, dtype=bool)
    covered[coll.set_ids()[hit]] = True
    return float(covered.mean())


def set_survival(coll: RRCollection, x, beta) -> np.ndarray:
    """Per set, ``prod_{u in R} (1 - beta_u)**x(u)``: chance no member is seeded."""
    x = np.asarray(x)
    beta = np.asarray(beta, dtype=np.float64)
    fail = (1.0 - beta) ** x
    log_fail = np.log(np.maximum(fail, 1e-300))
    log_fail[fail == 0.0] = -np.inf
    per_set = np.zeros(coll.theta)
    np.add.at(per_set, coll.set_ids(), log_fail[coll.members])
    return np.exp(per_set)


def lattice_coverage(coll: RRCollection, x, beta) -> float:
    """``(theta - sum_R prod_{u in R}(1-beta_u)**x(u)) / theta``."""
    if coll.theta < 1:
        raise ValueError("empty RR collection")
    return float(1.0 - set_survival(coll, x, beta).mean())


def unit_gain_estimate(coll: RRCollection, u: int, inst: Instance, x) -> float:
    """``beta_u * F({u}) / c(<u, x(u)+1>)``.

    Multiplying by ``coll.n`` gives an estimate of the marginal gain per unit
    cost of one more trial on ``u``.
    """
    if x[u] >= inst.b[u]:
        raise ValueError(f"node {u} has no trials left")
    f = coll.counts(inst.n)[u] / coll.theta
    return float(inst.beta[u] * f / trial_cost(inst, u, int(x[u]) + 1))


@dataclass(frozen=True)
class EpicParameters:
    delta: float
    eps_bar: float
    eps_hat: float
    i_max: int
    a: float
    theta0: int


def epic_parameters(n_residual: int, eps: float) -> EpicParameters:
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if n_residual < 1:
        raise ValueError("residual graph is empty")
    n = n_residual
    delta = 0.01 * eps / n
    eps_bar = (eps - delta * n) / (1.0 - delta * n)
    eps_hat = eps_bar / (1.0 - eps_bar)
    i_max = math.ceil(math.log2((2.0 + 2.0 * eps_hat / 3.0) * n / eps_hat**2)) + 1
    a = math.log(2.0 * i_max / delta)
    theta0 = max(1, math.ceil(math.log(2.0 / delta) + math.log(n)))
    return EpicParameters(delta, eps_bar, eps_hat, i_max, a, theta0)


def lower_bound(h: float, theta: int, a: float) -> float:
    """Concentration lower bound on a mean estimated from ``theta`` samples."""
    return (math.sqrt(h + 2.0 * a / (9.0 * theta)) - math.sqrt(a / (2.0 * theta))) ** 2 - a / (18.0 * theta)


@dataclass
class EpicResult:
    node: int
    rounds: int
    upper: float
    lower: float
    theta: int
    scores: dict


def feasible_nodes(residual: Graph, inst: Instance, x) -> np.ndarray:
    """Original ids of residual nodes with trials left, ascending."""
    nodes = residual.origin if residual.origin is not None else np.arange(residual.n)
    nodes = np.asarray(nodes, dtype=np.int64)
    return nodes[np.asarray(x)[nodes] < inst.b[nodes]]


def _cheapest(inst: Instance, x, nodes: np.ndarray) -> int:
    costs = inst.cost_table[nodes, np.asarray(x)[nodes]]
    return int(nodes[np.argmin(costs)])


def generalized_epic_run(residual: Graph, inst: Instance, x, eps: float,
                         rng: np.random.Generator) -> EpicResult:
    """Pick a node maximizing ``beta_u * F(u) / c(next trial)`` with adaptive
    sample sizes; returns the choice and the bounds at the round of return."""
    x = np.asarray(x)
    params = epic_parameters(residual.n, eps)
    feasible = feasible_nodes(residual, inst, x)
    if len(feasible) == 0:
        raise ValueError("no feasible node in the residual graph")
    weight = inst.beta[feasible] / inst.cost_table[feasible, x[feasible]]
    r1 = sample_rr_collection(residual, params.theta0, rng)
    r2 = sample_rr_collection(residual, params.theta0, rng)
    for i in range(1, params.i_max + 1):
        theta = r1.theta
        h1 = weight * r1.counts(inst.n)[feasible] / theta
        best = int(np.argmax(h1))
        node = int(feasible[best])
        upper = float(h1[best])
        h2 = float(weight[best] * r2.counts(inst.n)[node] / r2.theta)
        lower = lower_bound(h2, r2.theta, params.a)
        scores = dict(zip(feasible.tolist(), h1.tolist()))
        if upper == 0.0:
            return EpicResult(_cheapest(inst, x, feasible), i, upper, lower, theta, scores)
        if lower / upper >= 1.0 - params.eps_bar or i == params.i_max:
            return EpicResult(node, i, upper, lower, theta, scores)
        r1.extend(sample_rr_collection(residual, r1.theta, rng))
        r2.extend(sample_rr_collection(residual, r2.theta, rng))
    raise AssertionError("unreachable")


def generalized_epic(residual: Graph, inst: Instance, x, eps: float, rng: np.random.Generator) -> int:
    return generalized_epic_run(residual, inst, x, eps, rng).node
