"""Probabilistic directed graphs, problem instances and trial costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphParseError(ValueError):
    pass


class InstanceError(ValueError):
    pass


def _csr(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    # stable sort keeps edge-id order inside each bucket
    order = np.argsort(keys, kind="stable").astype(np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=ptr[1:])
    return ptr, order


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph with one diffusion probability per edge.

    Edges are kept in input order and addressed by their index. ``prob`` may
    hold NaN for edges whose probability has not been assigned yet (see
    :func:`default_probabilities`). ``origin`` maps local node ids to ids of a
    parent graph when the graph is an induced subgraph, and ``edge_origin``
    does the same for edges.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray
    origin: np.ndarray | None = None
    edge_origin: np.ndarray | None = None
    labels: tuple | None = None
    out_ptr: np.ndarray = field(init=False, repr=False)
    out_edges: np.ndarray = field(init=False, repr=False)
    in_ptr: np.ndarray = field(init=False, repr=False)
    in_edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        src = np.ascontiguousarray(self.src, dtype=np.int64)
        dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        prob = np.ascontiguousarray(self.prob, dtype=np.float64)
        if not (len(src) == len(dst) == len(prob)):
            raise ValueError("src, dst and prob must have equal length")
        if len(src) and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= self.n):
            raise ValueError("edge endpoint outside 0..n-1")
        known = ~np.isnan(prob)
        if np.any((prob[known] <= 0.0) | (prob[known] > 1.0)):
            raise ValueError("edge probabilities must lie in (0, 1]")
        for arr in (src, dst, prob):
            arr.setflags(write=False)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "prob", prob)
        out_ptr, out_edges = _csr(src, self.n)
        in_ptr, in_edges = _csr(dst, self.n)
        for arr in (out_ptr, out_edges, in_ptr, in_edges):
            arr.setflags(write=False)
        object.__setattr__(self, "out_ptr", out_ptr)
        object.__setattr__(self, "out_edges", out_edges)
        object.__setattr__(self, "in_ptr", in_ptr)
        object.__setattr__(self, "in_edges", in_edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence], **kw) -> "Graph":
        """Build from ``(u, v)`` or ``(u, v, p)`` tuples."""
        edges = list(edges)
        src = np.array([e[0] for e in edges], dtype=np.int64)
        dst = np.array([e[1] for e in edges], dtype=np.int64)
        prob = np.array([e[2] if len(e) > 2 else np.nan for e in edges], dtype=np.float64)
        return cls(n, src, dst, prob, **kw)

    @property
    def m(self) -> int:
        return len(self.src)

    def out_edge_ids(self, u: int) -> np.ndarray:
        return self.out_edges[self.out_ptr[u]:self.out_ptr[u + 1]]

    def in_edge_ids(self, v: int) -> np.ndarray:
        return self.in_edges[self.in_ptr[v]:self.in_ptr[v + 1]]

    def out_neighbors(self, u: int) -> np.ndarray:
        return self.dst[self.out_edge_ids(u)]

    def in_neighbors(self, v: int) -> np.ndarray:
        return self.src[self.in_edge_ids(v)]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def reverse(self) -> "Graph":
        """Transpose: every edge ``u -> v`` becomes ``v -> u`` (same index)."""
        return Graph(self.n, self.dst, self.src, self.prob)

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(int(u), int(v), float(p)) for u, v, p in zip(self.src, self.dst, self.prob)]

    def to_original(self, u: int) -> int:
        return int(u) if self.origin is None else int(self.origin[u])

    def induced_subgraph(self, keep: np.ndarray) -> "Graph":
        """Subgraph induced by the nodes where the boolean mask ``keep`` is set.

        Node and edge ids of the result refer back to this graph's ids
        composed with this graph's own ``origin`` mapping.
        """
        keep = np.asarray(keep, dtype=bool)
        local = np.cumsum(keep) - 1
        nodes = np.flatnonzero(keep)
        emask = keep[self.src] & keep[self.dst]
        eids = np.flatnonzero(emask)
        origin = nodes if self.origin is None else self.origin[nodes]
        edge_origin = eids if self.edge_origin is None else self.edge_origin[eids]
        return Graph(
            len(nodes), local[self.src[eids]], local[self.dst[eids]], self.prob[eids],
            origin=origin, edge_origin=edge_origin,
        )


def parse_edge_list(text: str | Iterable[str], directed: bool = True) -> Graph:
    """Parse ``u v`` / ``u v p`` lines into a :class:`Graph`.

    Blank lines and lines starting with ``#`` or ``%`` are skipped. When the
    ids used are exactly ``0..max`` they are kept; otherwise nodes are
    renumbered densely by first appearance and the original ids are stored in
    ``Graph.labels``. With ``directed=False`` every line yields both
    directions. Missing probabilities are left as NaN.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    raw: list[tuple[int, int, float]] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line[0] in "#%":
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphParseError(f"line {lineno}: expected 'u v' or 'u v p', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(f"line {lineno}: node ids must be integers, got {line!r}") from None
        if u < 0 or v < 0:
            raise GraphParseError(f"line {lineno}: negative node id")
        p = math.nan
        if len(parts) == 3:
            try:
                p = float(parts[2])
            except ValueError:
                raise GraphParseError(f"line {lineno}: bad probability {parts[2]!r}") from None
            if not 0.0 < p <= 1.0:
                raise GraphParseError(f"line {lineno}: probability {p} outside (0, 1]")
        raw.append((u, v, p))
    if not raw:
        raise GraphParseError("empty edge list")

    ids = np.array([(u, v) for u, v, _ in raw], dtype=np.int64)
    prob = np.array([p for _, _, p in raw], dtype=np.float64)
    distinct = np.unique(ids)
    labels = None
    if distinct[-1] + 1 == len(distinct):
        n = len(distinct)
        src, dst = ids[:, 0], ids[:, 1]
    else:
        remap: dict[int, int] = {}
        for label in ids.ravel():
            remap.setdefault(int(label), len(remap))
        n = len(remap)
        src = np.array([remap[int(u)] for u in ids[:, 0]], dtype=np.int64)
        dst = np.array([remap[int(v)] for v in ids[:, 1]], dtype=np.int64)
        labels = tuple(remap)
    if not directed:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        # interleave so each reversed copy sits next to its original
        order = np.arange(len(src)).reshape(2, -1).T.ravel()
        src, dst, prob = src[order], dst[order], np.concatenate([prob, prob])[order]
    return Graph(n, src, dst, prob, labels=labels)


def load_edge_list(path, directed: bool = True) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh.read(), directed=directed)


def default_probabilities(g: Graph, constant: float | None = None) -> Graph:
    """Fill missing edge probabilities with ``1/indegree(v)`` (or a constant)."""
    prob = g.prob.copy()
    missing = np.isnan(prob)
    if constant is not None:
        if not 0.0 < constant <= 1.0:
            raise ValueError("constant probability must lie in (0, 1]")
        prob[missing] = constant
    else:
        indeg = g.in_degree()
        prob[missing] = 1.0 / indeg[g.dst[missing]]
    return Graph(g.n, g.src, g.dst, prob, origin=g.origin, edge_origin=g.edge_origin, labels=g.labels)


@dataclass(frozen=True)
class CostModel:
    """Trial cost ``c(<u,i>) = base * growth**(i-1)`` unless ``table`` overrides.

    ``table`` maps ``(u, i)`` to a cost.
    """

    base: float = 1.0
    growth: float = 1.2
    table: dict | None = None

    def __post_init__(self):
        if self.base <= 0:
            raise InstanceError("cost.base must be positive")
        if self.growth < 1:
            raise InstanceError("cost.growth must be >= 1 so costs are nondecreasing")

    def cost(self, u: int, i: int) -> float:
        if self.table is not None and (u, i) in self.table:
            return float(self.table[(u, i)])
        return self.base * self.growth ** (i - 1)


@dataclass(frozen=True, eq=False)
class Instance:
    graph: Graph
    beta: np.ndarray
    b: np.ndarray
    cost: CostModel
    k: float
    cost_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.graph.n
        beta = np.array(self.beta, dtype=np.float64)
        b = np.array(self.b, dtype=np.int64)
        if beta.shape != (n,):
            raise InstanceError(f"beta: expected {n} entries, got {beta.shape}")
        if b.shape != (n,):
            raise InstanceError(f"b: expected {n} entries, got {b.shape}")
        if np.any((beta <= 0) | (beta > 1)) or np.any(np.isnan(beta)):
            raise InstanceError("beta: every entry must lie in (0, 1]")
        if np.any(b < 1):
            raise InstanceError("b: every entry must be >= 1")
        if not self.k >= 0:
            raise InstanceError("k: budget must be nonnegative")
        if np.any(np.isnan(self.graph.prob)):
            raise InstanceError("graph: unassigned edge probabilities")
        bmax = int(b.max()) if n else 0
        # cost_table[u, i-1] = c(<u,i>); padded with inf beyond b(u)
        table = np.full((n, bmax), np.inf)
        for u in range(n):
            for i in range(1, b[u] + 1):
                table[u, i - 1] = self.cost.cost(u, i)
        if np.any(table[np.isfinite(table)] <= 0):
            raise InstanceError("cost: every trial cost must be positive")
        both = np.isfinite(table[:, 1:])
        if bmax > 1 and np.any(table[:, 1:][both] < table[:, :-1][both]):
            raise InstanceError("cost: trial costs must be nondecreasing in the trial index")
        for arr in (beta, b, table):
            arr.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "cost_table", table)

    @property
    def n(self) -> int:
        return self.graph.n

    def with_budget(self, k: float) -> "Instance":
        return Instance(self.graph, self.beta, self.b, self.cost, k)


def build_instance(g: Graph, beta, b, cost: CostModel | None = None, k: float = 0.0) -> Instance:
    """Validate and bundle the problem parameters.

    Scalars for ``beta`` or ``b`` are broadcast to every node.
    """
    n = g.n
    if np.isscalar(beta):
        beta = np.full(n, float(beta))
    if np.isscalar(b):
        b = np.full(n, int(b))
    return Instance(g, beta, b, cost or CostModel(), k)


def trial_cost(inst: Instance, u: int, i: int) -> float:
    if not 1 <= i <= inst.b[u]:
        raise IndexError(f"trial index {i} outside 1..{inst.b[u]} for node {u}")
    return float(inst.cost_table[u, i - 1])


def vector_cost(inst: Instance, x) -> float:
    """Total cost of a seeding vector, summed from scratch."""
    total = 0.0
    for u, xu in enumerate(x):
        for i in range(1, int(xu) + 1):
            total += trial_cost(inst, u, i)
    return total


def check_seeding_vector(inst: Instance, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (inst.n,):
        raise InstanceError(f"seeding vector: expected {inst.n} entries")
    if np.any(x < 0) or np.any(x > inst.b):
        raise InstanceError("seeding vector must satisfy 0 <= x <= b")
    return x
