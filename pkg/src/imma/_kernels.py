"""Compiled inner loops for cascade simulation and reverse reachable sets.

Each kernel reseeds numba's internal generator from an explicit integer so a
call is a pure function of its arguments.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def rr_sets(in_ptr, in_edges, src, prob, n, count, seed):
    """Sample ``count`` reverse reachable sets with uniform roots.

    Returns ``(members, offsets)``: set ``j`` is
    ``members[offsets[j]:offsets[j+1]]`` with the root first.
    """
    np.random.seed(seed)
    offsets = np.empty(count + 1, dtype=np.int64)
    offsets[0] = 0
    cap = max(16, 4 * count)
    members = np.empty(cap, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    size = 0
    for j in range(count):
        root = np.random.randint(0, n)
        tag = j + 1
        if size + n > cap:
            while size + n > cap:
                cap *= 2
            grown = np.empty(cap, dtype=np.int64)
            grown[:size] = members[:size]
            members = grown
        start = size
        members[size] = root
        size += 1
        stamp[root] = tag
        head = start
        while head < size:
            v = members[head]
            head += 1
            for k in range(in_ptr[v], in_ptr[v + 1]):
                e = in_edges[k]
                w = src[e]
                if stamp[w] == tag:
                    continue
                if np.random.random() < prob[e]:
                    stamp[w] = tag
                    members[size] = w
                    size += 1
        offsets[j + 1] = size
    return members[:size].copy(), offsets


@njit(cache=True)
def cascade_sizes(out_ptr, out_edges, dst, prob, n, seed_prob, n_sims, seed):
    """Forward IC simulations with random seed sets.

    Node ``u`` joins the seed set of a simulation independently with
    probability ``seed_prob[u]`` (1 for a plain seed set). Edges are flipped
    lazily on first traversal. Returns the final active count per simulation.
    """
    np.random.seed(seed)
    out = np.empty(n_sims, dtype=np.int64)
    stamp = np.zeros(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for s in range(n_sims):
        tag = s + 1
        size = 0
        for u in range(n):
            p = seed_prob[u]
            if p > 0.0 and (p >= 1.0 or np.random.random() < p):
                stamp[u] = tag
                queue[size] = u
                size += 1
        head = 0
        while head < size:
            v = queue[head]
            head += 1
            for k in range(out_ptr[v], out_ptr[v + 1]):
                e = out_edges[k]
                w = dst[e]
                if stamp[w] == tag:
                    continue
                if np.random.random() < prob[e]:
                    stamp[w] = tag
                    queue[size] = w
                    size += 1
        out[s] = size
    return out


@njit(cache=True)
def single_seed_spreads(out_ptr, out_edges, dst, prob, n, nodes, n_sims, seed):
    """Mean forward spread of each single node in ``nodes``."""
    np.random.seed(seed)
    means = np.empty(len(nodes), dtype=np.float64)
    stamp = np.zeros(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    tag = 0
    for t in range(len(nodes)):
        total = 0
        for s in range(n_sims):
            tag += 1
            queue[0] = nodes[t]
            stamp[nodes[t]] = tag
            size = 1
            head = 0
            while head < size:
                v = queue[head]
                head += 1
                for k in range(out_ptr[v], out_ptr[v + 1]):
                    e = out_edges[k]
                    w = dst[e]
                    if stamp[w] == tag:
                        continue
                    if np.random.random() < prob[e]:
                        stamp[w] = tag
                        queue[size] = w
                        size += 1
            total += size
        means[t] = total / n_sims
    return means
