import itertools

import numpy as np
import pytest

from imma.graph import Graph, build_instance
from imma.oracle import full_realizations, graph_realizations, random_tiny_instance, reachable_states
from imma.policies import HeuristicSelector, make_streams, run_adaptive_policy
from imma.realization import (
    UNKNOWN,
    FixedOracle,
    FullRealization,
    GraphRealization,
    PartialRealization,
    full_realization_probability,
    graph_realization_probability,
    is_consistent,
    is_subrealization,
    lazy_realization_oracle,
    residual_graph,
    sample_graph_realization,
)

from conftest import i1, path_graph


def test_sample_graph_realization_edge_frequency(t1):
    rng = np.random.default_rng(7)
    n = 100_000
    live = sum(int(sample_graph_realization(t1, rng).live[0]) for _ in range(n))
    assert abs(live / n - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_sample_graph_realization_degenerate_and_replay(t1):
    g = path_graph(1.0)
    assert sample_graph_realization(g, np.random.default_rng(0)).live.tolist() == [1, 1]
    a = sample_graph_realization(t1, np.random.default_rng(3)).live
    b = sample_graph_realization(t1, np.random.default_rng(3)).live
    assert np.array_equal(a, b)


def test_graph_realization_probability(t1):
    assert graph_realization_probability(t1, GraphRealization([1, 1])) == 0.25
    assert graph_realization_probability(t1, GraphRealization([1, 0])) == 0.25
    total = sum(graph_realization_probability(t1, GraphRealization(bits))
                for bits in itertools.product((0, 1), repeat=2))
    assert abs(total - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        GraphRealization([2, 0])


def test_full_realization_probability():
    inst = i1(b=1)
    phi = FullRealization(((1,), (1,), (1,)), GraphRealization([1, 1]))
    assert full_realization_probability(inst, phi) == pytest.approx(0.03125, abs=1e-15)
    all_phi = list(full_realizations(inst))
    assert len(all_phi) == 32
    assert abs(sum(full_realization_probability(inst, p) for p, _ in all_phi) - 1.0) <= 1e-12
    for p, q in all_phi:
        assert full_realization_probability(inst, p) == pytest.approx(q)


def test_beta_one_failed_trial_has_zero_probability():
    inst = i1(b=1, beta=1.0)
    phi = FullRealization(((0,), (1,), (1,)), GraphRealization([1, 1]))
    assert full_realization_probability(inst, phi) == 0.0


def test_probabilities_normalize_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(10):
        inst = random_tiny_instance(rng)
        total = sum(p for _, p in full_realizations(inst))
        assert abs(total - 1.0) <= 1e-9
        assert abs(sum(p for _, p in graph_realizations(inst.graph)) - 1.0) <= 1e-9


def _psi(inst, trials=None, edges=None):
    psi = PartialRealization.empty(inst)
    for u, outcomes in (trials or {}).items():
        for o in outcomes:
            psi.record_trial(u, o)
    for e, s in (edges or {}).items():
        psi.record_edge(e, s)
    return psi


def test_is_consistent():
    inst = i1()
    phi = FullRealization(((0, 1), (1, 1), (0, 0)), GraphRealization([1, 0]))
    assert is_consistent(phi, _psi(inst))
    assert not is_consistent(phi, _psi(inst, {0: [1]}))
    assert is_consistent(phi, _psi(inst, {0: [0, 1]}, {0: 1}))
    assert not is_consistent(phi, _psi(inst, {}, {1: 1}))


def test_is_subrealization_examples():
    inst = i1()
    other = _psi(inst, {0: [0, 1]}, {0: 1, 1: 0})
    assert is_subrealization(_psi(inst), other)
    assert is_subrealization(other, other)
    assert not is_subrealization(_psi(inst, {0: [1]}), _psi(inst, {0: [0]}))
    assert is_subrealization(_psi(inst, {0: [0]}, {0: 1}), other)
    assert not is_subrealization(other, _psi(inst, {0: [0]}))


def test_is_subrealization_partial_order_on_reachable_states():
    inst = i1(b=1)
    states = reachable_states(inst)
    rel = {(i, j): is_subrealization(a, b) for i, a in enumerate(states) for j, b in enumerate(states)}
    n = len(states)
    for i in range(n):
        assert rel[i, i]
    for i, j in itertools.product(range(n), repeat=2):
        if i != j and rel[i, j] and rel[j, i]:
            assert states[i] == states[j]
    for i, j, k in itertools.product(range(n), repeat=3):
        if rel[i, j] and rel[j, k]:
            assert rel[i, k]


def test_residual_graph_examples():
    inst = i1()
    full = residual_graph(inst, _psi(inst))
    assert full.n == 3 and full.edge_list() == inst.graph.edge_list()
    psi = _psi(inst, {1: [1]}, {1: 0})
    psi.activate(1)
    res = residual_graph(inst, psi)
    assert res.origin.tolist() == [0, 2] and res.m == 0
    for u in range(3):
        psi.activate(u)
    assert residual_graph(inst, psi).n == 0


def test_oracle_memoizes_and_bounds():
    inst = i1()
    oracle = lazy_realization_oracle(inst, np.random.default_rng(1))
    first = [oracle.trial_outcome(u, i) for u in range(3) for i in (1, 2)]
    again = [oracle.trial_outcome(u, i) for u in range(3) for i in (1, 2)]
    assert first == again
    assert oracle.edge_state(0) == oracle.edge_state(0)
    with pytest.raises(IndexError):
        oracle.trial_outcome(0, 3)


def test_oracle_trial_frequency():
    inst = build_instance(Graph(1, np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.array([])), 0.3, 1)
    rng = np.random.default_rng(11)
    n = 100_000
    hits = sum(lazy_realization_oracle(inst, rng).trial_outcome(0, 1) for _ in range(n))
    assert abs(hits / n - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / n)


def test_eager_materialization_matches_lazy_answers():
    inst = i1()
    lazy = lazy_realization_oracle(inst, np.random.default_rng(9))
    answers = [lazy.edge_state(1), lazy.trial_outcome(2, 2), lazy.trial_outcome(0, 1)]
    phi = lazy_realization_oracle(inst, np.random.default_rng(9)).materialize()
    assert answers == [phi.edges.live[1], phi.trials[2][1], phi.trials[0][0]]


def test_record_edge_conflict_raises():
    inst = i1()
    psi = _psi(inst, {}, {0: 1})
    psi.record_edge(0, 1)
    with pytest.raises(ValueError):
        psi.record_edge(0, 0)


def test_dump_format():
    inst = i1()
    psi = _psi(inst, {0: [0, 1]}, {0: 1})
    psi.activate(0)
    psi.activate(1)
    assert psi.dump(inst.graph) == (
        "# trials\n0: 01 active\n1: - active\n2: -\n# edges\n0 0->1: 1\n1 1->2: ?\n"
    )


@pytest.mark.parametrize("seed", range(5))
def test_runs_stay_consistent_with_hidden_realization(seed):
    rng = np.random.default_rng(seed)
    inst = random_tiny_instance(rng, k=3.0)
    phi = lazy_realization_oracle(inst, rng).materialize()
    oracle = FixedOracle(inst, phi)
    trace = run_adaptive_policy(HeuristicSelector("random"), inst, oracle, make_streams(seed))
    assert is_consistent(phi, trace.psi)
    # every active node has all its out-edges observed
    for v in np.flatnonzero(trace.psi.active):
        for e in inst.graph.out_edge_ids(v):
            assert trace.psi.edges[e] != UNKNOWN
