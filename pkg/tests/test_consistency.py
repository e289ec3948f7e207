import itertools
import math
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gkcm.consistency import (CheckFamily, ConsistencyGraphBuilder, FamilyMismatch,
                              build_graph_batch, build_graph_incremental, check_count_estimate,
                              combination_blocks, graph_from_matrix, pairwise_matrix)
from gkcm.metrics.families import ScalarMeasurement, scalar_family
from gkcm.metrics.pose import scalar_pair_metric


def constant_family(k, value):
    return CheckFamily(k, {k: lambda d, idx: np.full(len(idx), 0.0 if value else 1.0)}, {k: 0.5})


class Counting:
    """Check wrapper that counts invocations per row."""

    def __init__(self, fn):
        self.fn = fn
        self.rows = 0
        self.lock = threading.Lock()

    def __call__(self, data, idx):
        with self.lock:
            self.rows += len(idx)
        return self.fn(data, idx)


def spread_family(k, orders, width):
    """Subset-monotone stub: a group passes when its value spread is at most ``width``.

    Every subset of a passing group has a smaller spread, so lower orders
    can only prune groups that would fail anyway.
    """
    def check(data, idx):
        v = np.asarray(data)[idx]
        return v.max(axis=1) - v.min(axis=1)

    checks = {j: Counting(check) for j in orders}
    return CheckFamily(k, checks, {j: width for j in orders}, lambda ms: np.asarray(ms, dtype=float))


def test_pass_all_pairs_complete():
    g = build_graph_batch(list(range(5)), constant_family(2, True))
    assert g.num_edges == 10


def test_fail_all_quadruples_empty():
    g = build_graph_batch(list(range(7)), constant_family(4, False))
    assert g.n == 7 and g.num_edges == 0


def test_fewer_measurements_than_k(caplog):
    g = build_graph_batch([1, 2], constant_family(3, True))
    assert g.n == 2 and g.num_edges == 0
    assert "no edges" in caplog.text


def test_family_validation():
    with pytest.raises(ValueError):
        CheckFamily(3, {2: lambda d, i: i}, {2: 1.0})
    with pytest.raises(ValueError):
        CheckFamily(3, {3: lambda d, i: i}, {})
    with pytest.raises(ValueError):
        CheckFamily(3, {3: lambda d, i: i, 4: lambda d, i: i}, {3: 1.0, 4: 1.0})


def test_nan_scores_fail():
    fam = CheckFamily(2, {2: lambda d, idx: np.full(len(idx), np.nan)}, {2: 1.0})
    assert build_graph_batch([0, 1, 2], fam).num_edges == 0


def test_check_count_estimate():
    assert check_count_estimate(110, 4, "batch") == 5_773_185
    assert check_count_estimate(10, 4, "incremental") == 84
    for m in range(8):
        assert check_count_estimate(m, 2) == m * (m - 1) // 2
    with pytest.raises(ValueError):
        check_count_estimate(5, 2, "lazy")
    with pytest.raises(ValueError):
        check_count_estimate(-1, 2)


@pytest.mark.parametrize("m,k", [(0, 2), (1, 2), (5, 1), (7, 2), (9, 3), (10, 4), (8, 8), (6, 5)])
def test_combination_blocks_match_itertools(m, k):
    got = [tuple(r) for b in combination_blocks(m, k, block=7) for r in b]
    assert got == list(itertools.combinations(range(m), k))


def test_direct_counts_exactly_binomial():
    fam = spread_family(3, (3,), 0.5)
    vals = list(np.random.default_rng(0).uniform(0, 3, 14))
    b = ConsistencyGraphBuilder(fam)
    b.extend(vals)
    assert fam.checks[3].rows == math.comb(14, 3) == b.check_counts[3]


def test_incremental_add_counts_binomial():
    fam = spread_family(3, (3,), 0.5)
    b = ConsistencyGraphBuilder(fam)
    vals = np.random.default_rng(1).uniform(0, 3, 10)
    for v in vals[:-1]:
        b.add(v)
    before = fam.checks[3].rows
    b.add(vals[-1])
    assert fam.checks[3].rows - before == check_count_estimate(10, 3, "incremental")


def test_inconsistent_addition_adds_vertex_only():
    fam = spread_family(2, (2,), 0.5)
    b = ConsistencyGraphBuilder(fam)
    for v in (0.0, 0.1, 0.2):
        b.add(v)
    edges = set(b.graph.edges)
    g, v = build_graph_incremental(b, 50.0)
    assert v == 3 and g.n == 4 and g.edges == edges


def test_incremental_rejects_other_arity():
    b = ConsistencyGraphBuilder(spread_family(3, (3,), 1.0))
    with pytest.raises(FamilyMismatch):
        build_graph_incremental(b, 0.0, spread_family(2, (2,), 1.0))


def test_batch_requires_empty_builder():
    b = ConsistencyGraphBuilder(spread_family(2, (2,), 1.0))
    b.add(0.0)
    with pytest.raises(FamilyMismatch):
        b.extend([1.0, 2.0])


def test_scalar_matrix_hand_computed():
    ms = [ScalarMeasurement(0.0, 1.0), ScalarMeasurement(2.0, 3.0), ScalarMeasurement(-1.0, 0.5)]
    Q = pairwise_matrix(ms, lambda a, b: scalar_pair_metric(a.value, a.variance, b.value, b.variance))
    expected = np.array([[0.0, 1.0, 1 / 1.5],
                         [1.0, 0.0, 9 / 3.5],
                         [1 / 1.5, 9 / 3.5, 0.0]])
    np.testing.assert_allclose(Q, expected)


def test_duplicate_measurements_score_zero():
    ms = [ScalarMeasurement(1.5, 0.2)] * 4
    Q = pairwise_matrix(ms, lambda a, b: scalar_pair_metric(a.value, a.variance, b.value, b.variance))
    assert np.all(Q == 0)


def test_symmetrization_needs_both_directions():
    Q = np.array([[0.0, 1.0, 5.0],
                  [1.0, 0.0, 2.0],
                  [1.0, 9.0, 0.0]])
    g = graph_from_matrix(Q, 3.0)
    assert g.edges == {(0, 1)}


def test_scalar_family_matches_matrix_rule():
    rng = np.random.default_rng(4)
    ms = [ScalarMeasurement(float(rng.normal(0, 1)), float(rng.uniform(0.1, 1))) for _ in range(12)]
    fam = scalar_family(0.95)
    Q = pairwise_matrix(ms, lambda a, b: scalar_pair_metric(a.value, a.variance, b.value, b.variance))
    assert build_graph_batch(ms, fam) == graph_from_matrix(Q, fam.thresholds[2])


# -- properties ------------------------------------------------------------------------------

values = st.lists(st.floats(0, 4, allow_nan=False), min_size=0, max_size=13)


@given(values, st.sampled_from([(2, (2,)), (3, (2, 3)), (3, (3,)), (4, (2, 3, 4)), (4, (2, 4)),
                                (4, (3, 4))]), st.floats(0.1, 2.0))
def test_hierarchical_equals_direct_for_monotone_family(vals, shape, width):
    k, orders = shape
    direct = ConsistencyGraphBuilder(spread_family(k, (k,), width))
    direct.extend(vals)
    fam = spread_family(k, orders, width)
    hier = ConsistencyGraphBuilder(fam, hierarchical=True)
    hier.extend(vals)
    assert hier.graph == direct.graph
    assert hier.check_counts[k] <= math.comb(len(vals), k)


@given(values, st.sampled_from([(2, (2,)), (3, (3,)), (4, (2, 3, 4)), (3, (2, 3))]),
       st.floats(0.1, 2.0), st.booleans())
def test_incremental_equals_batch(vals, shape, width, hierarchical):
    k, orders = shape
    inc = ConsistencyGraphBuilder(spread_family(k, orders, width), hierarchical=hierarchical)
    for i, v in enumerate(vals):
        inc.add(v)
        batch = build_graph_batch(vals[:i + 1], spread_family(k, orders, width), hierarchical)
        assert inc.graph == batch


@given(values, st.integers(2, 4), st.floats(0.1, 2.0))
def test_worker_count_does_not_change_edges(vals, workers, width):
    base = build_graph_batch(vals, spread_family(3, (2, 3), width), hierarchical=True)
    par = build_graph_batch(vals, spread_family(3, (2, 3), width), hierarchical=True, workers=workers)
    assert par == base
