import math

import numpy as np
import pytest

from bgflight import partitions as pa
from bgflight import paths as gp
from bgflight.errors import CapacityError, InvalidInputError


def make_graph(k, seed=0, umax=1.0):
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, (k, k)) + 1j * rng.uniform(-1, 1, (k, k))
    w /= np.max(np.abs(w))
    np.fill_diagonal(w, 0)
    u = rng.uniform(0, umax, k)
    return gp.WeightedCollisionGraph(w, u)


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

def test_two_vertex_loop():
    got = gp.enumerate_paths(2, 2, 0, 0)
    assert got == [(0, 1, 0)]


def test_short_loop_cannot_be_surjective():
    assert gp.enumerate_paths(3, 2, 0, 0, surjective=True) == []


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_path_counts_match_matrix_power(k, n):
    m = np.linalg.matrix_power(np.ones((k, k)) - np.eye(k), n)
    for i in range(k):
        for j in range(k):
            assert len(gp.enumerate_paths(k, n, i, j)) == int(round(m[i, j]))


def test_path_cap():
    with pytest.raises(CapacityError):
        gp.enumerate_paths(6, 12, 0, 0, cap=1000)


# ---------------------------------------------------------------------------
# partition <-> path bijection
# ---------------------------------------------------------------------------

def test_alternating_partition_paths():
    op = pa.OrderedPartition(4, [(0, 2, 4), (1, 3)])
    assert gp.partition_to_path(op) == (0, 1, 0, 1, 0)
    op2 = pa.OrderedPartition(3, [(0, 2), (1, 3)])
    assert gp.partition_to_path(op2) == (0, 1, 0, 1)


def test_partition_to_path_rejects_consecutive():
    with pytest.raises(InvalidInputError):
        gp.partition_to_path(pa.OrderedPartition(2, [(0, 1), (2,)]))


@pytest.mark.parametrize("n", range(1, 8))
def test_bijection_exhaustive(n):
    for k in range(2, min(n + 2, 5)):
        # plain family onto all surjective paths
        ops = pa.enumerate_partitions(n, k, family="all", ordered=True)
        ncs = [op for op in ops if op.is_nonconsecutive()]
        paths = {gp.partition_to_path(op) for op in ncs}
        expected = set()
        for i in range(k):
            for j in range(k):
                expected.update(
                    gp.enumerate_paths(k, n, i, j, surjective=True))
        assert paths == expected
        for op in ncs:
            assert gp.path_to_partition(gp.partition_to_path(op)) == op
        # circ family onto closed paths at vertex 0
        circ = pa.enumerate_partitions(n, k, family="circ_nc", ordered=True)
        assert {gp.partition_to_path(op) for op in circ} == set(
            gp.enumerate_paths(k, n, 0, 0, surjective=True))
        # baro family onto paths from 0 to k-1
        baro = pa.enumerate_partitions(n, k, family="baro_nc", ordered=True)
        assert {gp.partition_to_path(op) for op in baro} == set(
            gp.enumerate_paths(k, n, 0, k - 1, surjective=True))


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def test_total_weight_explicit():
    w = np.array([[0, 2 + 1j], [3 - 1j, 0]])
    g = gp.WeightedCollisionGraph(w, [0.5, 2.0])
    expect = 0.5 * (2 + 1j) * 2.0 * (3 - 1j) * 0.5
    assert gp.total_weight((0, 1, 0), g) == pytest.approx(expect)


def test_zero_edge_kills_weight():
    w = np.array([[0, 0], [1, 0]], dtype=complex)
    g = gp.WeightedCollisionGraph(w, [1.0, 1.0])
    assert gp.total_weight((0, 1, 0), g) == 0


@pytest.mark.parametrize("k,n", [(2, 3), (3, 2), (3, 4), (4, 3)])
def test_path_sums_match_matrix_power_entries(k, n):
    g = make_graph(k, seed=k * 10 + n)
    tables = gp.matrix_power_table(g, n)
    for i in range(k):
        for j in range(k):
            brute = sum(
                gp.total_weight(p, g)
                for p in gp.enumerate_paths(k, n, i, j))
            assert tables[i][j].evaluate(g.times) == pytest.approx(
                brute, abs=1e-12)


# ---------------------------------------------------------------------------
# factorial transform
# ---------------------------------------------------------------------------

def test_borel_drops_constant_directions():
    t = gp.TaylorTable(2, {(1, 1): 1.0})
    out = gp.borel_L(t)
    assert out.coeffs == {(0, 0): 1.0}


def test_borel_explicit_factorials():
    t = gp.TaylorTable(2, {(2, 1): 1.0})
    out = gp.borel_L(t)
    assert out.coeffs == {(1, 0): pytest.approx(1.0)}
    t2 = gp.TaylorTable(2, {(3, 2): 6.0})
    assert gp.borel_L(t2).coeffs == {(2, 1): pytest.approx(6.0 / 2.0)}


def test_borel_kills_degree_one_diagonal():
    # the n = 0 matrix D(u) has single-variable entries: transform is zero
    g = make_graph(3, seed=1)
    tables = gp.matrix_power_table(g, 0)
    for i in range(3):
        for j in range(3):
            assert gp.borel_L(tables[i][j]).coeffs == {}


def test_borel_is_linear_and_degree_lowering():
    rng = np.random.default_rng(3)
    a = gp.TaylorTable(3, {(1, 2, 1): 1.5 + 1j, (2, 1, 3): -0.5j})
    b = gp.TaylorTable(3, {(1, 2, 1): -2.0, (1, 1, 1): 4.0})
    lin = gp.borel_L(a + b.scale(2.0))
    manual = gp.borel_L(a) + gp.borel_L(b).scale(2.0)
    assert lin.max_abs_diff(manual) < 1e-15
    for m in gp.borel_L(a).coeffs:
        assert all(x >= 0 for x in m)
    for m_in, m_out in zip(sorted(a.coeffs), sorted(gp.borel_L(a).coeffs)):
        assert all(o == i - 1 for i, o in zip(m_in, m_out))


# ---------------------------------------------------------------------------
# the operator identity
# ---------------------------------------------------------------------------

def test_identity_small_cases():
    # both sides symbolic; rounding only from float weight products
    g2 = make_graph(2, seed=7)
    assert gp.path_sum_identity_check(g2, 2, 0, 0) <= 1e-15
    g3 = make_graph(3, seed=8)
    assert gp.path_sum_identity_check(g3, 3, 0, 1) <= 1e-15


def test_identity_random_k4():
    g = make_graph(4, seed=9)
    assert gp.path_sum_identity_check(g, 5, 0, 1) <= 1e-12


@pytest.mark.parametrize("k", [2, 3, 4])
def test_identity_sweep(k):
    g = make_graph(k, seed=20 + k)
    for n in range(1, 7):
        for i in range(k):
            for j in range(k):
                assert gp.path_sum_identity_check(g, n, i, j) <= 1e-12


def test_nonsurjective_difference_is_constant_somewhere():
    for k in (2, 3):
        g = make_graph(k, seed=30 + k)
        for n in range(1, 6):
            assert gp.nonsurjective_terms_constant_in_missed_vertex(
                g, n, 0, 0)


def test_graph_validation():
    with pytest.raises(InvalidInputError):
        gp.WeightedCollisionGraph(np.eye(2), [1.0, 1.0])
    with pytest.raises(InvalidInputError):
        gp.WeightedCollisionGraph(np.zeros((2, 2)), [1.0, -1.0])
    g = make_graph(3, seed=0)
    assert g.r0 == pytest.approx(3 * np.max(np.abs(g.weights)))
