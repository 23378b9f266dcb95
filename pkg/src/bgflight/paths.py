"""Weighted paths on complete graphs and the factorial (Borel-type) transform.

A path of length n on the complete graph with k vertices is a vertex sequence
i_0 i_1 ... i_n with no immediate repetition; backtracking (i_0 i_1 i_0) is
allowed.  Vertices are 0-based here.  Non-consecutive ordered partitions are
in bijection with the surjective paths: position s sits in block i exactly
when the path visits vertex i at step s.

Edge weights w_ij (zero diagonal) and vertex times u_i turn a path into the
total weight u_{i_0} w_{i_0 i_1} u_{i_1} ... w_{i_{n-1} i_n} u_{i_n}.  Summed
over all paths from i to j these weights are the entries of the matrix power
[D(u) W]^n D(u), and the factorial transform L (coefficient-wise division,
C u^nu -> C u^(nu-1) / (nu-1)!, terms with any exponent zero dropped) kills
exactly the contribution of non-surjective paths.  That identity is the
engine behind the generating matrix function computed in ``gmatrix``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InvalidInputError
from .partitions import OrderedPartition

DEFAULT_PATH_CAP = 10**7


@dataclass(frozen=True)
class WeightedCollisionGraph:
    """Complete graph on k >= 2 vertices with complex edge weights (zero
    diagonal) and non-negative vertex times."""

    weights: np.ndarray
    times: np.ndarray
    k: int = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        u = np.asarray(self.times, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidInputError("weight matrix must be square")
        k = w.shape[0]
        if k < 2:
            raise InvalidInputError("need at least 2 vertices")
        if u.shape != (k,):
            raise InvalidInputError("times must have one entry per vertex")
        if np.any(np.diag(w) != 0):
            raise InvalidInputError("diagonal weights must vanish")
        if np.any(u < 0):
            raise InvalidInputError("vertex times must be non-negative")
        w = w.copy()
        u = u.copy()
        w.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "times", u)
        object.__setattr__(self, "k", k)

    @property
    def r0(self) -> float:
        """Pole radius bound k * max |w_ij|."""
        return self.k * float(np.max(np.abs(self.weights)))


def enumerate_paths(k, n, start, end, surjective=False, cap=DEFAULT_PATH_CAP):
    """All length-n paths from ``start`` to ``end`` on the complete graph.

    With ``surjective`` only paths visiting every vertex are kept.  The raw
    path count is ((J-I)^n)_{start,end}; a CapacityError fires beyond ``cap``.
    """
    if k < 2:
        raise InvalidInputError("need at least 2 vertices")
    if not (0 <= start < k and 0 <= end < k):
        raise InvalidInputError("endpoint outside vertex range")
    if n < 0:
        raise InvalidInputError("length must be non-negative")
    if n == 0:
        if start != end:
            return []
        path = (start,)
        return [path] if (not surjective or k == 1) else []
    raw = np.linalg.matrix_power(np.ones((k, k)) - np.eye(k), n)[start, end]
    if raw > cap:
        raise CapacityError(f"{int(raw)} paths exceed cap {cap}")
    out = []
    stack = [(start,)]
    while stack:
        p = stack.pop()
        if len(p) == n + 1:
            if p[-1] == end and (not surjective or len(set(p)) == k):
                out.append(p)
            continue
        last = p[-1]
        # keep lexicographic output order despite the stack
        for v in range(k - 1, -1, -1):
            if v != last:
                stack.append(p + (v,))
    return out


def partition_to_path(op: OrderedPartition) -> tuple:
    """Surjective path of a non-consecutive ordered partition: step s visits
    the vertex whose block contains s."""
    if not op.is_nonconsecutive():
        raise InvalidInputError("blocks contain consecutive indices")
    return tuple(op.labels)


def path_to_partition(path) -> OrderedPartition:
    """Inverse of :func:`partition_to_path`; the path must be surjective
    onto 0..k-1."""
    k = max(path) + 1
    if set(path) != set(range(k)):
        raise InvalidInputError("path skips a vertex label")
    blocks = [[] for _ in range(k)]
    for s, v in enumerate(path):
        blocks[v].append(s)
    return OrderedPartition(len(path) - 1, tuple(tuple(b) for b in blocks))


def total_weight(path, graph: WeightedCollisionGraph) -> complex:
    """u_{i_0} w_{i_0 i_1} u_{i_1} ... w_{i_{n-1} i_n} u_{i_n}."""
    w, u = graph.weights, graph.times
    acc = complex(u[path[0]])
    for a, b in zip(path[:-1], path[1:]):
        if a == b:
            raise InvalidInputError("immediate repetition in path")
        acc *= w[a, b] * u[b]
    return acc


# ---------------------------------------------------------------------------
# Polynomial tables in the vertex times
# ---------------------------------------------------------------------------

class TaylorTable:
    """Sparse polynomial in u_1..u_k: multi-index exponent -> complex
    coefficient.  Supports the handful of operations the path identities
    need."""

    __slots__ = ("k", "coeffs")

    def __init__(self, k, coeffs=None):
        self.k = k
        self.coeffs = dict(coeffs or {})

    def copy(self):
        return TaylorTable(self.k, self.coeffs)

    def add_term(self, exponents, value):
        if len(exponents) != self.k:
            raise InvalidInputError("exponent arity mismatch")
        key = tuple(exponents)
        new = self.coeffs.get(key, 0j) + value
        if new == 0:
            self.coeffs.pop(key, None)
        else:
            self.coeffs[key] = new

    def __add__(self, other):
        out = self.copy()
        for key, val in other.coeffs.items():
            out.add_term(key, val)
        return out

    def scale(self, value):
        return TaylorTable(self.k, {m: c * value for m, c in self.coeffs.items()})

    def shift(self, axis):
        """Multiply by the variable on ``axis``."""
        out = {}
        for m, c in self.coeffs.items():
            key = m[:axis] + (m[axis] + 1,) + m[axis + 1:]
            out[key] = c
        return TaylorTable(self.k, out)

    def truncate(self, max_total_degree):
        return TaylorTable(self.k, {
            m: c for m, c in self.coeffs.items() if sum(m) <= max_total_degree
        })

    def evaluate(self, u):
        u = np.asarray(u)
        total = 0j
        for m, c in self.coeffs.items():
            term = c
            for ui, mi in zip(u, m):
                term *= ui ** mi
            total += term
        return total

    def max_abs_coeff(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def max_abs_diff(self, other):
        keys = set(self.coeffs) | set(other.coeffs)
        return max(
            (abs(self.coeffs.get(m, 0j) - other.coeffs.get(m, 0j)) for m in keys),
            default=0.0,
        )

    def __eq__(self, other):
        return isinstance(other, TaylorTable) and self.coeffs == other.coeffs

    def __repr__(self):
        return f"TaylorTable(k={self.k}, terms={len(self.coeffs)})"


def borel_L(table: TaylorTable) -> TaylorTable:
    """Factorial transform: C at exponents nu maps to C / prod (nu_i - 1)!
    at exponents nu - 1; any term with an exponent 0 is dropped."""
    out = TaylorTable(table.k)
    for m, c in table.coeffs.items():
        if any(mi < 1 for mi in m):
            continue
        denom = 1
        for mi in m:
            denom *= math.factorial(mi - 1)
        out.add_term(tuple(mi - 1 for mi in m), c / denom)
    return out


def path_sum_table(graph: WeightedCollisionGraph, n, start, end,
                   surjective=True, cap=DEFAULT_PATH_CAP) -> TaylorTable:
    """Sum of total weights over paths as a polynomial in the vertex times."""
    k = graph.k
    w = graph.weights
    out = TaylorTable(k)
    for p in enumerate_paths(k, n, start, end, surjective=surjective, cap=cap):
        coeff = 1 + 0j
        for a, b in zip(p[:-1], p[1:]):
            coeff *= w[a, b]
        if coeff == 0:
            continue
        expo = [0] * k
        for v in p:
            expo[v] += 1
        out.add_term(tuple(expo), coeff)
    return out


def matrix_power_table(graph: WeightedCollisionGraph, n):
    """Symbolic [D(u) W]^n D(u) as a k x k array of TaylorTables."""
    k = graph.k
    w = graph.weights
    tables = [[TaylorTable(k) for _ in range(k)] for _ in range(k)]
    for i in range(k):
        e = [0] * k
        e[i] = 1
        tables[i][i].add_term(tuple(e), 1 + 0j)
    for _ in range(n):
        new = [[TaylorTable(k) for _ in range(k)] for _ in range(k)]
        for i in range(k):
            acc_row = [TaylorTable(k) for _ in range(k)]
            for l in range(k):
                if w[i, l] == 0:
                    continue
                for j in range(k):
                    acc_row[j] = acc_row[j] + tables[l][j].scale(w[i, l])
            for j in range(k):
                new[i][j] = acc_row[j].shift(i)
        tables = new
    return tables


def path_sum_identity_check(graph: WeightedCollisionGraph, n, start, end,
                            cap=DEFAULT_PATH_CAP) -> float:
    """Residual of the path/matrix-power identity after the factorial
    transform: max coefficient difference between L(sum over surjective
    paths) and L([D(u)W]^n D(u))_{start,end}.  Exact up to rounding."""
    if n < 1:
        raise InvalidInputError("identity needs n >= 1")
    lhs = borel_L(path_sum_table(graph, n, start, end, surjective=True,
                                 cap=cap))
    rhs = borel_L(matrix_power_table(graph, n)[start][end])
    return lhs.max_abs_diff(rhs)


def nonsurjective_terms_constant_in_missed_vertex(graph, n, start, end,
                                                  cap=DEFAULT_PATH_CAP):
    """Degree bookkeeping behind the identity: the difference between the
    all-paths table and the surjective-paths table has, in every term, at
    least one vertex with exponent zero."""
    allp = path_sum_table(graph, n, start, end, surjective=False, cap=cap)
    surj = path_sum_table(graph, n, start, end, surjective=True, cap=cap)
    diff = allp + surj.scale(-1)
    return all(min(m) == 0 for m in diff.coeffs)
