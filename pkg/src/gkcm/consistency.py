"""Building generalized consistency graphs from measurements.

A :class:`CheckFamily` maps each order ``j`` to a vectorized check
``check(data, idx) -> scores`` where ``idx`` is an ``(N, j)`` array of
measurement indices and ``data`` is whatever ``family.prepare`` made of the
measurement list. A combination passes when its score is ``<=`` the
order's threshold (NaN fails).
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np

from .hypergraph import KUniformHypergraph

log = logging.getLogger(__name__)

Check = Callable[[Any, np.ndarray], np.ndarray]

BLOCK = 65536


class FamilyMismatch(ValueError):
    pass


@dataclass
class CheckFamily:
    k: int
    checks: dict[int, Check]
    thresholds: dict[int, float]
    prepare: Callable[[Sequence], Any] = field(default=lambda ms: ms)
    name: str = "custom"

    def __post_init__(self):
        if self.k not in self.checks:
            raise ValueError(f"check family needs an order-{self.k} check")
        for j in self.checks:
            if not 2 <= j <= self.k:
                raise ValueError(f"check order {j} outside 2..{self.k}")
            if j not in self.thresholds:
                raise ValueError(f"missing threshold for order {j}")

    @property
    def orders(self) -> list[int]:
        return sorted(self.checks)

    def passes(self, data, j: int, idx: np.ndarray) -> np.ndarray:
        if len(idx) == 0:
            return np.zeros(0, dtype=bool)
        s = np.asarray(self.checks[j](data, idx), dtype=float)
        return s <= self.thresholds[j]


def check_count_estimate(m: int, k: int, mode: str = "batch") -> int:
    if m < 0:
        raise ValueError("m must be >= 0")
    if mode == "batch":
        return math.comb(m, k)
    if mode == "incremental":
        return math.comb(m - 1, k - 1) if m >= 1 else 0
    raise ValueError(f"unknown mode {mode!r}")


def combination_blocks(m: int, k: int, block: int = BLOCK) -> Iterator[np.ndarray]:
    """All k-combinations of range(m) in lexicographic order, as int arrays."""
    if k > m or k < 1:
        return
    if k == 1:
        for s in range(0, m, block):
            yield np.arange(s, min(m, s + block))[:, None]
        return
    buf: list[np.ndarray] = []
    size = 0
    for head in itertools.combinations(range(m), k - 2) if k > 2 else [()]:
        lo = head[-1] + 1 if head else 0
        if m - lo < 2:
            continue
        a, b = np.triu_indices(m - lo, 1)
        tail = np.stack([a + lo, b + lo], axis=1)
        if head:
            arr = np.hstack([np.broadcast_to(np.array(head), (len(tail), len(head))), tail])
        else:
            arr = tail
        buf.append(arr)
        size += len(arr)
        if size >= block:
            yield np.vstack(buf)
            buf, size = [], 0
    if buf:
        yield np.vstack(buf)


class ConsistencyGraphBuilder:
    """Incrementally maintained consistency graph.

    In hierarchical mode the passing tuples of every lower order are kept, and
    an order-``j`` combination is only evaluated when all its ``(j-1)``-subsets
    passed.
    """

    def __init__(self, family: CheckFamily, hierarchical: bool = False, workers: int = 1):
        self.family = family
        self.hierarchical = hierarchical and len(family.orders) > 1
        self.workers = max(1, workers)
        self.measurements: list = []
        self.graph = KUniformHypergraph(0, family.k)
        self.check_counts: dict[int, int] = {j: 0 for j in family.orders}
        # order -> passing tuples, and (j-1)-tuple -> vertices completing a passing j-tuple
        self._passing: dict[int, set[tuple[int, ...]]] = {}
        self._ext: dict[int, dict[tuple[int, ...], set[int]]] = {}
        self._data = None

    # -- evaluation ----------------------------------------------------------

    def _evaluate(self, j: int, blocks) -> list[np.ndarray]:
        data = self._data
        fam = self.family

        def run(idx):
            return idx[fam.passes(data, j, idx)]

        out = []
        if self.workers == 1:
            for idx in blocks:
                if len(idx):
                    self.check_counts[j] += len(idx)
                    out.append(run(idx))
            return out
        todo = [b for b in blocks if len(b)]
        for b in todo:
            self.check_counts[j] += len(b)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            out = list(pool.map(run, todo))
        return out

    def _record(self, j: int, passed: list[np.ndarray]) -> list[tuple[int, ...]]:
        tuples = [tuple(map(int, row)) for arr in passed for row in arr]
        if j == self.family.k:
            for t in tuples:
                self.graph._insert(t)
        if self.hierarchical and j < self.family.k:
            ps = self._passing.setdefault(j, set())
            ext = self._ext.setdefault(j, {})
            for t in tuples:
                ps.add(t)
                for pos in range(j):
                    ext.setdefault(t[:pos] + t[pos + 1:], set()).add(t[pos])
        return tuples

    def _candidates(self, j: int, new: Optional[int]) -> Iterator[np.ndarray]:
        """Order-j combinations whose (j-1)-subsets all passed the previous order."""
        prev = j - 1
        ps = self._passing.get(prev, set())
        ext = self._ext.get(prev, {})
        rows: list[tuple[int, ...]] = []
        if new is None:
            for t in ps:
                cand = None
                for pos in range(prev):
                    s = ext.get(t[:pos] + t[pos + 1:])
                    if not s:
                        cand = set()
                        break
                    cand = {v for v in s if v > t[-1]} if cand is None else cand & s
                    if not cand:
                        break
                for v in sorted(cand or ()):
                    rows.append(t + (v,))
                if len(rows) >= BLOCK:
                    yield np.array(rows, dtype=int)
                    rows = []
        else:
            # combinations containing `new` (the largest index): (j-1)-tuple t
            # among older vertices with t passing and every t minus one + new passing
            for t in ps:
                if t[-1] >= new:
                    continue
                ok = True
                for pos in range(prev):
                    s = ext.get(t[:pos] + t[pos + 1:])
                    if not s or new not in s:
                        ok = False
                        break
                if ok:
                    rows.append(t + (new,))
                if len(rows) >= BLOCK:
                    yield np.array(rows, dtype=int)
                    rows = []
        if rows:
            yield np.array(sorted(rows), dtype=int)

    # -- public API ----------------------------------------------------------

    def extend(self, measurements: Sequence) -> KUniformHypergraph:
        """Batch build over ``measurements`` (must be called on an empty builder)."""
        if self.measurements:
            raise FamilyMismatch("batch build needs an empty builder; use add() to grow")
        self.measurements = list(measurements)
        m = len(self.measurements)
        for _ in range(m):
            self.graph.add_vertex()
        k = self.family.k
        if m < k:
            log.warning("only %d measurements for order-%d checks; graph has no edges", m, k)
            return self.graph
        self._data = self.family.prepare(self.measurements)
        if not self.hierarchical:
            self._record(k, self._evaluate(k, combination_blocks(m, k)))
            return self.graph
        orders = self.family.orders
        first = orders[0]
        self._record(first, self._evaluate(first, combination_blocks(m, first)))
        for j in range(first + 1, k + 1):
            if j in self.family.checks:
                self._record(j, self._evaluate(j, self._candidates(j, None)))
            else:
                # no check at this order: every extension of passing tuples passes
                self._record(j, list(self._candidates(j, None)))
        return self.graph

    def add(self, measurement) -> int:
        """Insert one measurement, evaluating only the combinations that contain it."""
        self.measurements.append(measurement)
        v = self.graph.add_vertex()
        m = len(self.measurements)
        k = self.family.k
        if m < 2:
            return v
        self._data = self.family.prepare(self.measurements)
        if not self.hierarchical:
            if m >= k:
                blocks = (np.hstack([b, np.full((len(b), 1), v)])
                          for b in combination_blocks(m - 1, k - 1))
                self._record(k, self._evaluate(k, blocks))
            return v
        orders = self.family.orders
        first = orders[0]
        if m >= first:
            blocks = (np.hstack([b, np.full((len(b), 1), v)])
                      for b in combination_blocks(m - 1, first - 1))
            self._record(first, self._evaluate(first, blocks))
        for j in range(first + 1, k + 1):
            if m < j:
                break
            cands = self._candidates(j, v)
            if j in self.family.checks:
                self._record(j, self._evaluate(j, cands))
            else:
                self._record(j, list(cands))
        return v

    @property
    def total_checks(self) -> int:
        return sum(self.check_counts.values())


def build_graph_batch(measurements: Sequence, family: CheckFamily,
                      hierarchical: bool = False, workers: int = 1) -> KUniformHypergraph:
    return ConsistencyGraphBuilder(family, hierarchical, workers).extend(measurements)


def build_graph_incremental(builder: ConsistencyGraphBuilder, new_measurement,
                            family: Optional[CheckFamily] = None) -> tuple[KUniformHypergraph, int]:
    if family is not None and (family.k != builder.family.k):
        raise FamilyMismatch(f"builder uses k={builder.family.k}, got family with k={family.k}")
    v = builder.add(new_measurement)
    return builder.graph, v


def pairwise_matrix(measurements: Sequence, metric: Callable[[Any, Any], float]) -> np.ndarray:
    """Dense matrix of q_uv = metric(z_u, z_v); the diagonal is zero."""
    m = len(measurements)
    Q = np.zeros((m, m))
    for u in range(m):
        for v in range(m):
            if u != v:
                Q[u, v] = metric(measurements[u], measurements[v])
    return Q


def graph_from_matrix(Q: np.ndarray, gamma: float) -> KUniformHypergraph:
    """Pair graph with an edge where both q_uv and q_vu are <= gamma."""
    m = Q.shape[0]
    g = KUniformHypergraph(m, 2)
    ok = (Q <= gamma) & (Q.T <= gamma)
    for u, v in zip(*np.nonzero(np.triu(ok, 1))):
        g._insert((int(u), int(v)))
    return g
