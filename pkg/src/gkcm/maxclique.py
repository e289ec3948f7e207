"""Maximum-clique solvers over k-uniform hypergraphs.

``max_clique_exact`` and ``max_clique_heuristic`` are the generalized
branch-and-bound and greedy searches (rooted at every vertex, pruned by
degree and by ``|S| + |U|``). ``brute_force_max_clique`` is an independent
enumeration used as an optimality reference, ``max_kcore_approx`` is the
pair-embedding k-core baseline.
"""

from __future__ import annotations

import bisect
import itertools
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .hypergraph import CliqueResult, KUniformHypergraph, embed_to_2uniform

BRUTE_FORCE_MAX_N = 24


class SolverError(ValueError):
    pass


@dataclass
class SolverOptions:
    num_threads: int = 1
    deterministic: bool = True
    mode: str = "exact"
    track_stats: bool = True
    # differential-testing knob; turning pruning off never changes the optimum
    prune: bool = True

    def __post_init__(self):
        if self.num_threads < 1:
            raise SolverError(f"num_threads must be >= 1, got {self.num_threads}")
        if self.mode not in ("exact", "heuristic"):
            raise SolverError(f"unknown solver mode {self.mode!r}")


class _Incumbent:
    """Best clique found so far; size is monotone and read without the lock."""

    def __init__(self, vertices: Sequence[int] = ()):
        self.vertices: list[int] = sorted(vertices)
        self.size = len(self.vertices)
        self._lock = threading.Lock()

    def offer(self, vertices: list[int]) -> None:
        if len(vertices) <= self.size:
            return
        with self._lock:
            if len(vertices) > self.size:
                self.vertices = sorted(vertices)
                self.size = len(vertices)


def _new_tuples(S: list[int], u: int, k: int) -> list[tuple[int, ...]]:
    """(k-1)-subsets of S + [u] that contain u."""
    out = []
    for p in itertools.combinations(S, k - 2):
        t = list(p)
        bisect.insort(t, u)
        out.append(tuple(t))
    return out


class _Search:
    def __init__(self, g: KUniformHypergraph, opts: SolverOptions, best: _Incumbent):
        self.g = g
        self.k = g.k
        self.E = g.edge_sets
        self.N = g.neighborhoods
        self.d = g.degrees()
        self.prune = opts.prune
        self.best = best
        self.nodes = 0

    # -- exact -------------------------------------------------------------

    def exact_root(self, i: int, only_higher: bool = True) -> None:
        E, N, d, k = self.E, self.N, self.d, self.k
        if self.prune and d[i] + 1 < self.best.size:
            return
        for e in sorted(E[i]):
            # a clique whose smallest vertex is below i was already explored from that root
            if only_higher and e[0] < i:
                continue
            S = sorted(e + (i,))
            R = list(itertools.combinations(S, k - 1))
            # every clique through i is reached from exactly one seed: its k-1
            # smallest other vertices, so later candidates must exceed the seed
            top = max(e)
            U = []
            for j in sorted(N[i]):
                if j <= top or (only_higher and j <= i):
                    continue
                if self.prune and d[j] + 1 < self.best.size:
                    continue
                Ej = E[j]
                if all(r in Ej for r in R):
                    U.append(j)
            self._clique(S, U)

    def _clique(self, S: list[int], U: list[int]) -> None:
        self.nodes += 1
        if not U:
            if len(S) > self.best.size:
                self.best.offer(S)
            return
        E, N, d, k = self.E, self.N, self.d, self.k
        U = list(U)
        while U:
            if self.prune and len(S) + len(U) <= self.best.size:
                return
            u = U.pop(0)
            S_rec = list(S)
            bisect.insort(S_rec, u)
            new = _new_tuples(S, u, k)
            Nu = N[u]
            bound = self.best.size if self.prune else 0
            U_rec = []
            for q in U:
                if q in Nu and d[q] >= bound:
                    Eq = E[q]
                    if all(t in Eq for t in new):
                        U_rec.append(q)
            self._clique(S_rec, U_rec)

    # -- heuristic ---------------------------------------------------------

    def heuristic_root(self, i: int) -> None:
        E, N, d, k = self.E, self.N, self.d, self.k
        Ei = E[i]
        if not Ei or d[i] + 1 < self.best.size:
            return
        conn: dict[int, int] = {}
        for t in Ei:
            for w in t:
                conn[w] = conn.get(w, 0) + 1
        # max summed connectivity, ties to the lexicographically smallest tuple
        e = min(Ei, key=lambda t: (-sum(conn[w] for w in t), t))
        S = sorted(e + (i,))
        R = list(itertools.combinations(S, k - 1))
        U = []
        for j in sorted(N[i]):
            if d[j] + 1 < self.best.size:
                continue
            Ej = E[j]
            if all(r in Ej for r in R):
                U.append(j)
        if len(S) + len(U) > self.best.size:
            self._clique_heu(S, U, conn)

    def _clique_heu(self, S: list[int], U: list[int], conn: dict[int, int]) -> None:
        E, N, d, k = self.E, self.N, self.d, self.k
        while True:
            self.nodes += 1
            if not U:
                if len(S) > self.best.size:
                    self.best.offer(S)
                return
            u = min(U, key=lambda w: (-conn.get(w, 0), w))
            U = [w for w in U if w != u]
            new = _new_tuples(S, u, k)
            S = list(S)
            bisect.insort(S, u)
            Nu = N[u]
            bound = self.best.size
            U = [q for q in U
                 if q in Nu and d[q] >= bound and all(t in E[q] for t in new)]


def _empty(solver: str) -> CliqueResult:
    return CliqueResult([], True, solver, {"nodes_expanded": 0, "wall_time": 0.0})


def _finish(g: KUniformHypergraph, vertices: Sequence[int], solver: str,
            nodes: int, t0: float) -> CliqueResult:
    vs = sorted(vertices)
    if len(vs) < g.k:
        vs = []
    return CliqueResult(vs, g.is_clique(vs), solver,
                        {"nodes_expanded": nodes, "wall_time": time.perf_counter() - t0})


def _run_roots(g: KUniformHypergraph, opts: SolverOptions,
               run: Callable[[_Search, int], None],
               roots: Sequence[int], start: Sequence[int] = ()) -> tuple[list[int], int]:
    if opts.num_threads == 1 or len(roots) < 2:
        best = _Incumbent(start)
        s = _Search(g, opts, best)
        for i in roots:
            run(s, i)
        return best.vertices, s.nodes

    chunks = [list(roots[t::opts.num_threads]) for t in range(opts.num_threads)]
    shared = None if opts.deterministic else _Incumbent(start)

    def work(chunk):
        # deterministic mode: no cross-worker pruning, so each chunk's answer
        # does not depend on scheduling
        best = shared if shared is not None else _Incumbent(start)
        s = _Search(g, opts, best)
        for i in chunk:
            run(s, i)
        return list(best.vertices), s.nodes

    with ThreadPoolExecutor(max_workers=opts.num_threads) as pool:
        results = list(pool.map(work, chunks))
    nodes = sum(r[1] for r in results)
    if shared is not None:
        return shared.vertices, nodes
    best = min((r[0] for r in results), key=lambda vs: (-len(vs), vs))
    return best, nodes


def max_clique_exact(g: KUniformHypergraph, opts: Optional[SolverOptions] = None) -> CliqueResult:
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    vs, nodes = _run_roots(g, opts, lambda s, i: s.exact_root(i), range(g.n))
    return _finish(g, vs, "exact", nodes, t0)


def max_clique_heuristic(g: KUniformHypergraph, opts: Optional[SolverOptions] = None) -> CliqueResult:
    opts = opts or SolverOptions(mode="heuristic")
    t0 = time.perf_counter()
    vs, nodes = _run_roots(g, opts, lambda s, i: s.heuristic_root(i), range(g.n))
    return _finish(g, vs, "heuristic", nodes, t0)


def max_clique(g: KUniformHypergraph, opts: Optional[SolverOptions] = None) -> CliqueResult:
    opts = opts or SolverOptions()
    if opts.mode == "exact":
        return max_clique_exact(g, opts)
    return max_clique_heuristic(g, opts)


def brute_force_max_clique(g: KUniformHypergraph) -> CliqueResult:
    """Enumerate every clique in lexicographic order and keep the first largest one."""
    if g.n > BRUTE_FORCE_MAX_N:
        raise SolverError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got n={g.n}")
    t0 = time.perf_counter()
    k, edges = g.k, g.edges
    best: list[int] = []
    count = 0

    def extend(C: list[int]) -> None:
        nonlocal best, count
        count += 1
        if len(C) >= k and len(C) > len(best):
            best = list(C)
        start = C[-1] + 1 if C else 0
        for v in range(start, g.n):
            if len(C) + 1 + (g.n - v - 1) <= len(best):
                break
            if len(C) + 1 >= k and not all(p + (v,) in edges
                                           for p in itertools.combinations(C, k - 1)):
                continue
            C.append(v)
            extend(C)
            C.pop()

    extend([])
    return _finish(g, best, "bruteforce", count, t0)


def core_numbers(g: KUniformHypergraph) -> list[int]:
    """Core number per vertex by bucket-based minimum-degree peeling (2-uniform input)."""
    n = g.n
    deg = g.degrees()
    maxd = max(deg, default=0)
    buckets: list[set[int]] = [set() for _ in range(maxd + 1)]
    for v, dv in enumerate(deg):
        buckets[dv].add(v)
    core = [0] * n
    removed = [False] * n
    current = 0
    for _ in range(n):
        d = 0
        while not buckets[d]:
            d += 1
        # smallest vertex index first keeps the peel order deterministic
        v = min(buckets[d])
        buckets[d].discard(v)
        current = max(current, d)
        core[v] = current
        removed[v] = True
        for w in g.neighborhoods[v]:
            if not removed[w] and deg[w] > d:
                buckets[deg[w]].discard(w)
                deg[w] -= 1
                buckets[deg[w]].add(w)
    return core


def max_kcore_approx(g: KUniformHypergraph) -> CliqueResult:
    t0 = time.perf_counter()
    h = embed_to_2uniform(g)
    core = core_numbers(h)
    top = max(core, default=0)
    if top == 0:
        return _finish(g, [], "kcore", 0, t0)
    vs = [v for v in range(g.n) if core[v] == top]
    if len(vs) < g.k:
        vs = []
    return CliqueResult(vs, g.is_clique(vs), "kcore",
                        {"nodes_expanded": g.n, "wall_time": time.perf_counter() - t0})


def max_clique_incremental(g: KUniformHypergraph, prev: CliqueResult, new_vertex: int,
                           opts: Optional[SolverOptions] = None) -> CliqueResult:
    """Best of ``prev`` and the largest clique through ``new_vertex``."""
    opts = opts or SolverOptions()
    if not 0 <= new_vertex < g.n:
        raise SolverError(f"new vertex {new_vertex} out of range")
    if any(v >= new_vertex for v in prev.vertices) or not g.is_clique(prev.vertices):
        raise SolverError("previous result is not a clique of the graph before the new vertex")
    t0 = time.perf_counter()
    best = _Incumbent(prev.vertices)
    s = _Search(g, opts, best)
    if opts.mode == "exact":
        s.exact_root(new_vertex, only_higher=False)
    else:
        s.heuristic_root(new_vertex)
    return _finish(g, best.vertices, "incremental", s.nodes, t0)


def solve(g: KUniformHypergraph, solver: str = "heuristic",
          opts: Optional[SolverOptions] = None) -> CliqueResult:
    if solver == "exact":
        return max_clique_exact(g, opts or SolverOptions(mode="exact"))
    if solver == "heuristic":
        return max_clique_heuristic(g, opts or SolverOptions(mode="heuristic"))
    if solver == "bruteforce":
        return brute_force_max_clique(g)
    if solver == "kcore":
        return max_kcore_approx(g)
    raise SolverError(f"unknown solver {solver!r}")


def max_disjoint_cliques(g: KUniformHypergraph, count: int,
                         opts: Optional[SolverOptions] = None,
                         solver: str = "heuristic") -> list[CliqueResult]:
    """Greedy extraction of up to ``count`` vertex-disjoint cliques."""
    if count < 1:
        raise SolverError("count must be >= 1")
    out: list[CliqueResult] = []
    allowed = set(range(g.n))
    h = g
    for _ in range(count):
        res = solve(h, solver, opts)
        if not res.vertices:
            break
        res.is_valid_clique = g.is_clique(res.vertices)
        out.append(res)
        allowed.difference_update(res.vertices)
        h = g.induced(allowed)
    return out


def definition_check(g: KUniformHypergraph, vertices: Iterable[int]) -> bool:
    return g.is_clique(list(vertices))
