"""k-uniform hypergraphs used as (generalized) consistency graphs.

Vertices are dense integer indices ``0..n-1``. Edges are stored as canonical
(sorted) k-tuples. For every vertex ``v`` we keep its edge set ``E(v)``, the
set of (k-1)-tuples obtained by removing ``v`` from each incident edge, and
its neighborhood ``N(v)``. Graphs are append-only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class HypergraphError(ValueError):
    """Raised on malformed vertex tuples or out-of-range indices."""


class KUniformHypergraph:
    def __init__(self, n: int = 0, k: int = 2):
        if k < 2:
            raise HypergraphError(f"edge arity must be >= 2, got {k}")
        if n < 0:
            raise HypergraphError(f"vertex count must be >= 0, got {n}")
        self.k = k
        self.n = n
        self.edges: set[tuple[int, ...]] = set()
        self.edge_sets: list[set[tuple[int, ...]]] = [set() for _ in range(n)]
        self.neighborhoods: list[set[int]] = [set() for _ in range(n)]

    def __repr__(self) -> str:
        return f"KUniformHypergraph(n={self.n}, k={self.k}, edges={len(self.edges)})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KUniformHypergraph):
            return NotImplemented
        return self.k == other.k and self.n == other.n and self.edges == other.edges

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _check_vertex(self, v: int) -> None:
        if not 0 <= v < self.n:
            raise HypergraphError(f"vertex {v} out of range [0, {self.n})")

    def canonical(self, vs: Iterable[int]) -> tuple[int, ...]:
        """Sorted tuple for ``vs`` after validating arity, range and distinctness."""
        t = tuple(sorted(int(v) for v in vs))
        if len(t) != self.k:
            raise HypergraphError(f"expected {self.k} vertices, got {len(t)}: {t}")
        for a, b in zip(t, t[1:]):
            if a == b:
                raise HypergraphError(f"duplicate vertex {a} in edge {t}")
        if t and (t[0] < 0 or t[-1] >= self.n):
            raise HypergraphError(f"edge {t} has a vertex out of range [0, {self.n})")
        return t

    def add_vertex(self) -> int:
        self.edge_sets.append(set())
        self.neighborhoods.append(set())
        self.n += 1
        return self.n - 1

    def add_edge(self, vs: Iterable[int]) -> bool:
        """Insert an edge. Returns False if it was already present."""
        e = self.canonical(vs)
        if e in self.edges:
            return False
        self._insert(e)
        return True

    def _insert(self, e: tuple[int, ...]) -> None:
        # e must already be canonical and validated
        self.edges.add(e)
        for pos, v in enumerate(e):
            self.edge_sets[v].add(e[:pos] + e[pos + 1:])
            nb = self.neighborhoods[v]
            for w in e:
                if w != v:
                    nb.add(w)

    def add_edges(self, edges: Iterable[Iterable[int]]) -> None:
        for e in edges:
            self.add_edge(e)

    def has_edge(self, vs: Iterable[int]) -> bool:
        e = self.canonical(vs)
        return e in self.edges

    def edge_set(self, v: int) -> set[tuple[int, ...]]:
        self._check_vertex(v)
        return self.edge_sets[v]

    def neighborhood(self, v: int) -> set[int]:
        self._check_vertex(v)
        return self.neighborhoods[v]

    def degree(self, v: int) -> int:
        self._check_vertex(v)
        return len(self.neighborhoods[v])

    def degrees(self) -> list[int]:
        return [len(nb) for nb in self.neighborhoods]

    def is_clique(self, vertices: Sequence[int]) -> bool:
        """Definition check: every k-subset of ``vertices`` is an edge."""
        vs = sorted(set(vertices))
        if len(vs) < self.k:
            return len(vs) == 0
        return all(c in self.edges for c in itertools.combinations(vs, self.k))

    def induced(self, keep: Iterable[int]) -> "KUniformHypergraph":
        """Copy of the graph with all edges touching vertices outside ``keep`` removed.

        Vertex indices are preserved, so results map straight back.
        """
        keep = set(keep)
        g = KUniformHypergraph(self.n, self.k)
        for e in self.edges:
            if all(v in keep for v in e):
                g._insert(e)
        return g

    def copy(self) -> "KUniformHypergraph":
        return self.induced(range(self.n))


def new_graph(n: int, k: int) -> KUniformHypergraph:
    return KUniformHypergraph(n, k)


def embed_to_2uniform(g: KUniformHypergraph) -> KUniformHypergraph:
    """Replace every k-edge by its C(k, 2) vertex pairs."""
    h = KUniformHypergraph(g.n, 2)
    if g.k == 2:
        for e in g.edges:
            h._insert(e)
        return h
    pairs = set()
    for e in g.edges:
        pairs.update(itertools.combinations(e, 2))
    for p in pairs:
        h._insert(p)
    return h


@dataclass
class CliqueResult:
    vertices: list[int]
    is_valid_clique: bool
    solver: str
    stats: dict = field(default_factory=lambda: {"nodes_expanded": 0, "wall_time": 0.0})

    @property
    def size(self) -> int:
        return len(self.vertices)
