"""Random hypergraph helpers shared by the solver tests."""

import itertools

import numpy as np

from gkcm.hypergraph import KUniformHypergraph


def random_graph(rng: np.random.Generator, n: int, k: int, density: float) -> KUniformHypergraph:
    g = KUniformHypergraph(n, k)
    for e in itertools.combinations(range(n), k):
        if rng.random() < density:
            g.add_edge(e)
    return g


def complete_graph(n: int, k: int, offset: int = 0, g=None) -> KUniformHypergraph:
    g = g if g is not None else KUniformHypergraph(n + offset, k)
    for e in itertools.combinations(range(offset, offset + n), k):
        g.add_edge(e)
    return g


def naive_max_clique_size(g: KUniformHypergraph) -> int:
    """Largest vertex subset whose k-subsets are all edges, by subset enumeration."""
    best = 0
    for size in range(g.k, g.n + 1):
        found = any(all(e in g.edges for e in itertools.combinations(c, g.k))
                    for c in itertools.combinations(range(g.n), size))
        if not found:
            break
        best = size
    return best
