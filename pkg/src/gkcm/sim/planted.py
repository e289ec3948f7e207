"""Random k-uniform hypergraphs with a planted clique."""

from __future__ import annotations

import itertools
import logging
import math

import numpy as np

from ..hypergraph import KUniformHypergraph

log = logging.getLogger(__name__)


def gen_planted_clique_graph(n: int, k: int, clique_size: int, density: float,
                             seed: int = 0) -> tuple[KUniformHypergraph, list[int]]:
    """Graph holding every edge of a random ``clique_size`` vertex set plus random edges.

    Random edges are added until the edge count reaches ``round(density * C(n, k))``.
    A density below what the planted edges alone give is clamped (with a warning).
    """
    if not 0 <= clique_size <= n:
        raise ValueError(f"clique size {clique_size} outside [0, {n}]")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density {density} outside [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    g = KUniformHypergraph(n, k)
    planted = sorted(int(v) for v in rng.choice(n, size=clique_size, replace=False))
    for e in itertools.combinations(planted, k):
        g._insert(e)
    total = math.comb(n, k)
    target = int(round(density * total))
    if target < g.num_edges:
        log.warning("density %.4g is below the planted clique's own %d edges; clamped",
                    density, g.num_edges)
        target = g.num_edges
    missing = target - g.num_edges
    if missing > 0.5 * (total - g.num_edges):
        # dense regime: sample directly from the complement
        rest = [e for e in itertools.combinations(range(n), k) if e not in g.edges]
        for r in rng.choice(len(rest), size=missing, replace=False):
            g._insert(rest[int(r)])
    else:
        while g.num_edges < target:
            batch = np.sort(np.argsort(rng.random((2 * (target - g.num_edges) + 8, n)),
                                       axis=1)[:, :k], axis=1)
            for row in batch:
                e = tuple(int(v) for v in row)
                if e not in g.edges:
                    g._insert(e)
                    if g.num_edges >= target:
                        break
    return g, planted
