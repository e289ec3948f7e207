"""Group-k consistent measurement-set maximization."""

from .consistency import (CheckFamily, ConsistencyGraphBuilder, build_graph_batch,
                          build_graph_incremental, check_count_estimate, pairwise_matrix)
from .hypergraph import CliqueResult, KUniformHypergraph, embed_to_2uniform, new_graph
from .maxclique import (SolverOptions, brute_force_max_clique, max_clique, max_clique_exact,
                        max_clique_heuristic, max_clique_incremental, max_disjoint_cliques,
                        max_kcore_approx, solve)

__version__ = "0.1.0"
