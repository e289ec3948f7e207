from .evaluation import EvalReport, evaluate_selection
from .planted import gen_planted_clique_graph
from .worlds import (LabeledMeasurementSet, WorldGenerationError, WorldSpec, gen_1d_world,
                     gen_range_world, gen_visual_world, generate)

__all__ = ["EvalReport", "evaluate_selection", "gen_planted_clique_graph", "LabeledMeasurementSet",
           "WorldGenerationError", "WorldSpec", "gen_1d_world", "gen_range_world",
           "gen_visual_world", "generate"]
