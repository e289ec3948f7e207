from .chi2 import chi2_quantile
from .lie import OdometryChain, PoseWithCov, compose, invert
from .pose import pairwise_pose_metric, scalar_pair_metric
from .range import (RangeMeasurement, TrilaterationResult, range_group2_metric,
                    range_group3_metric, range_group4_gated_metric, range_group4_metric,
                    range_leave_one_out_metric, trilaterate)
from .visual import (ScalelessRelPoseMeasurement, recover_scale, visual_direction_metric,
                     visual_rotation_metric)

__all__ = [
    "chi2_quantile", "OdometryChain", "PoseWithCov", "compose", "invert",
    "pairwise_pose_metric", "scalar_pair_metric", "RangeMeasurement", "TrilaterationResult",
    "range_group2_metric", "range_group3_metric", "range_group4_gated_metric",
    "range_group4_metric", "range_leave_one_out_metric", "trilaterate",
    "ScalelessRelPoseMeasurement", "recover_scale", "visual_direction_metric",
    "visual_rotation_metric",
]
