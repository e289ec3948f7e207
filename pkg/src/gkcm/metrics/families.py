"""Ready-made check families binding metrics to thresholds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..consistency import CheckFamily
from .chi2 import chi2_quantile
from .lie import OdometryChain, PoseWithCov
from .pose import IllConditionedCovariance, pairwise_pose_metric
from .range import (RangeData, range_group2_metric, range_group3_metric, range_group4_gated_metric,
                    range_group4_metric)
from .visual import VisualData, rotation_loop_scores, visual_group3_scores


@dataclass(frozen=True)
class ScalarMeasurement:
    value: float
    variance: float


@dataclass
class RelPoseMeasurement:
    value: PoseWithCov
    a_pose: int
    b_pose: int


def scalar_family(confidence: float = 0.95) -> CheckFamily:
    def prepare(ms):
        return (np.array([m.value for m in ms], dtype=float),
                np.array([m.variance for m in ms], dtype=float))

    def check(data, idx):
        z, var = data
        a, b = idx[:, 0], idx[:, 1]
        return (z[a] - z[b]) ** 2 / (var[a] + var[b])

    return CheckFamily(2, {2: check}, {2: chi2_quantile(1, confidence)}, prepare, "scalar")


def _pose_score(ms, chain_a: OdometryChain, chain_b: OdometryChain, u: int, v: int) -> float:
    zu, zv = ms[u], ms[v]
    x_ij = chain_a.relative(zu.a_pose, zv.a_pose)
    x_lk = chain_b.relative(zv.b_pose, zu.b_pose)
    try:
        return pairwise_pose_metric(zu.value, zv.value, x_ij, x_lk)
    except IllConditionedCovariance:
        return np.inf


def pose_family(chain_a: OdometryChain, chain_b: OdometryChain, confidence: float = 0.95) -> CheckFamily:
    """Pairwise loop-closure family; an edge needs both loop directions to pass."""
    dof = chain_a.dof

    def check(ms, idx):
        out = np.empty(len(idx))
        for r, (u, v) in enumerate(idx):
            out[r] = max(_pose_score(ms, chain_a, chain_b, u, v),
                         _pose_score(ms, chain_a, chain_b, v, u))
        return out

    return CheckFamily(2, {2: check}, {2: chi2_quantile(dof, confidence)}, list, "pose")


def range_family(context, confidence: float = 0.95, kappa: float = 3.0,
                 orders: Sequence[int] = (2, 3, 4), association: bool = False,
                 aggregate: str = "all", gate_subsets: bool = True) -> CheckFamily:
    """Group-4 range family with optional order-2/3 prefilters gated at ``kappa**2``.

    With ``gate_subsets`` (the default) the order-4 check itself also demands
    that every pair and triple pass at ``kappa**2``. The family is then
    subset-monotone, so registering the prefilters only saves work and never
    changes the edge set. Without it the order-4 check is the bare
    leave-one-out test, which can pass quadruples whose pairs are far apart.
    """
    if gate_subsets:
        checks = {4: lambda d, i: range_group4_gated_metric(d, i, kappa**2, association, aggregate)}
    else:
        checks = {4: lambda d, i: range_group4_metric(d, i, association, aggregate)}
    thresholds = {4: chi2_quantile(1, confidence)}
    if 2 in orders:
        checks[2] = lambda d, i: range_group2_metric(d, i, association)
        thresholds[2] = kappa**2
    if 3 in orders:
        checks[3] = lambda d, i: range_group3_metric(d, i, association)
        thresholds[3] = kappa**2
    return CheckFamily(4, checks, thresholds,
                       lambda ms: RangeData.from_measurements(ms, context), "range")


def range_pcm_family(context, confidence: float = 0.95, association: bool = False) -> CheckFamily:
    """Pairwise baseline: annulus overlap of two range circles at chi2(1) confidence."""
    return CheckFamily(2, {2: lambda d, i: range_group2_metric(d, i, association)},
                       {2: chi2_quantile(1, confidence)},
                       lambda ms: RangeData.from_measurements(ms, context), "range-pcm")


def visual_family(chain_a: OdometryChain, chain_b: OdometryChain, confidence: float = 0.95,
                  hierarchical_rotation: bool = True) -> CheckFamily:
    """Group-3 scaleless family: rotation loops on every pair, then directions.

    With ``hierarchical_rotation`` the pair rotation loop is also registered as
    the order-2 check, so hierarchical builds only assess triples whose pairs
    all pass.
    """
    g_rot = chi2_quantile(3, confidence)
    g_dir = chi2_quantile(2, confidence)
    checks = {3: lambda d, i: visual_group3_scores(d, i, g_rot)}
    thresholds = {3: g_dir}
    if hierarchical_rotation:
        checks[2] = lambda d, i: rotation_loop_scores(d, i[:, 0], i[:, 1])
        thresholds[2] = g_rot
    return CheckFamily(3, checks, thresholds,
                       lambda ms: VisualData.from_measurements(ms, chain_a, chain_b), "visual")

