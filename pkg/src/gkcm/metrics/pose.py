"""Pairwise loop-closure consistency for relative-pose measurements."""

from __future__ import annotations

import numpy as np

from .lie import PoseWithCov, compose, invert, pose_error_vector


class IllConditionedCovariance(np.linalg.LinAlgError):
    pass


def mahalanobis_sq(err: np.ndarray, cov: np.ndarray, cond_limit: float = 1e12) -> float:
    if not np.all(np.isfinite(cov)) or np.linalg.cond(cov) > cond_limit:
        raise IllConditionedCovariance("loop covariance is singular or ill-conditioned")
    return float(err @ np.linalg.solve(cov, err))


def loop_pose(z_ik: PoseWithCov, z_jl: PoseWithCov, x_ij: PoseWithCov,
              x_lk: PoseWithCov) -> PoseWithCov:
    """(-z_ik) (+) x_ij (+) z_jl (+) x_lk; the identity for a noise-free world."""
    return compose(compose(compose(invert(z_ik), x_ij), z_jl), x_lk)


def pairwise_pose_metric(z_ik: PoseWithCov, z_jl: PoseWithCov, x_ij: PoseWithCov,
                         x_lk: PoseWithCov) -> float:
    """Squared Mahalanobis norm of the loop error through two inter-robot measurements."""
    loop = loop_pose(z_ik, z_jl, x_ij, x_lk)
    return mahalanobis_sq(pose_error_vector(loop), loop.cov)


def scalar_pair_metric(z_i: float, var_i: float, z_j: float, var_j: float) -> float:
    """Direct observations of one scalar state: (z_i - z_j)^2 / (var_i + var_j)."""
    return (z_i - z_j) ** 2 / (var_i + var_j)
