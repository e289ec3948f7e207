"""Group-3 consistency for scaleless inter-robot measurements (direction + rotation).

A measurement relates pose ``i`` of robot a to pose ``l`` of robot b by the
azimuth/elevation of ``l`` seen from ``i`` and the relative rotation ``R_il``.
Noise on a measurement is ``(d_az, d_el, phi)`` with ``R = R_mean Exp(phi)``.

Two measurements fix the scales along both directions; the resulting full
relative transform predicts the direction of the third measurement. All
uncertainty is propagated with analytic first-order Jacobians over the
stacked input vector

    [az_u, el_u, phi_u | az_v, el_v, phi_v | d_ij, d_ik | d_lm, d_ln]

where ``d_*`` are 6-dof relative odometry perturbations (rho, phi) and the
two pairs taken from each robot's chain are jointly correlated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .lie import OdometryChain, hat3, so3_log, so3_right_jacobian_inv, wrap_angle

_EPS = 1e-12
NVAR = 34


class DegenerateConfiguration(ValueError):
    pass


@dataclass
class ScalelessRelPoseMeasurement:
    a_pose: int
    b_pose: int
    azimuth: float
    elevation: float
    rotation: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if self.cov.shape != (5, 5):
            raise ValueError("scaleless measurement covariance must be 5x5")


def unit_direction(az, el):
    """Unit vector for azimuth/elevation and its (..., 3, 2) Jacobian."""
    az, el = np.asarray(az, dtype=float), np.asarray(el, dtype=float)
    ca, sa, ce, se = np.cos(az), np.sin(az), np.cos(el), np.sin(el)
    u = np.stack([ca * ce, sa * ce, se], axis=-1)
    J = np.stack([np.stack([-sa * ce, ca * ce, np.zeros_like(az)], axis=-1),
                  np.stack([-ca * se, -sa * se, ce], axis=-1)], axis=-1)
    return u, J


def azimuth_elevation(d):
    """(az, el) of a direction vector with the (..., 2, 3) Jacobian."""
    d = np.asarray(d, dtype=float)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    rxy2 = x * x + y * y
    rxy = np.sqrt(rxy2)
    n2 = rxy2 + z * z
    az = np.arctan2(y, x)
    el = np.arctan2(z, rxy)
    rxy2s = np.maximum(rxy2, _EPS)
    rxys = np.maximum(rxy, _EPS)
    n2s = np.maximum(n2, _EPS)
    zero = np.zeros_like(x)
    J = np.stack([np.stack([-y / rxy2s, x / rxy2s, zero], axis=-1),
                  np.stack([-x * z / (rxys * n2s), -y * z / (rxys * n2s), rxy / n2s], axis=-1)],
                 axis=-2)
    return np.stack([az, el], axis=-1), J


def apply_scale(az: float, el: float, R: np.ndarray, s: float):
    """Full transform (R, s * u(az, el)) and the 6x6 Jacobian H over (az, el, phi, s) -> (rho, phi)."""
    u, Ju = unit_direction(az, el)
    R = np.asarray(R, dtype=float)
    H = np.zeros((6, 6))
    H[:3, 0:2] = s * R.T @ Ju
    H[:3, 5] = R.T @ u
    H[3:, 2:5] = np.eye(3)
    return R, s * u, H


def recover_scale(u_il: np.ndarray, u_jm: np.ndarray, R_ij: np.ndarray, t_ij: np.ndarray,
                  R_jm: np.ndarray, R_lm: np.ndarray, t_lm: np.ndarray) -> np.ndarray:
    """Scales (s_il, s_jm) along two measured directions by linear least squares.

    Positions of pose m reached through either measurement must agree:
    ``s_il u_il + R_il t_lm = t_ij + s_jm R_ij u_jm`` with the b-side rotation
    eliminated through ``R_il = R_ij R_jm R_lm^T``.
    """
    A = np.column_stack([u_il, -R_ij @ u_jm])
    b = t_ij - R_ij @ R_jm @ R_lm.T @ t_lm
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < 1e-9 * max(sv[0], 1.0):
        raise DegenerateConfiguration("measured directions are parallel; scale is unobservable")
    return np.linalg.solve(A.T @ A, A.T @ b)


# -- batched data ---------------------------------------------------------------


@dataclass
class VisualData:
    a_pose: np.ndarray
    b_pose: np.ndarray
    ang: np.ndarray  # (m, 2)
    R: np.ndarray  # (m, 3, 3)
    cov: np.ndarray  # (m, 5, 5)
    chain_a: OdometryChain
    chain_b: OdometryChain

    @classmethod
    def from_measurements(cls, ms: Sequence[ScalelessRelPoseMeasurement],
                          chain_a: OdometryChain, chain_b: OdometryChain) -> "VisualData":
        return cls(np.array([m.a_pose for m in ms], dtype=int),
                   np.array([m.b_pose for m in ms], dtype=int),
                   np.array([[m.azimuth, m.elevation] for m in ms], dtype=float).reshape(-1, 2),
                   np.array([m.rotation for m in ms], dtype=float).reshape(-1, 3, 3),
                   np.array([m.cov for m in ms], dtype=float).reshape(-1, 5, 5),
                   chain_a, chain_b)


def _quad(e, C):
    """e^T C^-1 e over a batch; singular covariances give inf."""
    out = np.full(e.shape[0], np.inf)
    det = np.linalg.det(C)
    ok = np.isfinite(det) & (np.abs(det) > 1e-300)
    if np.any(ok):
        out[ok] = np.einsum("ni,ni->n", e[ok], np.linalg.solve(C[ok], e[ok][..., None])[..., 0])
    return out


def rotation_loop_scores(data: VisualData, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis norm of Log(R_ij R_jm R_lm^T R_il^T) for measurement pairs (u, v)."""
    i, l = data.a_pose[u], data.b_pose[u]
    j, m = data.a_pose[v], data.b_pose[v]
    R_ij, _ = data.chain_a.relative_batch(i, j)
    R_lm, _ = data.chain_b.relative_batch(l, m)
    Ru, Rv = data.R[u], data.R[v]
    L = R_ij @ Rv @ np.swapaxes(R_lm, -1, -2) @ np.swapaxes(Ru, -1, -2)
    e = so3_log(L)
    Jr = so3_right_jacobian_inv(e)
    S_ij = data.chain_a.cross_cov_batch(i, j, j)[:, 3:, 3:]
    S_lm = data.chain_b.cross_cov_batch(l, m, m)[:, 3:, 3:]
    RilRlm = Ru @ R_lm
    blocks = [
        (RilRlm @ np.swapaxes(Rv, -1, -2), S_ij),
        (RilRlm, data.cov[v][:, 2:, 2:]),
        (-RilRlm, S_lm),
        (-Ru, data.cov[u][:, 2:, 2:]),
    ]
    C = np.zeros(e.shape[:-1] + (3, 3))
    for G, S in blocks:
        JG = Jr @ G
        C += JG @ S @ np.swapaxes(JG, -1, -2)
    return _quad(e, C)


def _odometry_joint(chain: OdometryChain, a, j, k) -> np.ndarray:
    Cjj = chain.cross_cov_batch(a, j, j)
    Cjk = chain.cross_cov_batch(a, j, k)
    Ckk = chain.cross_cov_batch(a, k, k)
    top = np.concatenate([Cjj, Cjk], axis=-1)
    bot = np.concatenate([np.swapaxes(Cjk, -1, -2), Ckk], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def predict_direction(ang_u, R_u, ang_v, R_v, R_ij, t_ij, R_ik, t_ik, R_lm, t_lm, R_ln, t_ln):
    """Batched prediction of the direction from a_k to b_n given measurements u=(i,l), v=(j,m).

    Returns (pred (N,2), J (N,2,34), scales (N,2), ok (N,)). ``J`` is the
    Jacobian with respect to the stacked input perturbation described in the
    module docstring; ``ok`` is False for parallel directions or a
    non-positive recovered scale.
    """
    N = ang_u.shape[0]
    a1, Du = unit_direction(ang_u[:, 0], ang_u[:, 1])
    tv, Dv = unit_direction(ang_v[:, 0], ang_v[:, 1])

    def mv(M, x):
        return np.einsum("nij,nj->ni", M, x)

    a2 = -mv(R_ij, tv)
    wv = mv(np.swapaxes(R_lm, -1, -2), t_lm)
    M = R_ij @ R_v
    b = t_ij - mv(M, wv)

    dA1 = np.zeros((N, 3, NVAR))
    dA1[:, :, 0:2] = Du
    dA2 = np.zeros((N, 3, NVAR))
    dA2[:, :, 5:7] = -R_ij @ Dv
    dA2[:, :, 13:16] = R_ij @ hat3(tv)
    db = np.zeros((N, 3, NVAR))
    db[:, :, 10:13] = R_ij
    db[:, :, 13:16] = R_ij @ hat3(mv(R_v, wv))
    db[:, :, 7:10] = M @ hat3(wv)
    db[:, :, 22:25] = -M
    db[:, :, 25:28] = -M @ hat3(wv)

    A = np.stack([a1, a2], axis=-1)  # (N,3,2)
    G = np.swapaxes(A, -1, -2) @ A
    sv = np.linalg.svd(A, compute_uv=False)
    ok = sv[:, -1] > 1e-9 * np.maximum(sv[:, 0], 1.0)
    G = np.where(ok[:, None, None], G, np.eye(2))
    Gi = np.linalg.inv(G)
    s = mv(Gi, np.einsum("nij,ni->nj", A, b))
    res = b - mv(A, s)
    dAs = dA1 * s[:, 0, None, None] + dA2 * s[:, 1, None, None]
    dAt_res = np.stack([np.einsum("ni,nij->nj", res, dA1), np.einsum("ni,nij->nj", res, dA2)], axis=1)
    ds = Gi @ (dAt_res + np.swapaxes(A, -1, -2) @ (db - dAs))  # (N,2,34)
    ok &= np.all(s > 0, axis=1)

    # position of b's pose n in a_i's frame, then seen from a_k
    p_n = s[:, 0, None] * a1 + mv(R_u, t_ln)
    dp = a1[:, :, None] * ds[:, 0, None, :] + s[:, 0, None, None] * dA1
    dp[:, :, 2:5] += -R_u @ hat3(t_ln)
    dp[:, :, 28:31] += R_u @ R_ln
    Rik_t = np.swapaxes(R_ik, -1, -2)
    d = mv(Rik_t, p_n - t_ik)
    dd = Rik_t @ dp
    dd[:, :, 16:19] -= np.eye(3)
    dd[:, :, 19:22] += hat3(d)
    pred, Jae = azimuth_elevation(d)
    return pred, Jae @ dd, s, ok


def direction_prediction(data: VisualData, u, v, w):
    """Predicted (az, el) of measurement w from measurements u and v.

    Returns (pred (N,2), J (N,2,34), scales (N,2), ok (N,), Sigma (N,34,34)).
    """
    N = len(u)
    i, l = data.a_pose[u], data.b_pose[u]
    j, m = data.a_pose[v], data.b_pose[v]
    k, n = data.a_pose[w], data.b_pose[w]
    ca, cb = data.chain_a, data.chain_b
    R_ij, t_ij = ca.relative_batch(i, j)
    R_ik, t_ik = ca.relative_batch(i, k)
    R_lm, t_lm = cb.relative_batch(l, m)
    R_ln, t_ln = cb.relative_batch(l, n)
    pred, J, s, ok = predict_direction(data.ang[u], data.R[u], data.ang[v], data.R[v],
                                       R_ij, t_ij, R_ik, t_ik, R_lm, t_lm, R_ln, t_ln)
    Sigma = np.zeros((N, NVAR, NVAR))
    Sigma[:, 0:5, 0:5] = data.cov[u]
    Sigma[:, 5:10, 5:10] = data.cov[v]
    Sigma[:, 10:22, 10:22] = _odometry_joint(ca, i, j, k)
    Sigma[:, 22:34, 22:34] = _odometry_joint(cb, l, m, n)
    return pred, J, s, ok, Sigma


def direction_scores(data: VisualData, u, v, w) -> np.ndarray:
    """2-dof score of measurement w's angles against the prediction from (u, v)."""
    pred, J, s, ok, Sigma = direction_prediction(data, u, v, w)
    e = np.stack([wrap_angle(data.ang[w, 0] - pred[:, 0]), data.ang[w, 1] - pred[:, 1]], axis=-1)
    C = J @ Sigma @ np.swapaxes(J, -1, -2) + data.cov[w][:, :2, :2]
    out = _quad(e, C)
    return np.where(ok, out, np.inf)


def visual_group3_scores(data: VisualData, idx: np.ndarray, gamma_rot: float) -> np.ndarray:
    """Worst direction score over the three roles; inf if any pair fails the rotation loop."""
    idx = np.asarray(idx, dtype=int)
    a, b, c = idx[:, 0], idx[:, 1], idx[:, 2]
    rot_ok = np.ones(len(idx), dtype=bool)
    for p, q in ((a, b), (a, c), (b, c)):
        rot_ok &= rotation_loop_scores(data, p, q) <= gamma_rot
    out = np.full(len(idx), np.inf)
    rows = np.nonzero(rot_ok)[0]
    if len(rows):
        a, b, c = a[rows], b[rows], c[rows]
        S = np.stack([direction_scores(data, b, c, a),
                      direction_scores(data, a, c, b),
                      direction_scores(data, a, b, c)], axis=1)
        out[rows] = S.max(axis=1)
    return out


def visual_rotation_metric(z_u: ScalelessRelPoseMeasurement, z_v: ScalelessRelPoseMeasurement,
                           chain_a: OdometryChain, chain_b: OdometryChain) -> float:
    data = VisualData.from_measurements([z_u, z_v], chain_a, chain_b)
    return float(rotation_loop_scores(data, np.array([0]), np.array([1]))[0])


def visual_direction_metric(z_u, z_v, z_w, chain_a: OdometryChain, chain_b: OdometryChain,
                            gamma_rot: Optional[float] = None) -> float:
    """Worst direction score over the three roles of a measurement triple."""
    data = VisualData.from_measurements([z_u, z_v, z_w], chain_a, chain_b)
    g = np.inf if gamma_rot is None else gamma_rot
    return float(visual_group3_scores(data, np.array([[0, 1, 2]]), g)[0])
