"""SE(2)/SE(3) poses with first-order covariance propagation.

Perturbations are right-sided and ordered translation first:
``T = T_mean [+] d`` with ``d = (rho, phi)`` meaning
``R = R_mean Exp(phi)`` and ``t = t_mean + R_mean rho``.
SE(2) tangent vectors are ``(x, y, theta)``, SE(3) ``(x, y, z, rx, ry, rz)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def rot2(theta) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def hat3(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return Rotation.from_rotvec(phi.reshape(-1, 3)).as_matrix().reshape(phi.shape[:-1] + (3, 3))


def so3_log(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return Rotation.from_matrix(R.reshape(-1, 3, 3)).as_rotvec().reshape(R.shape[:-2] + (3,))


def so3_right_jacobian_inv(phi) -> np.ndarray:
    """Inverse right Jacobian: d Log(R Exp(e)) / de at e = 0, with R = Exp(phi)."""
    phi = np.asarray(phi, dtype=float)
    th = np.linalg.norm(phi, axis=-1)[..., None, None]
    H = hat3(phi)
    H2 = H @ H
    small = th < 1e-6
    ths = np.where(small, 1.0, th)
    coef = np.where(small, 1.0 / 12.0,
                    1.0 / ths**2 - (1.0 + np.cos(ths)) / (2.0 * ths * np.sin(ths)))
    return np.eye(3) + 0.5 * H + coef * H2


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Rotation.from_quat(q).as_matrix()


@dataclass
class PoseWithCov:
    R: np.ndarray
    t: np.ndarray
    cov: np.ndarray = field(default=None)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if self.cov is None:
            self.cov = np.zeros((self.dof, self.dof))
        self.cov = np.asarray(self.cov, dtype=float)
        if self.R.shape != (self.dim, self.dim) or self.cov.shape != (self.dof, self.dof):
            raise ValueError("inconsistent pose dimensions")

    @property
    def dim(self) -> int:
        return self.t.shape[0]

    @property
    def dof(self) -> int:
        return 3 if self.dim == 2 else 6

    @property
    def theta(self) -> float:
        return float(np.arctan2(self.R[1, 0], self.R[0, 0]))

    @classmethod
    def se2(cls, x: float, y: float, theta: float, cov=None) -> "PoseWithCov":
        return cls(rot2(theta), np.array([x, y], dtype=float), cov)

    @classmethod
    def identity(cls, dim: int = 2, cov=None) -> "PoseWithCov":
        return cls(np.eye(dim), np.zeros(dim), cov)

    def mean_equal(self, other: "PoseWithCov", tol: float = 1e-9) -> bool:
        return bool(np.allclose(self.R, other.R, atol=tol) and np.allclose(self.t, other.t, atol=tol))


def adjoint(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Adjoint of T = (R, t) acting on (rho, phi) tangent vectors; broadcasts over leading axes."""
    dim = R.shape[-1]
    lead = R.shape[:-2]
    if dim == 2:
        A = np.zeros(lead + (3, 3))
        A[..., :2, :2] = R
        A[..., :2, 2] = -(t @ J2.T)
        A[..., 2, 2] = 1.0
        return A
    A = np.zeros(lead + (6, 6))
    A[..., :3, :3] = R
    A[..., :3, 3:] = hat3(t) @ R
    A[..., 3:, 3:] = R
    return A


def adjoint_inv(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Adjoint of T^-1."""
    Rt = np.swapaxes(R, -1, -2)
    return adjoint(Rt, -(Rt @ t[..., None])[..., 0])


def boxplus(T: PoseWithCov, d: np.ndarray) -> PoseWithCov:
    d = np.asarray(d, dtype=float)
    if T.dim == 2:
        return PoseWithCov(T.R @ rot2(d[2]), T.t + T.R @ d[:2], T.cov)
    return PoseWithCov(T.R @ so3_exp(d[3:]), T.t + T.R @ d[:3], T.cov)


def boxminus(T1: PoseWithCov, T0: PoseWithCov) -> np.ndarray:
    """Tangent d with T1 = T0 [+] d."""
    rho = T0.R.T @ (T1.t - T0.t)
    Rd = T0.R.T @ T1.R
    if T0.dim == 2:
        return np.array([rho[0], rho[1], np.arctan2(Rd[1, 0], Rd[0, 0])])
    return np.concatenate([rho, so3_log(Rd)])


def compose_jacobians(a: PoseWithCov, b: PoseWithCov) -> tuple[np.ndarray, np.ndarray]:
    return adjoint_inv(b.R, b.t), np.eye(a.dof)


def compose(a: PoseWithCov, b: PoseWithCov) -> PoseWithCov:
    """a (+) b with inputs treated as independent."""
    if a.dim != b.dim:
        raise ValueError("pose dimension mismatch")
    Ja, Jb = compose_jacobians(a, b)
    cov = Ja @ a.cov @ Ja.T + Jb @ b.cov @ Jb.T
    return PoseWithCov(a.R @ b.R, a.t + a.R @ b.t, cov)


def invert_jacobian(a: PoseWithCov) -> np.ndarray:
    return -adjoint(a.R, a.t)


def invert(a: PoseWithCov) -> PoseWithCov:
    J = invert_jacobian(a)
    return PoseWithCov(a.R.T, -a.R.T @ a.t, J @ a.cov @ J.T)


def compose_chain(poses: Sequence[PoseWithCov]) -> PoseWithCov:
    out = poses[0]
    for p in poses[1:]:
        out = compose(out, p)
    return out


def pose_error_vector(T: PoseWithCov) -> np.ndarray:
    """Tangent of T relative to the identity (translation, rotation log)."""
    return boxminus(T, PoseWithCov.identity(T.dim))


class OdometryChain:
    """Dead-reckoned trajectory with first-order joint covariance between any poses.

    ``poses`` are (R, t) estimates in a common frame; ``step_covs[s]`` is the
    covariance of the increment from pose s to s+1 (right perturbation).
    Perturbing increment s moves every later pose by the world-frame twist
    ``Ad(T_{s+1}) du``; prefix sums of those contributions give O(1) access
    to the covariance of any relative pose.
    """

    def __init__(self, Rs: np.ndarray, ts: np.ndarray, step_covs):
        self.R = np.asarray(Rs, dtype=float)
        self.t = np.asarray(ts, dtype=float)
        P = self.t.shape[0]
        self.dim = self.t.shape[1]
        self.dof = 3 if self.dim == 2 else 6
        Q = np.asarray(step_covs, dtype=float)
        if Q.ndim == 2:
            Q = np.broadcast_to(Q, (max(P - 1, 0), self.dof, self.dof))
        self.step_covs = np.array(Q)
        G = adjoint(self.R[1:], self.t[1:])
        contrib = G @ self.step_covs @ np.swapaxes(G, -1, -2)
        self.prefix = np.zeros((P, self.dof, self.dof))
        if P > 1:
            self.prefix[1:] = np.cumsum(contrib, axis=0)
        self.ad_inv = adjoint_inv(self.R, self.t)

    def __len__(self) -> int:
        return self.t.shape[0]

    @classmethod
    def from_increments(cls, start_R, start_t, inc_R, inc_t, step_covs) -> "OdometryChain":
        Rs = [np.asarray(start_R, dtype=float)]
        ts = [np.asarray(start_t, dtype=float)]
        for dR, dt in zip(inc_R, inc_t):
            ts.append(ts[-1] + Rs[-1] @ dt)
            Rs.append(Rs[-1] @ dR)
        return cls(np.array(Rs), np.array(ts), step_covs)

    def pose(self, i: int) -> PoseWithCov:
        return PoseWithCov(self.R[i], self.t[i])

    def _seg(self, a, j, k):
        """Covariance of the world twist accumulated on seg(a,j) & seg(a,k)."""
        a, j, k = np.asarray(a), np.asarray(j), np.asarray(k)
        sj, sk = np.sign(j - a), np.sign(k - a)
        same = (sj == sk) & (sj != 0)
        fwd = np.minimum(j, k)
        bwd = np.maximum(j, k)
        S = np.where((sj > 0)[..., None, None], self.prefix[fwd] - self.prefix[a],
                     self.prefix[a] - self.prefix[bwd])
        return np.where(same[..., None, None], S, 0.0)

    def relative_batch(self, i, j):
        i, j = np.asarray(i), np.asarray(j)
        Ri = np.swapaxes(self.R[i], -1, -2)
        R = Ri @ self.R[j]
        t = (Ri @ (self.t[j] - self.t[i])[..., None])[..., 0]
        return R, t

    def cross_cov_batch(self, a, j, k) -> np.ndarray:
        """Cov(d_aj, d_ak) of the relative poses a->j and a->k (right perturbations)."""
        S = self._seg(a, j, k)
        return self.ad_inv[np.asarray(j)] @ S @ np.swapaxes(self.ad_inv[np.asarray(k)], -1, -2)

    def relative(self, i: int, j: int) -> PoseWithCov:
        R, t = self.relative_batch(i, j)
        return PoseWithCov(R, t, self.cross_cov_batch(i, j, j))

    def position_cross_cov_batch(self, a, j, k) -> np.ndarray:
        """Cov(p_j, p_k) of world positions when pose a is held fixed (2-D only)."""
        S = self._seg(a, j, k)
        Bj = self._pos_map(np.asarray(j))
        Bk = self._pos_map(np.asarray(k))
        return Bj @ S @ np.swapaxes(Bk, -1, -2)

    def _pos_map(self, j):
        p = self.t[j]
        B = np.zeros(p.shape[:-1] + (2, 3))
        B[..., 0, 0] = 1.0
        B[..., 1, 1] = 1.0
        B[..., :, 2] = p @ J2.T
        return B
