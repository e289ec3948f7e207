"""Range-only consistency: closed-form trilateration and group-2/3/4 range checks.

All batch functions take a leading batch axis ``N``. Scores are squared
normalized residuals, so a check passes when ``score <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import itertools

import numpy as np

from .lie import OdometryChain

DEGENERATE_COND = 1e6
_EPS = 1e-12


class NoTrilaterationSolution(ValueError):
    pass


@dataclass(frozen=True)
class RangeMeasurement:
    pose_index: int
    beacon_id: int
    range: float
    variance: float

    def __post_init__(self):
        if self.range < 0 or self.variance <= 0:
            raise ValueError("range must be >= 0 and variance > 0")


@dataclass
class TrilaterationResult:
    candidates: list
    covs: list
    degenerate: bool
    jacobians: list = field(default_factory=list, repr=False)


# -- pose context --------------------------------------------------------------


class IndependentPoses:
    """Pose positions with independent 2x2 covariances."""

    def __init__(self, positions, covs=None):
        self.positions = np.asarray(positions, dtype=float)
        n = len(self.positions)
        if covs is None:
            covs = np.zeros((n, 2, 2))
        self.covs = np.broadcast_to(np.asarray(covs, dtype=float), (n, 2, 2))

    def joint_cov(self, pidx: np.ndarray) -> np.ndarray:
        N, m = pidx.shape
        C = np.zeros((N, 2 * m, 2 * m))
        for a in range(m):
            for b in range(m):
                same = (pidx[:, a] == pidx[:, b])[:, None, None]
                C[:, 2 * a:2 * a + 2, 2 * b:2 * b + 2] = np.where(same, self.covs[pidx[:, a]], 0.0)
        return C


class ChainPoses:
    """Positions from a dead-reckoned SE(2) chain, correlated through shared odometry."""

    def __init__(self, chain: OdometryChain):
        if chain.dim != 2:
            raise ValueError("range checks need a planar trajectory")
        self.chain = chain
        self.positions = chain.t

    def joint_cov(self, pidx: np.ndarray) -> np.ndarray:
        N, m = pidx.shape
        anchor = pidx.min(axis=1)
        C = np.zeros((N, 2 * m, 2 * m))
        for a in range(m):
            for b in range(a, m):
                blk = self.chain.position_cross_cov_batch(anchor, pidx[:, a], pidx[:, b])
                C[:, 2 * a:2 * a + 2, 2 * b:2 * b + 2] = blk
                if b != a:
                    C[:, 2 * b:2 * b + 2, 2 * a:2 * a + 2] = np.swapaxes(blk, -1, -2)
        return C


@dataclass
class RangeData:
    """Column arrays for a measurement list plus the pose context."""

    pose: np.ndarray
    beacon: np.ndarray
    r: np.ndarray
    var: np.ndarray
    context: object

    @classmethod
    def from_measurements(cls, ms: Sequence[RangeMeasurement], context) -> "RangeData":
        return cls(np.array([m.pose_index for m in ms], dtype=int),
                   np.array([m.beacon_id for m in ms], dtype=int),
                   np.array([m.range for m in ms], dtype=float),
                   np.array([m.variance for m in ms], dtype=float),
                   context)

    def gather(self, idx: np.ndarray):
        pidx = self.pose[idx]
        P = self.context.positions[pidx]
        return pidx, P, self.r[idx], self.var[idx]


# -- trilateration ---------------------------------------------------------------


def _radical_center(P: np.ndarray, r: np.ndarray):
    """Linear solve of the pairwise-differenced circle equations.

    Returns (x, Jx, cond) with Jx (N,2,9) over (p1,p2,p3,r1,r2,r3).
    """
    N = P.shape[0]
    A = 2.0 * (P[:, 1:, :] - P[:, :1, :])
    sq = np.einsum("nij,nij->ni", P, P)
    b = r[:, :1] ** 2 - r[:, 1:] ** 2 + sq[:, 1:] - sq[:, :1]
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    fro2 = np.einsum("nij,nij->n", A, A)
    # 2x2 condition number from the singular values
    disc = np.sqrt(np.maximum(fro2**2 - 4.0 * det**2, 0.0))
    smax = np.sqrt(0.5 * (fro2 + disc))
    smin = np.sqrt(np.maximum(0.5 * (fro2 - disc), 0.0))
    cond = np.where(smin > _EPS * np.maximum(smax, 1.0), smax / np.maximum(smin, 1e-300), np.inf)
    ok = np.isfinite(cond) & (cond <= DEGENERATE_COND)
    safe_det = np.where(ok, det, 1.0)
    Ainv = np.empty_like(A)
    Ainv[:, 0, 0] = A[:, 1, 1]
    Ainv[:, 1, 1] = A[:, 0, 0]
    Ainv[:, 0, 1] = -A[:, 0, 1]
    Ainv[:, 1, 0] = -A[:, 1, 0]
    Ainv /= safe_det[:, None, None]
    x = np.einsum("nij,nj->ni", Ainv, b)
    M = np.zeros((N, 2, 9))
    for row in range(2):
        j = row + 1
        M[:, row, 0:2] = -2.0 * (P[:, 0] - x)
        M[:, row, 2 * j:2 * j + 2] = 2.0 * (P[:, j] - x)
        M[:, row, 6] = 2.0 * r[:, 0]
        M[:, row, 6 + j] = -2.0 * r[:, j]
    Jx = Ainv @ M
    return x, Jx, cond, ok


def _pair_select(P3: np.ndarray):
    """Indices (a, b) of the two most separated centres in each row of ``P3``."""
    pairs = np.array([(0, 1), (0, 2), (1, 2)])
    dist = np.stack([np.hypot(*(P3[:, b] - P3[:, a]).T) for a, b in pairs], axis=1)
    best = pairs[np.argmax(dist, axis=1)]
    return best[:, 0], best[:, 1]


def _two_circle(c1, c2, r1, r2):
    """Batched intersections of two circles.

    Returns ``X`` (N,2,2) with both candidates along axis 1, Jacobians
    ``J`` (N,2,2,6) over (c1, c2, r1, r2), the squared half-chord ``h2``
    (negative when the circles miss each other; the points are then clamped
    to the tangent point) and a mask of rows whose Jacobian is finite.
    """
    d_vec = c2 - c1
    d = np.hypot(d_vec[:, 0], d_vec[:, 1])
    dd = np.maximum(d, _EPS)
    u = d_vec / dd[:, None]
    perp = np.stack([-u[:, 1], u[:, 0]], axis=1)
    a = (r1**2 - r2**2 + d**2) / (2.0 * dd)
    h2 = r1**2 - a**2
    h = np.sqrt(np.maximum(h2, 0.0))
    base = c1 + a[:, None] * u
    X = np.stack([base + h[:, None] * perp, base - h[:, None] * perp], axis=1)
    e1 = X - c1[:, None]
    e2 = X - c2[:, None]
    # F dx = -G dtheta with F = 2 [e1; e2]
    det = 4.0 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    scale = 4.0 * np.maximum(np.linalg.norm(e1, axis=-1) * np.linalg.norm(e2, axis=-1), _EPS)
    finite = (np.abs(det) > 1e-9 * scale) & (d > _EPS)[:, None]
    sdet = np.where(finite, det, 1.0)
    Finv = np.empty(X.shape[:2] + (2, 2))
    Finv[..., 0, 0] = 2.0 * e2[..., 1]
    Finv[..., 0, 1] = -2.0 * e1[..., 1]
    Finv[..., 1, 0] = -2.0 * e2[..., 0]
    Finv[..., 1, 1] = 2.0 * e1[..., 0]
    Finv /= sdet[..., None, None]
    G = np.zeros(X.shape[:2] + (2, 6))
    G[..., 0, 0:2] = -2.0 * e1
    G[..., 1, 2:4] = -2.0 * e2
    G[..., 0, 4] = -2.0 * r1[:, None]
    G[..., 1, 5] = -2.0 * r2[:, None]
    J = -Finv @ G
    return X, J, h2, finite


def _fallback_candidates(P3: np.ndarray, r3: np.ndarray):
    """Intersect the two most separated of three circles, row by row.

    Jacobians are expanded to the (p1,p2,p3,r1,r2,r3) layout: ``X`` (N,2,2),
    ``J`` (N,2,2,9), plus ``h2`` and the finite-Jacobian mask of
    :func:`_two_circle` and the chosen pair.
    """
    n = np.arange(P3.shape[0])
    a, b = _pair_select(P3)
    X, J6, h2, finite = _two_circle(P3[n, a], P3[n, b], r3[n, a], r3[n, b])
    J = np.zeros(X.shape[:2] + (2, 9))
    for slot in range(3):
        for src, off in ((a, 0), (b, 2)):
            rows = src == slot
            J[rows, :, :, 2 * slot:2 * slot + 2] = J6[rows, :, :, off:off + 2]
            J[rows, :, :, 6 + slot] = J6[rows, :, :, 4 + off // 2]
    return X, J, h2, finite, (a, b)


def _miss_score(P3, r3, var3, a, b, h2):
    """How far the chosen pair of circles is from intersecting, in sigmas squared."""
    n = np.arange(P3.shape[0])
    d = np.hypot(*(P3[n, b] - P3[n, a]).T)
    ra, rb = r3[n, a], r3[n, b]
    viol = np.maximum.reduce([np.zeros_like(d), d - (ra + rb), np.abs(ra - rb) - d])
    return np.where(h2 >= 0, 0.0, viol**2 / (var3[n, a] + var3[n, b]))


def trilaterate(positions, ranges, variances=None, positions_cov=None) -> TrilaterationResult:
    """Beacon position from three range circles.

    Well-conditioned centres give one candidate from the linear radical-centre
    solve; near-collinear or coincident centres give up to two candidates
    from a two-circle intersection and ``degenerate=True``.
    """
    P = np.asarray(positions, dtype=float).reshape(1, 3, 2)
    r = np.asarray(ranges, dtype=float).reshape(1, 3)
    var = np.ones(3) * 1e-12 if variances is None else np.asarray(variances, dtype=float)
    Sp = np.zeros((6, 6)) if positions_cov is None else np.asarray(positions_cov, dtype=float)
    Sigma = np.zeros((9, 9))
    Sigma[:6, :6] = Sp
    Sigma[6:, 6:] = np.diag(var)
    x, Jx, cond, ok = _radical_center(P, r)
    if ok[0]:
        J = Jx[0]
        return TrilaterationResult([x[0]], [J @ Sigma @ J.T], False, [J])
    X, J, h2, finite, (a, b) = _fallback_candidates(P, r)
    if _miss_score(P, r, var[None], a, b, h2)[0] > 9.0:
        raise NoTrilaterationSolution("range circles do not intersect")
    n_pts = 2 if h2[0] > 0 else 1
    pts = [X[0, c] for c in range(n_pts)]
    jacs = [J[0, c] for c in range(n_pts)]
    return TrilaterationResult(pts, [Jc @ Sigma @ Jc.T for Jc in jacs], True, jacs)


# -- group checks ----------------------------------------------------------------


def _leave_one_out_scores(P, r, var, C, held: int, gate: float = 9.0):
    """Score of predicting measurement ``held`` from the other three (N,)."""
    N = P.shape[0]
    tri = [i for i in range(4) if i != held]
    P3, r3, var3 = P[:, tri], r[:, tri], var[:, tri]
    x, Jx, cond, ok = _radical_center(P3, r3)
    scores = np.full(N, np.inf)
    rows = np.nonzero(ok)[0]
    if len(rows):
        scores[rows] = _predict_score(x[rows], Jx[rows], P[rows], r[rows], var[rows], C[rows], tri, held)
    rows = np.nonzero(~ok)[0]
    if len(rows):
        scores[rows] = _fallback_score(P[rows], r[rows], var[rows], C[rows], tri, held, gate)
    return scores


def _fallback_score(P, r, var, C, tri, held, gate):
    """Best prediction of ``held`` over the two-circle candidates of ``tri``.

    Rows whose chosen circles miss each other by more than ``gate`` score inf,
    rows with a tangent (rank-deficient) intersection score 0.
    """
    P3, r3, var3 = P[:, tri], r[:, tri], var[:, tri]
    X, J, h2, finite, (a, b) = _fallback_candidates(P3, r3)
    s = np.stack([_predict_score(X[:, c], J[:, c], P, r, var, C, tri, held) for c in range(2)], axis=1)
    s = np.where(finite, s, 0.0).min(axis=1)
    return np.where(_miss_score(P3, r3, var3, a, b, h2) > gate, np.inf, s)


def _predict_score(x, Jx, P, r, var, C, tri, held):
    N, M = P.shape[:2]
    diff = x - P[:, held]
    h = np.hypot(diff[:, 0], diff[:, 1])
    u = diff / np.maximum(h, _EPS)[:, None]
    dh = np.einsum("ni,nij->nj", u, Jx)  # (N,9)
    g_pos = np.zeros((N, 2 * M))
    g_r = np.zeros((N, M))
    for slot, m in enumerate(tri):
        g_pos[:, 2 * m:2 * m + 2] = dh[:, 2 * slot:2 * slot + 2]
        g_r[:, m] = dh[:, 6 + slot]
    g_pos[:, 2 * held:2 * held + 2] = -u
    # residual e = r_held - h
    var_e = (np.einsum("ni,nij,nj->n", g_pos, C, g_pos)
             + np.einsum("ni,ni->n", g_r**2, var) + var[:, held])
    e = r[:, held] - h
    return e**2 / np.maximum(var_e, _EPS)


def group4_scores(P, r, var, C, aggregate: str = "all") -> np.ndarray:
    """Worst (``all``) or best (``any``) leave-one-out score over the four permutations."""
    S = np.stack([_leave_one_out_scores(P, r, var, C, d) for d in range(4)], axis=1)
    return S.max(axis=1) if aggregate == "all" else S.min(axis=1)


def group3_scores(P, r, var, C) -> np.ndarray:
    """Predict the third range from the two most separated circles.

    Takes the better of the two intersection candidates. Tangent or missing
    intersections score 0 here and are left to the pair check.
    """
    X, J, h2, finite, (a, b) = _fallback_candidates(P, r)
    n = np.arange(P.shape[0])
    third = 3 - a - b
    s = np.full((P.shape[0], 2), np.inf)
    for held in range(3):
        rows = third == held
        if not rows.any():
            continue
        tri = [i for i in range(3) if i != held]
        # layout of _predict_score: slots of `tri` take the pair's Jacobian columns
        Jt = np.zeros(J[rows].shape[:2] + (2, 9))
        for slot, m in enumerate(tri):
            Jt[..., 2 * slot:2 * slot + 2] = J[rows][..., 2 * m:2 * m + 2]
            Jt[..., 6 + slot] = J[rows][..., 6 + m]
        for c in range(2):
            s[rows, c] = _predict_score(X[rows, c], Jt[:, c], P[rows], r[rows], var[rows],
                                        C[rows], tri, held)
    s = np.where(finite & (h2 >= 0)[:, None], s, 0.0)
    return s.min(axis=1)


def group2_scores(P, r, var, C) -> np.ndarray:
    """Annulus-overlap violation of two circles, normalized by the combined std."""
    dv = P[:, 0] - P[:, 1]
    d = np.hypot(dv[:, 0], dv[:, 1])
    Cd = C[:, 0:2, 0:2] + C[:, 2:4, 2:4] - C[:, 0:2, 2:4] - C[:, 2:4, 0:2]
    u = dv / np.maximum(d, _EPS)[:, None]
    var_d = np.where(d > _EPS, np.einsum("ni,nij,nj->n", u, Cd, u),
                     0.5 * np.trace(Cd, axis1=1, axis2=2))
    sigma2 = var[:, 0] + var[:, 1] + var_d
    viol = np.maximum.reduce([np.zeros_like(d), d - (r[:, 0] + r[:, 1]), np.abs(r[:, 0] - r[:, 1]) - d])
    return viol**2 / np.maximum(sigma2, _EPS)


def _scored(data: RangeData, idx: np.ndarray, fn, association: bool) -> np.ndarray:
    idx = np.asarray(idx, dtype=int)
    pidx, P, r, var = data.gather(idx)
    C = data.context.joint_cov(pidx)
    s = fn(P, r, var, C)
    if not association:
        b = data.beacon[idx]
        s = np.where(np.all(b == b[:, :1], axis=1), s, np.inf)
    return s


def range_group4_metric(data: RangeData, idx, association: bool = False, aggregate: str = "all"):
    return _scored(data, idx, lambda P, r, v, C: group4_scores(P, r, v, C, aggregate), association)


def range_leave_one_out_metric(data: RangeData, idx, held: int, association: bool = False):
    """Score of predicting column ``held`` of ``idx`` from the other three."""
    return _scored(data, idx, lambda P, r, v, C: _leave_one_out_scores(P, r, v, C, held), association)


def range_group4_gated_metric(data: RangeData, idx, gate: float, association: bool = False,
                              aggregate: str = "all"):
    """Group-4 score that is inf unless every sub-pair and sub-triple scores ``<= gate``.

    The sub-checks are the same functions a hierarchical build runs on its own,
    so a quadruple passes here exactly when it would survive the prefilters
    and pass the leave-one-out test.
    """
    idx = np.asarray(idx, dtype=int)
    alive = np.ones(len(idx), dtype=bool)
    for order, fn in ((2, range_group2_metric), (3, range_group3_metric)):
        for cols in itertools.combinations(range(4), order):
            rows = np.nonzero(alive)[0]
            if len(rows) == 0:
                break
            alive[rows] = fn(data, idx[rows][:, cols], association) <= gate
    out = np.full(len(idx), np.inf)
    rows = np.nonzero(alive)[0]
    if len(rows):
        out[rows] = range_group4_metric(data, idx[rows], association, aggregate)
    return out


def range_group3_metric(data: RangeData, idx, association: bool = False):
    return _scored(data, idx, group3_scores, association)


def range_group2_metric(data: RangeData, idx, association: bool = False):
    return _scored(data, idx, group2_scores, association)


def make_range_data(measurements: Sequence[RangeMeasurement], context) -> RangeData:
    return RangeData.from_measurements(measurements, context)


def predicted_range_jacobian(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """d|x - p| / d(x, p) as a 4-vector."""
    diff = np.asarray(x, dtype=float) - np.asarray(p, dtype=float)
    u = diff / max(np.hypot(*diff), _EPS)
    return np.concatenate([u, -u])
