"""Seeded synthetic worlds with labelled inlier/outlier measurements."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np

from ..metrics.families import ScalarMeasurement
from ..metrics.lie import OdometryChain, rot2, so3_exp, so3_log, wrap_angle
from ..metrics.range import ChainPoses, RangeMeasurement
from ..metrics.visual import ScalelessRelPoseMeasurement

log = logging.getLogger(__name__)

KINDS = ("one_d", "range2d", "visual3d", "planted_clique")
TRAJECTORIES = ("manhattan", "circle", "line")


class WorldGenerationError(RuntimeError):
    pass


@dataclass
class WorldSpec:
    kind: str = "range2d"
    trajectory: str = "manhattan"
    n_poses: int = 75
    n_beacons: int = 1
    odom_std: float = 0.01
    odom_rot_std: float = 0.002
    range_std: float = 0.05
    angle_std: float = 0.01
    rot_std: float = 0.01
    n_random: int = 30
    n_clustered: int = 30
    cluster_size: int = 5
    beacon_margin: float = 3.0
    seed: int = 0
    # one_d
    n_inliers: int = 10
    n_alias: int = 4
    alias_offset: float = 10.0
    # visual3d
    n_measurements: int = 100
    inlier_fraction: float = 0.25
    proximity: float = 0.5
    area: float = 10.0
    max_retries: int = 20

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown world kind {self.kind!r}")
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        for name in ("n_poses", "n_beacons", "n_random", "n_clustered", "n_inliers", "n_alias",
                     "n_measurements"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("odom_std", "odom_rot_std", "range_std", "angle_std", "rot_std"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.cluster_size < 1:
            raise ValueError("cluster_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def for_kind(cls, kind: str, **overrides) -> "WorldSpec":
        """Spec with the per-kind default parameters, then ``overrides`` applied."""
        base = dict(KIND_DEFAULTS.get(kind, {}))
        base.update(overrides)
        return cls(kind=kind, **base)


# The visual check recovers metric scale from sub-metre baselines, so its
# world uses much tighter odometry than the planar range world.
KIND_DEFAULTS = {
    "one_d": dict(n_inliers=10, n_alias=4, n_random=1, range_std=0.1, alias_offset=10.0),
    "range2d": dict(n_poses=75, n_beacons=1, n_random=30, n_clustered=30, cluster_size=5,
                    range_std=0.05, beacon_margin=3.0, odom_std=0.01, odom_rot_std=0.002),
    "visual3d": dict(n_poses=100, n_measurements=100, inlier_fraction=0.25, proximity=0.5,
                     area=10.0, angle_std=0.003, rot_std=0.003, odom_std=0.001,
                     odom_rot_std=0.0002),
}


@dataclass
class LabeledMeasurementSet:
    measurements: list
    labels: np.ndarray  # True = inlier
    ground_truth: dict
    context: Any = None
    spec: Optional[WorldSpec] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=bool)
        if len(self.labels) != len(self.measurements):
            raise ValueError("labels and measurements differ in length")

    @property
    def inliers(self) -> list[int]:
        return [int(i) for i in np.nonzero(self.labels)[0]]


def _rng(spec: WorldSpec) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(spec.seed))


# -- 1-D ------------------------------------------------------------------------


def gen_1d_world(spec: WorldSpec) -> LabeledMeasurementSet:
    """Direct scalar observations: an inlier group, one aliased group and random outliers."""
    if spec.kind != "one_d":
        raise ValueError("gen_1d_world needs kind='one_d'")
    rng = _rng(spec)
    sigma = spec.range_std
    x_true = rng.uniform(-10, 10)
    x_alias = x_true + spec.alias_offset * rng.choice([-1.0, 1.0])
    vals, vars_, labels = [], [], []
    for _ in range(spec.n_inliers):
        vals.append(rng.normal(x_true, sigma))
        vars_.append(sigma**2)
        labels.append(True)
    for _ in range(spec.n_alias):
        vals.append(rng.normal(x_alias, sigma))
        vars_.append(sigma**2)
        labels.append(False)
    for _ in range(spec.n_random):
        s = sigma * np.exp(rng.uniform(np.log(0.5), np.log(5.0)))
        mu = x_true + rng.uniform(-2 * spec.alias_offset, 2 * spec.alias_offset)
        vals.append(rng.normal(mu, s))
        vars_.append(s**2)
        labels.append(False)
    order = rng.permutation(len(vals))
    ms = [ScalarMeasurement(float(vals[o]), float(vars_[o])) for o in order]
    labels = np.array(labels)[order]
    chi2 = np.array([(m.value - x_true) ** 2 / m.variance for m in ms])
    return LabeledMeasurementSet(ms, labels, {"x": x_true, "x_alias": x_alias, "chi2": chi2},
                                 None, spec)


# -- planar range world -------------------------------------------------------------


def planar_trajectory(kind: str, n: int, rng: np.random.Generator,
                      turn_prob: float = 0.25, radius: float = 10.0):
    """True planar poses (theta, xy) and body-frame increments."""
    if n < 1:
        raise ValueError("need at least one pose")
    th = np.zeros(n)
    xy = np.zeros((n, 2))
    if kind == "manhattan":
        for s in range(1, n):
            heading = th[s - 1]
            if rng.random() < turn_prob:
                heading += rng.choice([-np.pi / 2, np.pi / 2])
            th[s] = heading
            xy[s] = xy[s - 1] + np.array([np.cos(heading), np.sin(heading)])
    elif kind == "circle":
        a = 2 * np.pi * np.arange(n) / n
        xy = radius * np.stack([np.cos(a), np.sin(a)], axis=1)
        th = a + np.pi / 2
    elif kind == "line":
        xy[:, 0] = np.arange(n, dtype=float)
    else:
        raise ValueError(f"unknown trajectory {kind!r}")
    return wrap_angle(th), xy


def _dead_reckon(th, xy, spec: WorldSpec, rng) -> OdometryChain:
    """Noisy odometry increments integrated from the true start pose."""
    n = len(th)
    inc_R, inc_t = [], []
    for s in range(n - 1):
        R0 = rot2(th[s])
        dt = R0.T @ (xy[s + 1] - xy[s]) + rng.normal(0, spec.odom_std, 2)
        dth = wrap_angle(th[s + 1] - th[s]) + rng.normal(0, spec.odom_rot_std)
        inc_R.append(rot2(dth))
        inc_t.append(dt)
    Q = np.diag([spec.odom_std**2, spec.odom_std**2, spec.odom_rot_std**2])
    return OdometryChain.from_increments(rot2(th[0]), xy[0], inc_R, inc_t, Q)


def gen_range_world(spec: WorldSpec) -> LabeledMeasurementSet:
    """Robot taking one range to every beacon at every pose; some ranges corrupted.

    Clustered outliers in groups of ``cluster_size`` are exact ranges (plus
    noise) to a phantom beacon, so each group is self-consistent. Random
    outliers are Gaussian around a uniformly drawn mean with the inlier
    variance.
    """
    if spec.kind != "range2d":
        raise ValueError("gen_range_world needs kind='range2d'")
    rng = _rng(spec)
    th, xy = planar_trajectory(spec.trajectory, spec.n_poses, rng)
    chain = _dead_reckon(th, xy, spec, rng)
    lo, hi = xy.min(axis=0) - spec.beacon_margin, xy.max(axis=0) + spec.beacon_margin
    beacons = rng.uniform(lo, hi, size=(spec.n_beacons, 2))
    var = spec.range_std**2
    slots = [(p, b) for p in range(spec.n_poses) for b in range(spec.n_beacons)]
    m = len(slots)
    n_bad = spec.n_random + spec.n_clustered
    if n_bad > m:
        raise WorldGenerationError(f"{n_bad} outliers requested but only {m} measurements")
    true_r = np.array([np.hypot(*(xy[p] - beacons[b])) for p, b in slots])
    ranges = np.abs(true_r + rng.normal(0, spec.range_std, m))
    labels = np.ones(m, dtype=bool)
    source = np.array([b for _, b in slots])  # beacon that actually produced the range
    bad = rng.permutation(m)[:n_bad]
    clustered, random_ = bad[:spec.n_clustered], bad[spec.n_clustered:]
    phantoms = []
    for c0 in range(0, len(clustered), spec.cluster_size):
        ph = rng.uniform(lo, hi)
        phantoms.append(ph)
        for s in clustered[c0:c0 + spec.cluster_size]:
            p = slots[s][0]
            ranges[s] = abs(np.hypot(*(xy[p] - ph)) + rng.normal(0, spec.range_std))
            labels[s] = False
            source[s] = -1 - (len(phantoms) - 1)
    r_max = 1.5 * float(true_r.max()) if m else 1.0
    for s in random_:
        ranges[s] = abs(rng.normal(rng.uniform(0, r_max), spec.range_std))
        labels[s] = False
        source[s] = -1000
    ms = [RangeMeasurement(p, b, float(ranges[s]), var) for s, (p, b) in enumerate(slots)]
    chi2 = (ranges - true_r) ** 2 / var
    gt = {"poses_xy": xy, "poses_theta": th, "beacons": beacons, "phantoms": np.array(phantoms),
          "source": source, "true_range": true_r, "chi2": chi2}
    return LabeledMeasurementSet(ms, labels, gt, ChainPoses(chain), spec)


# -- two-agent scaleless visual world ---------------------------------------------------


def _rotz(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def manhattan_3d(n: int, rng, area: float, start, heading: float,
                 z_std: float = 0.05, tilt_std: float = 0.02, turn_prob: float = 0.25):
    """Unit-step planar Manhattan walk kept inside a centred square, with small z and tilt jitter.

    The grid axes follow the initial ``heading``.
    """
    xy = np.zeros((n, 2))
    xy[0] = start
    head = np.zeros(n)
    head[0] = heading
    for s in range(1, n):
        h = head[s - 1]
        if rng.random() < turn_prob:
            h += rng.choice([-np.pi / 2, np.pi / 2])
        for _ in range(4):
            nxt = xy[s - 1] + np.array([np.cos(h), np.sin(h)])
            if np.all(np.abs(nxt) <= area / 2):
                break
            h += np.pi / 2
        head[s] = h
        xy[s] = nxt
    Rs = np.array([_rotz(h) @ so3_exp(np.array([*rng.normal(0, tilt_std, 2), 0.0]))
                   for h in head])
    ts = np.column_stack([xy, rng.normal(0, z_std, n)])
    return Rs, ts


def _dead_reckon_3d(Rs, ts, spec: WorldSpec, rng) -> OdometryChain:
    n = len(ts)
    inc_R, inc_t = [], []
    for s in range(n - 1):
        dR = Rs[s].T @ Rs[s + 1]
        dt = Rs[s].T @ (ts[s + 1] - ts[s])
        inc_R.append(dR @ so3_exp(rng.normal(0, spec.odom_rot_std, 3)))
        inc_t.append(dt + rng.normal(0, spec.odom_std, 3))
    Q = np.diag([spec.odom_std**2] * 3 + [spec.odom_rot_std**2] * 3)
    return OdometryChain.from_increments(Rs[0], ts[0], inc_R, inc_t, Q)


def _direction_angles(d):
    return np.arctan2(d[1], d[0]), np.arctan2(d[2], np.hypot(d[0], d[1]))


def gen_visual_world(spec: WorldSpec) -> LabeledMeasurementSet:
    """Two robots on Manhattan paths in a shared area; inter-robot bearing+rotation measurements.

    Inliers come from pose pairs closer than ``proximity``. Outliers pair
    random poses with a random direction and a random heading.
    """
    if spec.kind != "visual3d":
        raise ValueError("gen_visual_world needs kind='visual3d'")
    n_in = int(round(spec.inlier_fraction * spec.n_measurements))
    n_out = spec.n_measurements - n_in
    seq = np.random.SeedSequence(spec.seed)
    for attempt, child in enumerate(seq.spawn(spec.max_retries)):
        rng = np.random.default_rng(child)
        half = spec.area / 2
        Ra, ta = manhattan_3d(spec.n_poses, rng, spec.area,
                              np.round(rng.uniform(-half, half, 2)), rng.choice(4) * np.pi / 2)
        # robot b walks on its own rotated grid; its odometry frame B is
        # related to a's frame by a random yaw and offset
        yaw = rng.uniform(-np.pi, np.pi)
        Rb_w, tb_w = manhattan_3d(spec.n_poses, rng, spec.area,
                                  rng.uniform(-half, half, 2), yaw)
        R_AB = _rotz(rng.uniform(-np.pi, np.pi))
        t_AB = np.array([*rng.uniform(-half, half, 2), 0.0])
        Rb_loc = R_AB.T @ Rb_w
        tb_loc = (tb_w - t_AB) @ R_AB
        dist = np.linalg.norm(ta[:, None, :] - tb_w[None, :, :], axis=2)
        pairs = np.argwhere((dist < spec.proximity) & (dist > 0.02))
        if len(pairs) >= n_in:
            break
        log.info("visual world attempt %d: %d close pairs < %d, regenerating",
                 attempt, len(pairs), n_in)
    else:
        raise WorldGenerationError("could not generate enough close inter-robot pairs")

    chain_a = _dead_reckon_3d(Ra, ta, spec, rng)
    chain_b = _dead_reckon_3d(Rb_loc, tb_loc, spec, rng)
    cov = np.diag([spec.angle_std**2] * 2 + [spec.rot_std**2] * 3)
    chosen = pairs[rng.permutation(len(pairs))[:n_in]]
    ms, labels, chi2 = [], [], []
    for i, l in chosen:
        R_il = Ra[i].T @ Rb_w[l]
        d = Ra[i].T @ (tb_w[l] - ta[i])
        az, el = _direction_angles(d)
        e = rng.normal(0, spec.angle_std, 2)
        ph = rng.normal(0, spec.rot_std, 3)
        ms.append(ScalelessRelPoseMeasurement(int(i), int(l), float(wrap_angle(az + e[0])),
                                              float(np.clip(el + e[1], -np.pi / 2, np.pi / 2)),
                                              R_il @ so3_exp(ph), cov))
        labels.append(True)
    for _ in range(n_out):
        i, l = int(rng.integers(spec.n_poses)), int(rng.integers(spec.n_poses))
        R_fake = _rotz(rng.uniform(-np.pi, np.pi)) @ so3_exp(np.array([*rng.normal(0, 0.02, 2), 0.0]))
        ms.append(ScalelessRelPoseMeasurement(i, l, float(rng.uniform(-np.pi, np.pi)),
                                              float(rng.uniform(-0.5, 0.5)), R_fake, cov))
        labels.append(False)
    order = rng.permutation(len(ms))
    ms = [ms[o] for o in order]
    labels = np.array(labels)[order]
    for z in ms:
        R_il = Ra[z.a_pose].T @ Rb_w[z.b_pose]
        d = Ra[z.a_pose].T @ (tb_w[z.b_pose] - ta[z.a_pose])
        az, el = _direction_angles(d)
        r = np.array([wrap_angle(z.azimuth - az), z.elevation - el])
        phi = so3_log(R_il.T @ z.rotation)
        chi2.append((r @ r / spec.angle_std**2 + phi @ phi / spec.rot_std**2) / 5.0)
    gt = {"Ra": Ra, "ta": ta, "Rb": Rb_w, "tb": tb_w, "R_AB": R_AB, "t_AB": t_AB,
          "chi2": np.array(chi2), "attempts": attempt + 1}
    return LabeledMeasurementSet(ms, labels, gt, (chain_a, chain_b), spec)


def generate(spec: WorldSpec) -> LabeledMeasurementSet:
    if spec.kind == "one_d":
        return gen_1d_world(spec)
    if spec.kind == "range2d":
        return gen_range_world(spec)
    if spec.kind == "visual3d":
        return gen_visual_world(spec)
    raise ValueError(f"world kind {spec.kind!r} is not a measurement world")
