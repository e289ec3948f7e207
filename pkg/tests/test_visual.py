import itertools

import numpy as np
import pytest

from gkcm.metrics.chi2 import chi2_quantile
from gkcm.metrics.families import visual_family
from gkcm.metrics.lie import OdometryChain, PoseWithCov, boxminus, random_rotation, so3_exp
from gkcm.metrics.visual import (DegenerateConfiguration, ScalelessRelPoseMeasurement, VisualData,
                                 apply_scale, azimuth_elevation, direction_scores,
                                 predict_direction, recover_scale, rotation_loop_scores,
                                 unit_direction, visual_direction_metric, visual_rotation_metric)
from gkcm.sim import WorldSpec, gen_visual_world

H = 1e-6
COV = np.diag([0.003**2] * 2 + [0.003**2] * 3)
G_ROT = chi2_quantile(3, 0.95)
G_DIR = chi2_quantile(2, 0.95)


def fd(f, x0):
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for i in range(len(x0)):
        e = np.zeros_like(x0)
        e[i] = H
        cols.append((np.asarray(f(x0 + e)) - np.asarray(f(x0 - e))) / (2 * H))
    return np.stack(cols, axis=-1)


def rel_err(A, B):
    return np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-12)


def angles(d):
    return np.arctan2(d[1], d[0]), np.arctan2(d[2], np.hypot(d[0], d[1]))


def exact_world(seed, n_meas=12):
    """Noise-free measurements over a generated world, with realistic covariances attached."""
    w = gen_visual_world(WorldSpec.for_kind("visual3d", n_measurements=n_meas, inlier_fraction=1.0,
                                            seed=seed))
    gt = w.ground_truth
    Rb_loc = gt["R_AB"].T @ gt["Rb"]
    tb_loc = (gt["tb"] - gt["t_AB"]) @ gt["R_AB"]
    Q = np.diag([0.001**2] * 3 + [0.0002**2] * 3)
    ca = OdometryChain(gt["Ra"], gt["ta"], Q)
    cb = OdometryChain(Rb_loc, tb_loc, Q)
    ms = []
    for z in w.measurements:
        i, l = z.a_pose, z.b_pose
        d = gt["Ra"][i].T @ (gt["tb"][l] - gt["ta"][i])
        az, el = angles(d)
        ms.append(ScalelessRelPoseMeasurement(i, l, az, el, gt["Ra"][i].T @ gt["Rb"][l], COV))
    return ms, ca, cb, gt


# -- angle helpers ----------------------------------------------------------------------


def test_direction_angle_limits():
    np.testing.assert_allclose(azimuth_elevation([1.0, 0.0, 0.0])[0], [0.0, 0.0])
    assert azimuth_elevation([0.0, 0.0, 1.0])[0][1] == pytest.approx(np.pi / 2)
    assert azimuth_elevation([0.0, 2.0, 0.0])[0][0] == pytest.approx(np.pi / 2)


def test_unit_direction_uses_sine_of_elevation():
    rng = np.random.default_rng(0)
    for az, el in rng.uniform([-np.pi, -1.5], [np.pi, 1.5], (50, 2)):
        u, _ = unit_direction(az, el)
        assert u[2] == pytest.approx(np.sin(el))
        assert np.linalg.norm(u) == pytest.approx(1.0)
        np.testing.assert_allclose(azimuth_elevation(u)[0], [az, el], atol=1e-12)


def test_angle_jacobians_finite_difference():
    rng = np.random.default_rng(1)
    for _ in range(100):
        ae = rng.uniform([-np.pi, -1.4], [np.pi, 1.4])
        assert rel_err(unit_direction(*ae)[1], fd(lambda x: unit_direction(*x)[0], ae)) < 1e-5
        d = rng.normal(size=3)
        assert rel_err(azimuth_elevation(d)[1], fd(lambda x: azimuth_elevation(x)[0], d)) < 1e-5


def test_apply_scale_jacobian_finite_difference():
    rng = np.random.default_rng(2)
    for _ in range(100):
        az, el, s = rng.uniform(-np.pi, np.pi), rng.uniform(-1.4, 1.4), rng.uniform(0.2, 5)
        R0 = random_rotation(rng)
        R, t, Hs = apply_scale(az, el, R0, s)
        base = PoseWithCov(R, t)

        def f(x):
            Rp, tp, _ = apply_scale(az + x[0], el + x[1], R0 @ so3_exp(x[2:5]), s + x[5])
            return boxminus(PoseWithCov(Rp, tp), base)

        assert rel_err(Hs, fd(f, np.zeros(6))) < 1e-5


def _perturbed_prediction(args, x):
    a = dict(args)
    a["ang_u"] = args["ang_u"] + x[0:2]
    a["R_u"] = args["R_u"] @ so3_exp(x[2:5])
    a["ang_v"] = args["ang_v"] + x[5:7]
    a["R_v"] = args["R_v"] @ so3_exp(x[7:10])
    for name, o in (("ij", 10), ("ik", 16), ("lm", 22), ("ln", 28)):
        R, t = args["R_" + name][0], args["t_" + name][0]
        a["t_" + name] = (t + R @ x[o:o + 3])[None]
        a["R_" + name] = (R @ so3_exp(x[o + 3:o + 6]))[None]
    return predict_direction(**a)


def test_direction_prediction_jacobian_finite_difference():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 100:
        rr = lambda: random_rotation(rng)[None]
        args = dict(ang_u=rng.uniform(-1, 1, (1, 2)), R_u=rr(), ang_v=rng.uniform(-1, 1, (1, 2)),
                    R_v=rr(), R_ij=rr(), t_ij=rng.normal(size=(1, 3)), R_ik=rr(),
                    t_ik=rng.normal(size=(1, 3)), R_lm=rr(), t_lm=rng.normal(size=(1, 3)),
                    R_ln=rr(), t_ln=rng.normal(size=(1, 3)))
        A = np.column_stack([unit_direction(*args["ang_u"][0])[0],
                             args["R_ij"][0] @ unit_direction(*args["ang_v"][0])[0]])
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[1] < 0.2 * sv[0]:
            continue
        J = _perturbed_prediction(args, np.zeros(34))[1][0]
        num = fd(lambda x: _perturbed_prediction(args, x)[0][0], np.zeros(34))
        assert rel_err(J, num) < 1e-5
        checked += 1


# -- scale recovery ---------------------------------------------------------------------


def _scale_inputs(ms, ca, cb, u, v):
    zu, zv = ms[u], ms[v]
    R_ij, t_ij = ca.relative_batch(zu.a_pose, zv.a_pose)
    R_lm, t_lm = cb.relative_batch(zu.b_pose, zv.b_pose)
    return zu, zv, R_ij, t_ij, R_lm, t_lm


def test_recover_scale_exact_world():
    ms, ca, cb, gt = exact_world(4)
    checked = 0
    for u in range(len(ms)):
        for v in range(u + 1, len(ms)):
            zu, zv, R_ij, t_ij, R_lm, t_lm = _scale_inputs(ms, ca, cb, u, v)
            if zu.a_pose == zv.a_pose and zu.b_pose == zv.b_pose:
                continue
            s = recover_scale(unit_direction(zu.azimuth, zu.elevation)[0],
                              unit_direction(zv.azimuth, zv.elevation)[0],
                              R_ij, t_ij, zv.rotation, R_lm, t_lm)
            true = [np.linalg.norm(gt["tb"][z.b_pose] - gt["ta"][z.a_pose]) for z in (zu, zv)]
            np.testing.assert_allclose(s, true, atol=1e-6)
            checked += 1
    assert checked > 30


def test_recover_scale_parallel_directions():
    u = np.array([1.0, 0.0, 0.0])
    with pytest.raises(DegenerateConfiguration):
        recover_scale(u, u, np.eye(3), np.array([1.0, 0, 0]), np.eye(3), np.eye(3), np.zeros(3))


def test_recover_scale_noisy_within_three_sigma():
    ms, ca, cb, gt = exact_world(5)
    rng = np.random.default_rng(0)
    sd = 0.003
    # a non-degenerate pair from different poses
    pair = next((u, v) for u in range(len(ms)) for v in range(u + 1, len(ms))
                if ms[u].a_pose != ms[v].a_pose and ms[u].b_pose != ms[v].b_pose)
    zu, zv, R_ij, t_ij, R_lm, t_lm = _scale_inputs(ms, ca, cb, *pair)
    true = [np.linalg.norm(gt["tb"][z.b_pose] - gt["ta"][z.a_pose]) for z in (zu, zv)]

    def f(x):
        return recover_scale(unit_direction(zu.azimuth + x[0], zu.elevation + x[1])[0],
                             unit_direction(zv.azimuth + x[2], zv.elevation + x[3])[0],
                             R_ij, t_ij, zv.rotation @ so3_exp(x[4:7]), R_lm, t_lm)

    J = fd(f, np.zeros(7))
    sigma = np.sqrt(np.diag(J @ J.T) * sd**2)
    hits = 0
    for _ in range(1000):
        s = f(rng.normal(0, sd, 7))
        hits += np.all(np.abs(s - true) <= 3 * sigma)
    assert hits >= 990


# -- rotation and direction checks ------------------------------------------------------


def test_identity_rotation_loop_scores_zero():
    Q = np.diag([1e-4] * 6)
    ch = OdometryChain(np.array([np.eye(3)] * 3), np.zeros((3, 3)), Q)
    z = ScalelessRelPoseMeasurement(0, 0, 0.0, 0.0, np.eye(3), COV)
    z2 = ScalelessRelPoseMeasurement(2, 1, 0.3, 0.1, np.eye(3), COV)
    assert visual_rotation_metric(z, z2, ch, ch) == 0.0


def test_noise_free_world_scores_zero():
    ms, ca, cb, _ = exact_world(6, 15)
    data = VisualData.from_measurements(ms, ca, cb)
    m = len(ms)
    u, v = np.triu_indices(m, 1)
    assert np.all(rotation_loop_scores(data, u, v) < 1e-9)
    trip = np.array(list(itertools.combinations(range(m), 3)))
    s = direction_scores(data, trip[:, 0], trip[:, 1], trip[:, 2])
    assert np.all(s[np.isfinite(s)] < 1e-9)
    assert np.mean(np.isfinite(s)) > 0.95


def test_rotation_perturbation_fails():
    ms, ca, cb, _ = exact_world(7)
    bad = ScalelessRelPoseMeasurement(ms[1].a_pose, ms[1].b_pose, ms[1].azimuth, ms[1].elevation,
                                      ms[1].rotation @ so3_exp(np.array([0.3, 0.0, 0.0])), COV)
    assert visual_rotation_metric(ms[0], ms[1], ca, cb) < 1e-9
    assert visual_rotation_metric(ms[0], bad, ca, cb) > 100 * G_ROT


def test_azimuth_shift_fails():
    ms, ca, cb, _ = exact_world(8)
    trip = next((a, b, c) for a in range(len(ms)) for b in range(a + 1, len(ms))
                for c in range(b + 1, len(ms))
                if np.isfinite(visual_direction_metric(ms[a], ms[b], ms[c], ca, cb)))
    z = ms[trip[2]]
    shifted = ScalelessRelPoseMeasurement(z.a_pose, z.b_pose, z.azimuth + 0.5, z.elevation,
                                          z.rotation, z.cov)
    assert visual_direction_metric(ms[trip[0]], ms[trip[1]], z, ca, cb) < 1e-9
    assert visual_direction_metric(ms[trip[0]], ms[trip[1]], shifted, ca, cb, G_ROT) > G_DIR


def test_scores_invariant_to_global_transform():
    w = gen_visual_world(WorldSpec.for_kind("visual3d", n_measurements=20, inlier_fraction=0.5, seed=9))
    ca, cb = w.context
    rng = np.random.default_rng(9)

    def moved(ch):
        Rg, tg = random_rotation(rng), rng.uniform(-50, 50, 3)
        return OdometryChain(Rg @ ch.R, ch.t @ Rg.T + tg, ch.step_covs)

    base = VisualData.from_measurements(w.measurements, ca, cb)
    other = VisualData.from_measurements(w.measurements, moved(ca), moved(cb))
    m = len(w.measurements)
    u, v = np.triu_indices(m, 1)
    r0, r1 = rotation_loop_scores(base, u, v), rotation_loop_scores(other, u, v)
    np.testing.assert_allclose(r1, r0, rtol=1e-9, atol=1e-9)
    idx = rng.choice(m, (300, 3))
    idx = idx[(idx[:, 0] != idx[:, 1]) & (idx[:, 1] != idx[:, 2]) & (idx[:, 0] != idx[:, 2])]
    d0 = direction_scores(base, idx[:, 0], idx[:, 1], idx[:, 2])
    d1 = direction_scores(other, idx[:, 0], idx[:, 1], idx[:, 2])
    fin = np.isfinite(d0)
    assert np.array_equal(fin, np.isfinite(d1))
    np.testing.assert_allclose(d1[fin], d0[fin], rtol=1e-9, atol=1e-9)


def test_family_rejects_outlier_triples():
    w = gen_visual_world(WorldSpec.for_kind("visual3d", n_measurements=24, inlier_fraction=0.5, seed=2))
    fam = visual_family(*w.context, confidence=0.99)
    data = fam.prepare(w.measurements)
    out = np.nonzero(~w.labels)[0]
    trip = np.array([out[:3], out[3:6], out[6:9]])
    assert not np.any(fam.passes(data, 3, trip))


def test_calibration_over_independent_worlds():
    rot, dirs = [], []
    for seed in range(100):
        w = gen_visual_world(WorldSpec.for_kind("visual3d", n_measurements=30, inlier_fraction=1.0,
                                                seed=seed))
        d = VisualData.from_measurements(w.measurements, *w.context)
        rng = np.random.default_rng(seed)
        idx = np.array([rng.choice(30, 3, replace=False) for _ in range(100)])
        rot.append(rotation_loop_scores(d, idx[:, 0], idx[:, 1]))
        dirs.append(direction_scores(d, idx[:, 0], idx[:, 1], idx[:, 2]))
    rot, dirs = np.concatenate(rot), np.concatenate(dirs)
    for c in (0.5, 0.9, 0.95):
        assert abs(np.mean(rot <= chi2_quantile(3, c)) - c) <= 0.03
        assert abs(np.mean(dirs <= chi2_quantile(2, c)) - c) <= 0.03
