import itertools
import logging
import math

import numpy as np
import pytest

from gkcm.consistency import build_graph_batch
from gkcm.formats import format_measurements
from gkcm.maxclique import brute_force_max_clique, definition_check, max_clique_exact
from gkcm.metrics.families import range_family, scalar_family
from gkcm.metrics.lie import OdometryChain, rot2
from gkcm.metrics.range import ChainPoses, RangeData, RangeMeasurement, range_group4_metric
from gkcm.sim import (WorldGenerationError, WorldSpec, evaluate_selection, gen_1d_world,
                      gen_planted_clique_graph, gen_range_world, gen_visual_world, generate)


def noise_free(w):
    """Same world with exact inlier ranges and exact odometry (covariances kept)."""
    gt = w.ground_truth
    th, xy = gt["poses_theta"], gt["poses_xy"]
    chain = OdometryChain(np.array([rot2(a) for a in th]), xy, w.context.chain.step_covs)
    ms = [RangeMeasurement(m.pose_index, m.beacon_id, float(gt["true_range"][i]) if lab else m.range,
                           m.variance)
          for i, (m, lab) in enumerate(zip(w.measurements, w.labels))]
    return ms, ChainPoses(chain)


def same_world(a, b):
    assert format_measurements(a.measurements) == format_measurements(b.measurements)
    assert np.array_equal(a.labels, b.labels)
    for key, val in a.ground_truth.items():
        assert np.array_equal(np.asarray(val), np.asarray(b.ground_truth[key])), key


# -- generators ------------------------------------------------------------------------


@pytest.mark.parametrize("spec", [
    WorldSpec.for_kind("one_d", seed=17),
    WorldSpec.for_kind("range2d", seed=17, n_poses=30, n_random=5, n_clustered=5),
    WorldSpec.for_kind("visual3d", seed=17, n_measurements=40),
], ids=["one_d", "range2d", "visual3d"])
def test_seed_determinism(spec):
    same_world(generate(spec), generate(spec))
    other = generate(WorldSpec(**{**spec.to_dict(), "seed": 18}))
    assert format_measurements(other.measurements) != format_measurements(generate(spec).measurements)


def test_spec_validation():
    with pytest.raises(ValueError):
        WorldSpec(kind="underwater")
    with pytest.raises(ValueError):
        WorldSpec(n_random=-1)
    with pytest.raises(ValueError):
        WorldSpec(range_std=0.0)
    with pytest.raises(ValueError):
        WorldSpec(cluster_size=0)
    with pytest.raises(ValueError):
        WorldSpec(trajectory="spiral")


def test_one_d_without_outliers_is_all_inliers():
    w = gen_1d_world(WorldSpec.for_kind("one_d", n_alias=0, n_random=0, seed=3))
    assert len(w.measurements) == 10 and w.labels.all()


def test_one_d_pairwise_maximum_matches_inliers():
    # ten inliers at sigma 0.1 and an aliased group 100 sigma away
    spec = dict(n_inliers=10, n_alias=4, n_random=0, range_std=0.1, alias_offset=10.0)
    w = gen_1d_world(WorldSpec.for_kind("one_d", seed=0, **spec))
    g = build_graph_batch(w.measurements, scalar_family(0.99))
    assert max_clique_exact(g).vertices == brute_force_max_clique(g).vertices == w.inliers
    for seed in range(1, 100):
        w = gen_1d_world(WorldSpec.for_kind("one_d", seed=seed, **spec))
        g = build_graph_batch(w.measurements, scalar_family(0.99))
        best = max_clique_exact(g)
        assert best.size == brute_force_max_clique(g).size
        # a Gaussian tail can cost an inlier, but the aliased group never wins
        assert all(w.labels[v] for v in best.vertices)


def test_range_world_outlier_split():
    w = gen_range_world(WorldSpec.for_kind("range2d", n_random=7, n_clustered=12, cluster_size=5, seed=2))
    src = w.ground_truth["source"]
    assert len(w.measurements) == 75 and np.sum(~w.labels) == 19
    assert np.sum(src == -1000) == 7
    phantom = src[(src < 0) & (src != -1000)]
    assert len(phantom) == 12 and sorted(np.bincount(-1 - phantom)) == [2, 5, 5]
    assert np.all(src[w.labels] >= 0)


def test_range_world_too_many_outliers():
    with pytest.raises(WorldGenerationError):
        gen_range_world(WorldSpec.for_kind("range2d", n_poses=10, n_random=6, n_clustered=6))


@pytest.mark.parametrize("trajectory", ["circle", "manhattan", "line"])
def test_noise_free_range_world_scores_zero(trajectory):
    w = gen_range_world(WorldSpec.for_kind("range2d", trajectory=trajectory, n_poses=24,
                                           n_random=0, n_clustered=0, seed=5))
    ms, ctx = noise_free(w)
    data = RangeData.from_measurements(ms, ctx)
    idx = np.array(list(itertools.combinations(range(24), 4)))
    s = range_group4_metric(data, idx)
    if trajectory == "line":
        # collinear poses leave a mirror ambiguity but the true candidate still fits
        assert np.all(s[np.isfinite(s)] < 1e-12)
    else:
        assert np.all(s < 1e-12)


@pytest.mark.parametrize("confidence", [0.5, 0.95])
def test_noise_free_inliers_form_a_clique(confidence):
    w = gen_range_world(WorldSpec.for_kind("range2d", seed=6))
    assert np.sum(~w.labels) == 60
    ms, ctx = noise_free(w)
    fam = range_family(ctx, confidence)
    data = fam.prepare(ms)
    quads = np.array(list(itertools.combinations(w.inliers, 4)))
    assert np.all(fam.passes(data, 4, quads))


def test_visual_world_defaults_and_retries():
    w = gen_visual_world(WorldSpec.for_kind("visual3d", seed=1))
    assert len(w.measurements) == 100 and np.sum(w.labels) == 25
    assert all(0 <= z.a_pose < 100 and 0 <= z.b_pose < 100 for z in w.measurements)
    with pytest.raises(WorldGenerationError):
        gen_visual_world(WorldSpec.for_kind("visual3d", proximity=1e-4, max_retries=2))


def test_planted_graph_density_zero():
    g, planted = gen_planted_clique_graph(12, 3, 5, 0.0, seed=1)
    assert g.num_edges == math.comb(5, 3)
    assert g.edges == set(itertools.combinations(planted, 3))


def test_planted_graph_experiment_family():
    g, planted = gen_planted_clique_graph(100, 3, 10, 0.1, seed=4)
    assert len(planted) == 10
    assert g.num_edges == round(0.1 * math.comb(100, 3))
    assert definition_check(g, planted)


def test_planted_graph_dense_and_clamped(caplog):
    g, planted = gen_planted_clique_graph(10, 3, 4, 0.9, seed=2)
    assert g.num_edges == round(0.9 * 120) and definition_check(g, planted)
    with caplog.at_level(logging.WARNING):
        g, planted = gen_planted_clique_graph(20, 3, 12, 0.01, seed=2)
    assert "clamped" in caplog.text and g.num_edges == math.comb(12, 3)
    with pytest.raises(ValueError):
        gen_planted_clique_graph(5, 3, 6, 0.1)
    with pytest.raises(ValueError):
        gen_planted_clique_graph(5, 3, 2, 1.5)


# -- evaluation -------------------------------------------------------------------------


def test_evaluate_selection_examples():
    labels = np.array([True, True, False, True, False])
    chi2 = np.array([1.0, 3.0, 50.0, 2.0, 80.0])
    r = evaluate_selection([0, 1, 3], labels, {"chi2": chi2})
    assert (r.tpr, r.fpr, r.clique_size) == (1.0, 0.0, 3) and r.selected_set_chi2 == 2.0
    r = evaluate_selection(range(5), labels, {"chi2": chi2})
    assert (r.tpr, r.fpr) == (1.0, 1.0)
    r = evaluate_selection([], labels, {"chi2": chi2})
    assert (r.tpr, r.fpr, r.selected_set_chi2) == (0.0, 0.0, None)
    r = evaluate_selection([1, 2], labels, metric=lambda sel: np.full(len(sel), 7.0))
    assert r.tpr == pytest.approx(1 / 3) and r.fpr == 0.5 and r.selected_set_chi2 == 7.0
    with pytest.raises(IndexError):
        evaluate_selection([5], labels)
