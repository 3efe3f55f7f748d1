import math

import numpy as np
import pytest

from flamenco_sid.contour import (ClusterModel, ContourSequence, LineSegment, bic_sse, cluster_1d, contour_of,
                                  contours_from_track, dumps_contours, fit_clusters, loads_contours, segment,
                                  select_k)
from flamenco_sid.pitch import PitchTrack
from oracles import bic_curve, exhaustive_kmeans

HOP = 256
RATE = 44100


def make_track(cents, source_id="t"):
    cents = np.asarray(cents, dtype=np.float64)
    sal = np.where(np.isnan(cents), 0.0, 1.0)
    return PitchTrack(np.arange(len(cents)) * HOP / RATE, cents, sal, HOP, RATE, source_id)


# ---------------------------------------------------------------------- k-means


def test_cluster_separable():
    m = cluster_1d([100, 100, 100, 700, 700, 700], 2)
    np.testing.assert_array_equal(m.centroids, [100, 700])
    assert m.sse == 0


def test_cluster_three_partition_example():
    m = cluster_1d([0, 10, 990, 1000, 2000], 3)
    np.testing.assert_allclose(m.centroids, [5, 995, 2000])
    assert m.sse == pytest.approx(100.0)
    assert exhaustive_kmeans([0, 10, 990, 1000, 2000], 3)[0] == pytest.approx(100.0)


def test_cluster_one_per_point():
    v = [40.0, 3.0, 17.0, 9.0]
    m = cluster_1d(v, 4)
    np.testing.assert_array_equal(m.centroids, sorted(v))
    assert m.sse == 0


def test_cluster_errors():
    with pytest.raises(ValueError):
        cluster_1d([1, 2, 3], 0)
    with pytest.raises(ValueError):
        cluster_1d([1, 1, 2], 3)
    with pytest.raises(ValueError):
        cluster_1d([], 1)


def test_cluster_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n = int(rng.integers(1, 13))
        v = np.round(rng.uniform(0, 2400, n), int(rng.integers(0, 2)) - 1)
        distinct = len(np.unique(v))
        for k in range(1, min(4, distinct) + 1):
            m = cluster_1d(v, k)
            ref_sse, ref_c = exhaustive_kmeans(v, k)
            assert m.sse == pytest.approx(ref_sse, rel=1e-9, abs=1e-6)
            assert np.all(np.diff(m.centroids) > 0)


def test_assignment_ties_go_low():
    m = ClusterModel(np.array([0.0, 100.0]), 0.0)
    assert m.assign(50.0) == 0
    np.testing.assert_array_equal(m.assign([49, 51]), [0, 1])


def test_select_k_blobs_and_constant():
    rng = np.random.default_rng(1)
    blobs = np.concatenate([rng.normal(1000, 10, 200), rng.normal(2200, 10, 200)])
    # the plain n ln(SSE/n) + k ln n score keeps splitting Gaussian blobs; the mixture score does not
    assert select_k(blobs, 1, 5) == 2
    assert select_k(np.full(50, 300.0), 1, 1) == 1
    assert fit_clusters(np.full(50, 300.0)).k == 1


def test_select_k_sse_matches_oracle_curve():
    v = np.linspace(0, 4800, 12)
    curve = bic_curve(v, 2, 10)
    best = min(curve, key=lambda k: (curve[k], k))
    assert select_k(v, 2, 10, "sse") == best
    for k, b in curve.items():
        assert bic_sse(cluster_1d(v, k).sse, len(v), k) == pytest.approx(b, abs=1e-6)


def test_select_k_errors():
    with pytest.raises(ValueError):
        select_k([], 1, 2)
    with pytest.raises(ValueError):
        select_k([1, 2], 1, 2, "aic")


# --------------------------------------------------------------------- segments


def test_constant_track_single_segment():
    tr = make_track(np.full(40, 2400.0))
    segs = segment(tr, ClusterModel(np.array([1000.0, 2400.0]), 0.0))
    assert len(segs) == 1 and (segs[0].start_frame, segs[0].end_frame) == (0, 40)


def test_two_runs():
    model = ClusterModel(np.array([0.0, 100.0]), 0.0)
    segs = segment(make_track([0, 0, 0, 100, 100, 100]), model, min_frames=2)
    assert [(s.cluster_index, s.start_frame, s.end_frame) for s in segs] == [(0, 0, 3), (1, 3, 6)]


def test_short_run_absorbed():
    model = ClusterModel(np.array([0.0, 100.0]), 0.0)
    segs = segment(make_track([0, 0, 100, 0, 0]), model, min_frames=3)
    assert [(s.cluster_index, s.start_frame, s.end_frame) for s in segs] == [(0, 0, 5)]


def test_gap_bridging_and_phrase_split():
    model = ClusterModel(np.array([0.0, 500.0]), 0.0)
    hop_s = HOP / RATE
    short = int(0.2 / hop_s)
    long = int(0.4 / hop_s)
    cents = [0.0] * 10 + [np.nan] * short + [500.0] * 10 + [np.nan] * long + [0.0] * 10
    segs = segment(make_track(cents), model)
    assert [s.phrase for s in segs] == [0, 0, 1]
    seqs = contour_of(segs)
    assert [s.steps for s in seqs] == [[1], []]


def test_unvoiced_track_empty():
    tr = make_track(np.full(30, np.nan))
    assert segment(tr, ClusterModel(np.array([0.0]), 0.0)) == []
    assert contours_from_track(tr)[1] == []
    with pytest.raises(ValueError):
        segment(tr, ClusterModel(np.array([0.0]), 0.0), min_frames=0)


def test_segment_invariants_on_random_track():
    rng = np.random.default_rng(3)
    levels = rng.choice([0, 300, 700, 1200], size=30)
    cents = np.repeat(levels, rng.integers(1, 12, size=30)).astype(float) + rng.normal(0, 5, size=None)
    cents[rng.random(len(cents)) < 0.05] = np.nan
    tr = make_track(cents)
    model = fit_clusters(cents[~np.isnan(cents)])
    segs = segment(tr, model)
    for s in segs:
        assert s.end_frame > s.start_frame
    for seq in contour_of(segs):
        assert all(d != 0 for d in seq.steps)


# ---------------------------------------------------------------------- contour


def _segs(indices, length=6):
    return [LineSegment(c, i * length, (i + 1) * length, 100.0 * c) for i, c in enumerate(indices)]


def test_contour_examples():
    assert contour_of(_segs([3]))[0].steps == []
    assert contour_of(_segs([2, 4, 3, 5]))[0].steps == [2, -1, 2]
    assert contour_of(_segs([5, 1]))[0].steps == [-4]
    with pytest.raises(ValueError):
        contour_of(_segs([1, 1]))
    with pytest.raises(ValueError):
        ContourSequence([1, 2], _segs([0, 1]))


def test_translation_equivariance():
    rng = np.random.default_rng(7)
    notes = rng.choice([2000, 2200, 2400, 2700, 2900], size=25)
    cents = np.repeat(notes, 12).astype(float) + rng.normal(0, 4, 300)
    m1, s1 = contours_from_track(make_track(cents))
    m2, s2 = contours_from_track(make_track(cents + 777.0))
    np.testing.assert_allclose(m2.centroids, m1.centroids + 777.0, atol=1e-6)
    assert [s.steps for s in s1] == [s.steps for s in s2]
    assert [[(g.start_frame, g.end_frame, g.cluster_index) for g in s.segments] for s in s1] == \
           [[(g.start_frame, g.end_frame, g.cluster_index) for g in s.segments] for s in s2]


def test_piecewise_reconstruction_round_trip():
    rng = np.random.default_rng(11)
    notes = rng.choice([1800, 2100, 2500, 2800], size=20)
    cents = np.repeat(notes, rng.integers(6, 15, size=20)).astype(float) + rng.normal(0, 6, size=None)
    model, seqs = contours_from_track(make_track(cents))
    flat = np.full(len(cents), np.nan)
    for seq in seqs:
        for g in seq.segments:
            flat[g.start_frame:g.end_frame] = model.centroids[g.cluster_index]
    again = contour_of(segment(make_track(flat), model))
    assert [s.steps for s in again] == [s.steps for s in seqs]


def test_serialization_round_trip():
    seqs = contour_of(_segs([2, 4, 3, 5]), source_id="rec1")
    back = loads_contours(dumps_contours(seqs, config={"a": 1}))
    assert back[0].steps == [2, -1, 2]
    assert back[0].source_id == "rec1"
    assert [(g.cluster_index, g.start_frame) for g in back[0].segments] == \
           [(g.cluster_index, g.start_frame) for g in seqs[0].segments]
    assert math.isclose(back[0].hop_seconds, seqs[0].hop_seconds)
