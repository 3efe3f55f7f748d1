"""Contour simplification: optimal 1-D k-means over cents, line segments, step symbols."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .pitch import PitchTrack

DEFAULT_K_RANGE = (2, 16)
DEFAULT_MIN_FRAMES = 5
PHRASE_GAP_SECONDS = 0.25


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    sse: float

    @property
    def k(self) -> int:
        return len(self.centroids)

    def assign(self, values) -> np.ndarray:
        """Nearest-centroid index; ties go to the lower index."""
        v = np.asarray(values, dtype=np.float64)
        d = np.abs(v[..., None] - self.centroids)
        return np.argmin(d, axis=-1)

    def shifted(self, offset: float) -> "ClusterModel":
        return ClusterModel(self.centroids + offset, self.sse)


def _sse_of(groups) -> float:
    return float(sum(np.sum((g - g.mean()) ** 2) for g in groups))


def _dp_tables(x: np.ndarray, w: np.ndarray, k_max: int):
    """Optimal-partition DP over sorted distinct values ``x`` with weights ``w``.

    ``cost[m, i]`` is the least within-cluster SSE of the first ``i`` values in
    ``m`` clusters; ``arg[m, i]`` is the start of the last cluster. The split
    point is monotone in ``i``, so each layer is solved by divide and conquer,
    one vectorised pass per recursion level.
    """
    n = len(x)
    xc = x - np.average(x, weights=w)  # centring keeps the prefix sums small
    W = np.concatenate([[0.0], np.cumsum(w)])
    S1 = np.concatenate([[0.0], np.cumsum(w * xc)])
    S2 = np.concatenate([[0.0], np.cumsum(w * xc * xc)])

    def seg_cost(j, i):
        s1 = S1[i] - S1[j]
        return np.maximum(S2[i] - S2[j] - s1 * s1 / (W[i] - W[j]), 0.0)

    cost = np.full((k_max + 1, n + 1), np.inf)
    arg = np.zeros((k_max + 1, n + 1), dtype=np.int64)
    i_all = np.arange(1, n + 1)
    cost[1, 1:] = seg_cost(np.zeros(n, dtype=np.int64), i_all)
    for m in range(2, k_max + 1):
        prev = cost[m - 1]
        # pending intervals: solve i in [ilo, ihi] with split j in [jlo, jhi]
        ilo = np.array([m]); ihi = np.array([n]); jlo = np.array([m - 1]); jhi = np.array([n - 1])
        while len(ilo):
            mid = (ilo + ihi) // 2
            top = np.minimum(jhi, mid - 1)
            counts = top - jlo + 1
            owner = np.repeat(np.arange(len(mid)), counts)
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            j = jlo[owner] + (np.arange(counts.sum()) - starts[owner])
            total = prev[j] + seg_cost(j, mid[owner])
            order = np.lexsort((j, total, owner))
            first = order[starts]
            opt = j[first]
            cost[m, mid] = total[first]
            arg[m, mid] = opt
            left = ilo <= mid - 1
            right = mid + 1 <= ihi
            ilo, ihi, jlo, jhi = (
                np.concatenate([ilo[left], mid[right] + 1]),
                np.concatenate([mid[left] - 1, ihi[right]]),
                np.concatenate([jlo[left], opt[right]]),
                np.concatenate([opt[left], jhi[right]]),
            )
    return cost, arg


def _backtrack(arg: np.ndarray, n: int, k: int) -> list[int]:
    bounds = [n]
    i = n
    for m in range(k, 0, -1):
        i = int(arg[m, i])
        bounds.append(i)
    return bounds[::-1]


def _model_from_bounds(xs, ws, raw_sorted, bounds) -> ClusterModel:
    cents = []
    groups = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        cents.append(np.average(xs[a:b], weights=ws[a:b]))
        groups.append(raw_sorted[(raw_sorted >= xs[a]) & (raw_sorted <= xs[b - 1])])
    return ClusterModel(np.array(cents), _sse_of(groups))


def _distinct(values):
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if len(v) == 0:
        raise ValueError("no values to cluster")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values")
    xs, counts = np.unique(v, return_counts=True)
    return v, xs, counts.astype(np.float64)


def cluster_1d(values, k: int) -> ClusterModel:
    """Globally optimal (minimum SSE) 1-D k-means by dynamic programming.

    Identical values always share a cluster, so ``k`` may not exceed the
    number of distinct values.
    """
    v, xs, ws = _distinct(values)
    if not 1 <= k <= len(xs):
        raise ValueError(f"k={k} outside [1, {len(xs)}] (distinct values)")
    cost, arg = _dp_tables(xs, ws, k)
    return _model_from_bounds(xs, ws, v, _backtrack(arg, len(xs), k))


def bic_sse(sse: float, n: int, k: int) -> float:
    """n ln(SSE/n) + k ln n. Degenerates towards large k on continuous data."""
    if sse <= 0:
        return -math.inf
    return n * math.log(sse / n) + k * math.log(n)


def bic_mixture(sse: float, sizes, k: int) -> float:
    """BIC of the hard-assignment Gaussian mixture with one shared variance.

    Free parameters: k means, k - 1 weights and the variance. Lower is better.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    n = float(sizes.sum())
    if sse <= 0 or n <= k:
        return -math.inf
    var = sse / (n - k)
    loglik = float(np.sum(sizes * np.log(sizes / n))) - 0.5 * n * math.log(2 * math.pi * var) - 0.5 * (n - k)
    return -2.0 * loglik + 2 * k * math.log(n)


def select_k(values, k_min: int, k_max: int, criterion: str = "mixture") -> int:
    """k in ``[k_min, k_max]`` minimising BIC (ties -> smaller k).

    ``criterion="mixture"`` scores with :func:`bic_mixture`; ``"sse"`` uses
    :func:`bic_sse`.
    """
    if criterion not in ("mixture", "sse"):
        raise ValueError(f"unknown criterion {criterion!r}")
    v, xs, ws = _distinct(values)
    if not 1 <= k_min <= k_max <= len(xs):
        raise ValueError(f"need 1 <= k_min <= k_max <= {len(xs)} distinct values")
    cost, arg = _dp_tables(xs, ws, k_max)
    n = len(v)
    cw = np.concatenate([[0.0], np.cumsum(ws)])
    best_k, best = k_min, math.inf
    for k in range(k_min, k_max + 1):
        bounds = _backtrack(arg, len(xs), k)
        sse = _model_from_bounds(xs, ws, v, bounds).sse
        if criterion == "sse":
            score = bic_sse(sse, n, k)
        else:
            score = bic_mixture(sse, np.diff(cw[bounds]), k)
        if score < best:
            best_k, best = k, score
        if score == -math.inf:
            break
    return best_k


def fit_clusters(values, k_range=DEFAULT_K_RANGE, criterion: str = "mixture") -> ClusterModel:
    """Cluster with k chosen by BIC, clamping the range to the distinct-value count."""
    _, xs, _ = _distinct(values)
    lo = min(k_range[0], len(xs))
    hi = min(k_range[1], len(xs))
    return cluster_1d(values, select_k(values, lo, hi, criterion))


# ----------------------------------------------------------------------- segments


@dataclass(frozen=True)
class LineSegment:
    cluster_index: int
    start_frame: int
    end_frame: int  # exclusive
    mean_cents: float
    phrase: int = 0

    def __post_init__(self):
        if self.end_frame <= self.start_frame:
            raise ValueError("empty segment")

    def to_dict(self):
        return {"cluster": self.cluster_index, "start_frame": self.start_frame,
                "end_frame": self.end_frame, "mean_cents": self.mean_cents}


def _phrases(voiced: np.ndarray, max_gap: int):
    """Voiced frame index groups separated by unvoiced gaps longer than ``max_gap`` frames."""
    idx = np.flatnonzero(voiced)
    if len(idx) == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) - 1 > max_gap) + 1
    return np.split(idx, cuts)


def _runs(labels: np.ndarray):
    edges = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [len(labels)]])
    return [[int(labels[s]), int(s), int(e)] for s, e in zip(starts, ends)]


def segment(track: PitchTrack, model: ClusterModel, min_frames: int = DEFAULT_MIN_FRAMES,
            gap_seconds: float = PHRASE_GAP_SECONDS) -> list[LineSegment]:
    """Maximal same-cluster runs of voiced frames, split into phrases.

    Unvoiced gaps up to ``gap_seconds`` are bridged: a segment may then span
    the unvoiced frames of the gap. Runs shorter than ``min_frames`` are
    absorbed, shortest first, into the neighbour whose centroid is nearer
    the run's mean pitch. Phrases with fewer than ``min_frames`` voiced
    frames are dropped.
    """
    if min_frames < 1:
        raise ValueError("min_frames must be >= 1")
    cents = track.f0_cents
    max_gap = int(math.floor(gap_seconds / track.hop_seconds + 1e-9))
    out: list[LineSegment] = []
    for p, frames in enumerate(_phrases(track.voiced, max_gap)):
        if len(frames) < min_frames:
            continue
        vals = cents[frames]
        runs = _runs(model.assign(vals))  # [cluster, i0, i1) in positions of `frames`
        while len(runs) > 1:
            lengths = [r[2] - r[1] for r in runs]
            j = int(np.argmin(lengths))
            if lengths[j] >= min_frames:
                break
            mean = vals[runs[j][1] : runs[j][2]].mean()
            if j == 0:
                t = 1
            elif j == len(runs) - 1:
                t = j - 1
            else:
                dl = abs(mean - model.centroids[runs[j - 1][0]])
                dr = abs(mean - model.centroids[runs[j + 1][0]])
                t = j - 1 if dl <= dr else j + 1
            lo, hi = min(j, t), max(j, t)
            runs[lo:hi + 1] = [[runs[t][0], runs[lo][1], runs[hi][2]]]
            # coalesce equal neighbours produced by the absorption
            merged = [runs[0]]
            for r in runs[1:]:
                if r[0] == merged[-1][0]:
                    merged[-1] = [r[0], merged[-1][1], r[2]]
                else:
                    merged.append(r)
            runs = merged
        for c, i0, i1 in runs:
            out.append(LineSegment(c, int(frames[i0]), int(frames[i1 - 1]) + 1,
                                   float(vals[i0:i1].mean()), p))
    return out


@dataclass
class ContourSequence:
    steps: list[int]
    segments: list[LineSegment]
    source_id: str = ""
    hop_seconds: float = field(default=256 / 44100)

    def __post_init__(self):
        if len(self.segments) != len(self.steps) + 1:
            raise ValueError("need exactly one more segment than steps")

    def to_dict(self):
        return {"source_id": self.source_id, "hop_seconds": self.hop_seconds,
                "steps": list(self.steps), "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d, phrase: int = 0) -> "ContourSequence":
        segs = [LineSegment(int(s["cluster"]), int(s["start_frame"]), int(s["end_frame"]),
                            float(s["mean_cents"]), phrase) for s in d["segments"]]
        return cls([int(x) for x in d["steps"]], segs, d.get("source_id", ""),
                   float(d.get("hop_seconds", 256 / 44100)))


def contour_of(segments: list[LineSegment], source_id: str = "",
               hop_seconds: float = 256 / 44100) -> list[ContourSequence]:
    """Signed cluster-index steps between consecutive segments, one sequence per phrase."""
    out = []
    groups: dict[int, list[LineSegment]] = {}
    for s in segments:
        groups.setdefault(s.phrase, []).append(s)
    for p in sorted(groups):
        segs = sorted(groups[p], key=lambda s: s.start_frame)
        steps = [b.cluster_index - a.cluster_index for a, b in zip(segs[:-1], segs[1:])]
        if any(d == 0 for d in steps):
            raise ValueError("consecutive segments share a cluster")
        out.append(ContourSequence(steps, segs, source_id, hop_seconds))
    return out


def contours_from_track(track: PitchTrack, model: ClusterModel | None = None,
                        k_range=DEFAULT_K_RANGE, min_frames: int = DEFAULT_MIN_FRAMES,
                        gap_seconds: float = PHRASE_GAP_SECONDS, criterion: str = "mixture",
                        prune: bool = True) -> tuple[ClusterModel | None, list[ContourSequence]]:
    v = track.voiced
    if not v.any():
        return model, []
    if model is None:
        model = fit_clusters(track.f0_cents[v], k_range, criterion)
    segs = segment(track, model, min_frames, gap_seconds)
    if prune:
        # Clusters owning no segment (transition frames, ornaments) would
        # otherwise inflate the index distance between the notes around them.
        for _ in range(model.k):
            used = sorted({s.cluster_index for s in segs})
            if len(used) == model.k or not used:
                break
            cents = model.centroids[used]
            vals = track.f0_cents[v]
            lab = np.argmin(np.abs(vals[:, None] - cents), axis=1)
            model = ClusterModel(cents, _sse_of([vals[lab == i] for i in range(len(cents)) if np.any(lab == i)]))
            segs = segment(track, model, min_frames, gap_seconds)
    return model, contour_of(segs, track.source_id, track.hop_seconds)


def dumps_contours(seqs: list[ContourSequence], **extra) -> str:
    return json.dumps({**extra, "sequences": [s.to_dict() for s in seqs]}, indent=1, sort_keys=True) + "\n"


def loads_contours(text: str) -> list[ContourSequence]:
    d = json.loads(text)
    return [ContourSequence.from_dict(s, i) for i, s in enumerate(d["sequences"])]
