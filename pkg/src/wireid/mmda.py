"""Multimodal data association.

For every wireless trajectory the videos related to its fragments are
clustered by appearance; each cluster is scored by how many of the
trajectory's fragments it touches, and co-clustered video pairs inherit
that score as their wireless similarity under the trajectory.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .sensing import SensingResult

log = logging.getLogger(__name__)

MAX_LLOYD_ITERS = 100


class EstimationError(ValueError):
    """Cluster count cannot be estimated (no wireless fragments at all)."""


def _ids(related_set) -> tuple[int, ...]:
    return tuple(getattr(related_set, "video_ids", related_set))


def estimate_cluster_count(related_sets, fragment_counts, lam: float) -> int:
    """Adaptive k for one trajectory.

    ``lam * (#related videos) * M / (total fragments)``, rounded half up and
    clamped to ``[1, #distinct related videos]``.  Related videos are counted
    with multiplicity across fragments.
    """
    total = sum(fragment_counts)
    if total <= 0:
        raise EstimationError("no wireless fragments: cluster count is undefined")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam!r}")
    sets = [_ids(s) for s in related_sets]
    n_related = sum(len(s) for s in sets)
    distinct = len(set().union(*sets)) if sets else 0
    if distinct == 0:
        raise EstimationError("trajectory has no related videos")
    raw = lam * n_related * len(fragment_counts) / total
    return int(min(max(math.floor(raw + 0.5), 1), distinct))


def kmeans(features, k: int, seed) -> np.ndarray:
    """Deterministic k-means on unit-normalized rows.

    Seeding starts from a seeded random point and greedily adds the point
    farthest from the chosen centres; Lloyd iterations run until the
    assignment stops changing (at most 100).  A cluster that empties is
    re-seeded with the point farthest from its own centre.  ``k`` is lowered
    to the number of distinct (normalized) points when it exceeds it.
    """
    X = np.asarray(features, dtype=np.float64)
    n = len(X)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    X = X / np.where(norms > 0, norms, 1.0)
    distinct = len(np.unique(X, axis=0))
    if k > distinct:
        log.info("kmeans: k=%d exceeds %d distinct points, lowering k", k, distinct)
        k = distinct
    rng = np.random.default_rng(seed)

    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        cand = d2.copy()
        cand[chosen] = -1.0
        nxt = int(np.argmax(cand))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    centres = X[chosen].copy()

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(MAX_LLOYD_ITERS):
        dist = ((X[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        counts = np.bincount(new, minlength=k)
        for c in np.flatnonzero(counts == 0):
            own = dist[np.arange(n), new]
            movable = counts[new] > 1
            own = np.where(movable, own, -1.0)
            p = int(np.argmax(own))
            counts[new[p]] -= 1
            new[p] = c
            counts[c] = 1
            centres[c] = X[p]
        if np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centres[c] = X[labels == c].mean(axis=0)
    return labels


def path_consistency(cluster_ids, related_sets) -> float:
    """Fraction of the trajectory's fragments whose related set meets the cluster."""
    members = set(cluster_ids)
    sets = [_ids(s) for s in related_sets]
    if not sets:
        raise ValueError("trajectory has no fragments")
    touched = sum(1 for s in sets if members.intersection(s))
    return touched / len(sets)


@dataclass(frozen=True)
class ClusterSet:
    trajectory_id: int
    clusters: tuple[tuple[tuple[int, ...], float], ...]  # (video ids, consistency)

    @property
    def k(self) -> int:
        return len(self.clusters)

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "k": self.k,
            "clusters": [{"videos": list(ids), "p": p} for ids, p in self.clusters],
        }


class WirelessSimilarityTensor:
    """Sparse symmetric N x N x M tensor.

    Only off-diagonal nonzero entries with ``i < j`` are stored, sorted by
    ``(i, j, m)``; the lower triangle mirrors them and the diagonal is 1.
    """

    def __init__(self, n_videos: int, n_trajectories: int, i, j, m, values):
        self.n_videos = n_videos
        self.n_trajectories = n_trajectories
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        m = np.asarray(m, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        order = np.lexsort((m, hi, lo))
        self.i, self.j, self.m, self.values = lo[order], hi[order], m[order], values[order]

    def __len__(self) -> int:
        return len(self.values)

    def value(self, i: int, j: int, m: int) -> float:
        if i == j:
            return 1.0
        lo, hi = min(i, j), max(i, j)
        hit = (self.i == lo) & (self.j == hi) & (self.m == m)
        return float(self.values[hit][0]) if hit.any() else 0.0

    def to_dense(self) -> np.ndarray:
        S = np.zeros((self.n_videos, self.n_videos, self.n_trajectories))
        S[self.i, self.j, self.m] = self.values
        S[self.j, self.i, self.m] = self.values
        idx = np.arange(self.n_videos)
        S[idx, idx, :] = 1.0
        return S


def build_similarity_tensor(cluster_sets, n_videos: int, n_trajectories: int) -> WirelessSimilarityTensor:
    ii, jj, mm, vv = [], [], [], []
    for cs in sorted(cluster_sets, key=lambda c: c.trajectory_id):
        for ids, p in cs.clusters:
            ids = sorted(ids)
            for a in range(len(ids)):
                for b in range(a + 1, len(ids)):
                    ii.append(ids[a])
                    jj.append(ids[b])
                    mm.append(cs.trajectory_id)
                    vv.append(p)
    return WirelessSimilarityTensor(n_videos, n_trajectories, ii, jj, mm, vv)


def _trajectory_seed(seed: int, m: int) -> int:
    return int(np.random.SeedSequence([seed, m]).generate_state(1)[0])


def run_mmda(features, sensing: SensingResult, lam: float, seed: int):
    """Cluster related videos per trajectory and build the similarity tensor.

    Trajectories whose fragments relate to no video get no cluster set but
    still count towards M.
    """
    X = np.asarray(features, dtype=np.float64)
    counts = sensing.fragment_counts()
    if sum(counts) == 0:
        raise EstimationError("no wireless fragments: cluster count is undefined")
    cluster_sets = []
    for m, related in enumerate(sensing.related):
        videos = sorted(set().union(*(r.video_ids for r in related))) if related else []
        if not videos:
            continue
        k = estimate_cluster_count(related, counts, lam)
        labels = kmeans(X[videos], k, _trajectory_seed(seed, m))
        clusters = []
        for c in range(labels.max() + 1):
            ids = tuple(v for v, lab in zip(videos, labels.tolist()) if lab == c)
            clusters.append((ids, path_consistency(ids, related)))
        cluster_sets.append(ClusterSet(m, tuple(clusters)))
    tensor = build_similarity_tensor(cluster_sets, len(X), sensing.n_trajectories)
    return cluster_sets, tensor


def true_person_counts(sensing: SensingResult, identities) -> dict[int, int]:
    """Distinct ground-truth identities among each trajectory's related videos."""
    ident = np.asarray(identities)
    out = {}
    for m, related in enumerate(sensing.related):
        videos = set().union(*(r.video_ids for r in related)) if related else set()
        if videos:
            out[m] = len({int(ident[v]) for v in videos})
    return out


def cluster_count_deviation(sensing: SensingResult, lam: float, identities) -> tuple[float, float]:
    """Mean |K_m - true person count| and the mean true count, over trajectories with related videos."""
    truth = true_person_counts(sensing, identities)
    counts = sensing.fragment_counts()
    devs = [
        abs(estimate_cluster_count(sensing.related[m], counts, lam) - t) for m, t in truth.items()
    ]
    if not devs:
        return math.nan, math.nan
    return float(np.mean(devs)), float(np.mean(list(truth.values())))
