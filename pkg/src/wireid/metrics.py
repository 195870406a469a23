"""Retrieval and partition-agreement metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CMC_RANKS = (1, 5, 10)


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalScores:
    mAP: float
    cmc: dict[int, float]
    n_queries: int
    n_skipped: int = 0
    ap: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False, compare=False)


def average_precision(ranked_matches) -> float:
    """AP of a boolean relevance vector given in rank order."""
    hits = np.asarray(ranked_matches, dtype=bool)
    if not hits.any():
        raise MetricError("no relevant item in ranking")
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def cmc_map(features, camera_ids, identities, ranks=CMC_RANKS) -> RetrievalScores:
    """Cross-camera retrieval: each video queries all videos from other cameras.

    Ranking is by cosine similarity with ties broken by video id.  Queries
    without any cross-camera match are skipped and counted.
    """
    X = np.asarray(features, dtype=np.float64)
    X = X / np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1e-300)
    cams = np.asarray(camera_ids)
    ids = np.asarray(identities)
    sim = X @ X.T
    aps, first_hit = [], []
    skipped = 0
    all_ids = np.arange(len(ids))
    for q in range(len(ids)):
        gallery = np.flatnonzero(cams != cams[q])
        match = ids[gallery] == ids[q]
        if not match.any():
            skipped += 1
            continue
        order = np.lexsort((all_ids[gallery], -sim[q, gallery]))
        ranked = match[order]
        aps.append(average_precision(ranked))
        first_hit.append(int(np.argmax(ranked)) + 1)
    if not aps:
        raise MetricError("no query has a cross-camera match")
    first_hit = np.asarray(first_hit)
    cmc = {k: float((first_hit <= k).mean()) for k in ranks}
    aps = np.asarray(aps)
    return RetrievalScores(float(aps.mean()), cmc, len(aps), skipped, aps)


def _log_factorials(n: int) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, n + 1)))))


def _contingency(a, b):
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def expected_mutual_info(row_sums, col_sums, n: int) -> float:
    """Expected MI of two partitions with fixed marginals under random permutation.

    Equal marginal sizes give equal terms, so each distinct (a, b) pair is
    evaluated once and weighted by how often it occurs.
    """
    lf = _log_factorials(n)
    a_vals, a_mult = np.unique(np.asarray(row_sums, dtype=np.int64), return_counts=True)
    b_vals, b_mult = np.unique(np.asarray(col_sums, dtype=np.int64), return_counts=True)
    emi = 0.0
    for a, wa in zip(a_vals.tolist(), a_mult.tolist()):
        for b, wb in zip(b_vals.tolist(), b_mult.tolist()):
            lo = max(1, a + b - n)
            hi = min(a, b)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1)
            term = nij / n * (np.log(n * nij) - np.log(a * b))
            logp = (
                lf[a] + lf[b] + lf[n - a] + lf[n - b]
                - lf[n] - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n - a - b + nij]
            )
            emi += wa * wb * float((term * np.exp(logp)).sum())
    return emi


def ami(labels_a, labels_b) -> float:
    """Adjusted mutual information (arithmetic-mean normalisation, exact expected MI).

    When the normaliser vanishes (e.g. both sides a single class) the
    score is 1 for identical partitions and 0 otherwise.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("labelings must be 1-D and cover the same items")
    n = len(a)
    if n == 0:
        raise MetricError("empty labelings")
    table = _contingency(a, b)
    rows, cols = table.sum(axis=1), table.sum(axis=0)
    nz = table[table > 0]
    mi = float((nz / n * (np.log(n * nz) - np.log(np.outer(rows, cols)[table > 0]))).sum())
    h_a, h_b = _entropy(rows, n), _entropy(cols, n)
    emi = expected_mutual_info(rows.tolist(), cols.tolist(), n)
    denom = 0.5 * (h_a + h_b) - emi
    if abs(denom) < 1e-12:
        same = table.shape[0] == table.shape[1] == int((table > 0).sum())
        return 1.0 if same else 0.0
    return float((mi - emi) / denom)


def labeling_ami(labels, identities) -> float:
    """AMI of a partial pseudo labelling (``-1`` = unlabelled) on its labelled subset."""
    labels = np.asarray(labels)
    keep = labels >= 0
    if not keep.any():
        return float("nan")
    return ami(labels[keep], np.asarray(identities)[keep])
