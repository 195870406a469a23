"""Mutual cross-camera nearest-neighbour pseudo-labelling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class PseudoLabeling:
    """Partial labelling: ``labels[i] == -1`` marks an unlabelled video."""

    labels: np.ndarray

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    @property
    def coverage(self) -> float:
        return float((self.labels >= 0).mean()) if len(self.labels) else 0.0

    def as_dict(self) -> dict[int, int]:
        return {int(i): int(self.labels[i]) for i in self.labeled}


def _unit_rows(X):
    X = np.asarray(X, dtype=np.float64)
    n = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(n > 0, n, 1.0)


def mutual_nn_edges(features, camera_ids):
    """All mutually-nearest cross-camera pairs ``(i, j)``, ``i < j``, in deterministic order.

    For each camera pair, every video's nearest neighbour at the other camera
    is found by cosine similarity (ties go to the lowest video id).
    """
    X = _unit_rows(features)
    cams = np.asarray(camera_ids)
    members = {int(c): np.flatnonzero(cams == c) for c in np.unique(cams)}
    order = sorted(members)
    edges = []
    for ai, a in enumerate(order):
        for b in order[ai + 1:]:
            ia, ib = members[a], members[b]
            sim = X[ia] @ X[ib].T
            nn_ab = np.argmax(sim, axis=1)
            nn_ba = np.argmax(sim, axis=0)
            for p in range(len(ia)):
                q = nn_ab[p]
                if nn_ba[q] == p:
                    i, j = int(ia[p]), int(ib[q])
                    edges.append((min(i, j), max(i, j)))
    edges.sort()
    return edges


def nna(features, camera_ids) -> PseudoLabeling:
    """Merge mutual cross-camera nearest neighbours into pseudo identities.

    Components of the mutual-NN graph with at least two videos become
    classes numbered by their smallest member; singletons stay unlabelled.
    """
    n = len(camera_ids)
    edges = mutual_nn_edges(features, camera_ids)
    ea = np.array([e[0] for e in edges], dtype=np.int64)
    eb = np.array([e[1] for e in edges], dtype=np.int64)
    root = kernels.union_components(n, ea, eb)
    sizes = np.bincount(root, minlength=n)
    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    remap: dict[int, int] = {}
    for i in range(n):
        r = int(root[i])
        if sizes[r] < 2:
            continue
        if r not in remap:
            remap[r] = next_label
            next_label += 1
        labels[i] = remap[r]
    return PseudoLabeling(labels)
