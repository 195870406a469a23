"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one-to-one and are used whenever the
compiled extension is unavailable (or ``WIREID_PURE_PYTHON=1``).
"""
import numpy as np


def disc_runs(xs, ys, cx, cy, radius):
    """Maximal runs of consecutive samples strictly inside a disc.

    Returns ``(starts, ends)``, inclusive sample indices.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    dx = xs - cx
    dy = ys - cy
    inside = (dx * dx + dy * dy) < radius * radius
    if not inside.any():
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    padded = np.concatenate(([False], inside, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1).astype(np.int64)
    ends = (np.flatnonzero(edges == -1) - 1).astype(np.int64)
    return starts, ends


def _row_ids(indptr):
    counts = np.diff(indptr)
    return np.repeat(np.arange(len(counts), dtype=np.int64), counts)


def segment_softmax(logits, indptr):
    logits = np.asarray(logits, dtype=np.float64)
    n_rows = len(indptr) - 1
    rows = _row_ids(indptr)
    row_max = np.full(n_rows, -np.inf)
    np.maximum.at(row_max, rows, logits)
    e = np.exp(logits - row_max[rows])
    denom = np.bincount(rows, weights=e, minlength=n_rows)
    return e / denom[rows]


def segment_softmax_backward(weights, grad_w, indptr):
    rows = _row_ids(indptr)
    n_rows = len(indptr) - 1
    dot = np.bincount(rows, weights=weights * grad_w, minlength=n_rows)
    return weights * (grad_w - dot[rows])


def spmm(indptr, indices, data, Y):
    Y = np.asarray(Y, dtype=np.float64)
    n_rows = len(indptr) - 1
    rows = _row_ids(indptr)
    out = np.zeros((n_rows, Y.shape[1]))
    np.add.at(out, rows, data[:, None] * Y[indices])
    return out


def spmm_t(indptr, indices, data, G, n_cols):
    G = np.asarray(G, dtype=np.float64)
    rows = _row_ids(indptr)
    out = np.zeros((n_cols, G.shape[1]))
    np.add.at(out, indices, data[:, None] * G[rows])
    return out


def edge_dot(indptr, indices, G, Y):
    rows = _row_ids(indptr)
    return np.einsum("ed,ed->e", G[rows], Y[indices])


def pair_histogram(pair_idx, values, n_pairs, n_total, bins):
    """Normalized histograms of per-pair value lists.

    Each pair owns ``n_total`` slots; only nonzero values are listed, the
    remaining slots are zeros and land in bin 0.
    """
    pair_idx = np.asarray(pair_idx, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    b = np.minimum((values * bins).astype(np.int64), bins - 1)
    hist = np.zeros((n_pairs, bins))
    np.add.at(hist, (pair_idx, b), 1.0)
    listed = np.bincount(pair_idx, minlength=n_pairs).astype(np.float64)
    hist[:, 0] += n_total - listed
    return hist / n_total


def union_components(n, edge_a, edge_b):
    """Union-find over ``n`` nodes; each node maps to its component's min id."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(np.asarray(edge_a).tolist(), np.asarray(edge_b).tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    return np.array([find(i) for i in range(n)], dtype=np.int64)


def batch_hard(sim, labels):
    """Hardest positive (min sim, same label, not self) and hardest
    negative (max sim, other label) per anchor; -1 where absent."""
    sim = np.asarray(sim, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    pos_sim = np.where(pos_mask, sim, np.inf)
    neg_sim = np.where(neg_mask, sim, -np.inf)
    pos = np.argmin(pos_sim, axis=1).astype(np.int64)
    neg = np.argmax(neg_sim, axis=1).astype(np.int64)
    pos[~pos_mask.any(axis=1)] = -1
    neg[~neg_mask.any(axis=1)] = -1
    return pos, neg
