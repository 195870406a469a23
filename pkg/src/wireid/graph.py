"""Histogram-adjacency graph network over videos.

Wireless similarities are summarised per video pair as a histogram over
trajectories.  Each graph module (one "head") scores every supported pair
from its histogram, turns the scores into a row-normalised adjacency over
the support of the mean similarity, and propagates linearly transformed
node features along it.  Several heads are concatenated; the classifier is
one more module whose output width is the number of classes and which
skips the final normalisation and activation.

The support always includes the diagonal, so a node with no wireless
neighbours attends only to itself.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .mmda import WirelessSimilarityTensor
from .nn import (
    Adam,
    batch_hard_triplet,
    batchnorm_backward,
    batchnorm_forward,
    elu,
    elu_grad,
    init_linear,
    l2_normalize,
    l2_normalize_backward,
    leaky_relu,
    leaky_relu_grad,
    load_checkpoint,
    save_checkpoint,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)

EDGE_HIDDEN = 16


class GraphError(ValueError):
    pass


def average_affinity(S: WirelessSimilarityTensor) -> np.ndarray:
    """Dense mean over trajectories; diagonal is 1, pairs never co-clustered are 0."""
    if S.n_trajectories < 1:
        raise GraphError("no trajectories: mean wireless affinity is undefined")
    A = np.zeros((S.n_videos, S.n_videos))
    np.add.at(A, (S.i, S.j), S.values)
    A = A + A.T
    A /= S.n_trajectories
    np.fill_diagonal(A, 1.0)
    return A


def similarity_histogram(S: WirelessSimilarityTensor, i: int, j: int, bins: int = 32) -> np.ndarray:
    """Normalised histogram of ``S[i, j, :]`` over equal-width bins on [0, 1]."""
    if bins < 2:
        raise GraphError(f"bins must be >= 2, got {bins}")
    M = S.n_trajectories
    if i == j:
        values = np.ones(M)
    else:
        lo, hi = min(i, j), max(i, j)
        hit = (S.i == lo) & (S.j == hi)
        values = np.concatenate([S.values[hit], np.zeros(M - int(hit.sum()))])
    b = np.minimum((values * bins).astype(np.int64), bins - 1)
    return np.bincount(b, minlength=bins) / M


@dataclass
class GraphInputs:
    """CSR view of the support of the mean affinity plus per-edge histograms."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    hist: np.ndarray  # (E, bins)
    a_avg: np.ndarray  # (E,)

    @property
    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def dense(self, values) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.indices] = values
        return out


def build_graph_inputs(S: WirelessSimilarityTensor, bins: int = 32) -> GraphInputs:
    if S.n_trajectories < 1:
        raise GraphError("no trajectories: graph inputs are undefined")
    if bins < 2:
        raise GraphError(f"bins must be >= 2, got {bins}")
    n, M = S.n_videos, S.n_trajectories
    pair_keys = S.i * n + S.j
    uniq, pair_idx = np.unique(pair_keys, return_inverse=True)
    pair_hist = kernels.pair_histogram(pair_idx, S.values, len(uniq), M, bins)
    pair_avg = np.bincount(pair_idx, weights=S.values, minlength=len(uniq)) / M
    pi, pj = uniq // n, uniq % n

    diag = np.arange(n)
    diag_hist = np.zeros((n, bins))
    diag_hist[:, bins - 1] = 1.0
    rows = np.concatenate([pi, pj, diag])
    cols = np.concatenate([pj, pi, diag])
    hist = np.concatenate([pair_hist, pair_hist, diag_hist])
    avg = np.concatenate([pair_avg, pair_avg, np.ones(n)])
    order = np.lexsort((cols, rows))
    rows, cols, hist, avg = rows[order], cols[order], hist[order], avg[order]
    indptr = np.concatenate(([0], np.cumsum(np.bincount(rows, minlength=n)))).astype(np.int64)
    return GraphInputs(n, indptr, cols.astype(np.int64), hist, avg)


def self_loop_inputs(n: int, bins: int = 32) -> GraphInputs:
    """Graph with only self-loops (what an empty wireless tensor yields)."""
    hist = np.zeros((n, bins))
    hist[:, bins - 1] = 1.0
    return GraphInputs(n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64), hist, np.ones(n))


@dataclass
class MmgnConfig:
    d_in: int = 32
    d_hid: int = 16
    heads: int = 6
    bins: int = 32
    n_classes: int = 2

    @property
    def out_width(self) -> int:
        return self.heads * self.d_hid


def _edge_params(rng, prefix, bins):
    return {
        f"{prefix}.W1": init_linear(rng, bins, EDGE_HIDDEN),
        f"{prefix}.g1": np.ones(EDGE_HIDDEN),
        f"{prefix}.b1": np.zeros(EDGE_HIDDEN),
        f"{prefix}.W2": init_linear(rng, EDGE_HIDDEN, 1),
        f"{prefix}.g2": np.ones(1),
        f"{prefix}.b2": np.zeros(1),
    }


class MmgnModel:
    """Multi-head graph network plus graph-module classifier.

    Linear layers that feed a normalisation carry no bias (it would be
    cancelled by the normalisation); the classifier output has one.
    """

    def __init__(self, config: MmgnConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        if params is not None:
            self.params = params
            return
        rng = np.random.default_rng(seed)
        c = config
        p = {}
        for h in range(c.heads):
            p.update(_edge_params(rng, f"h{h}", c.bins))
            p[f"h{h}.Wn"] = init_linear(rng, c.d_in, c.d_hid)
            p[f"h{h}.g"] = np.ones(c.d_hid)
            p[f"h{h}.b"] = np.zeros(c.d_hid)
        p.update(_edge_params(rng, "c", c.bins))
        p["c.Wn"] = init_linear(rng, c.out_width, c.n_classes)
        p["c.bias"] = np.zeros(c.n_classes)
        self.params = p

    # ------------------------------------------------------------ pieces

    def _adjacency(self, prefix, g: GraphInputs):
        p = self.params
        h1 = g.hist @ p[f"{prefix}.W1"]
        n1, bn1 = batchnorm_forward(h1, p[f"{prefix}.g1"], p[f"{prefix}.b1"])
        a1 = leaky_relu(n1)
        h2 = a1 @ p[f"{prefix}.W2"]
        n2, bn2 = batchnorm_forward(h2, p[f"{prefix}.g2"], p[f"{prefix}.b2"])
        logits = leaky_relu(n2)[:, 0]
        w = kernels.segment_softmax(logits, g.indptr)
        return w, (n1, bn1, a1, n2, bn2)

    def _adjacency_backward(self, prefix, g: GraphInputs, w, cache, dw, grads):
        p = self.params
        n1, bn1, a1, n2, bn2 = cache
        dlogit = kernels.segment_softmax_backward(w, dw, g.indptr)
        dn2 = leaky_relu_grad(n2, dlogit[:, None])
        dh2, grads[f"{prefix}.g2"], grads[f"{prefix}.b2"] = batchnorm_backward(dn2, bn2)
        grads[f"{prefix}.W2"] = a1.T @ dh2
        dn1 = leaky_relu_grad(n1, dh2 @ p[f"{prefix}.W2"].T)
        dh1, grads[f"{prefix}.g1"], grads[f"{prefix}.b1"] = batchnorm_backward(dn1, bn1)
        grads[f"{prefix}.W1"] = g.hist.T @ dh1

    def head_forward(self, h: int, X, g: GraphInputs):
        """One graph module: returns (Z_head, edge weights, cache)."""
        p = self.params
        w, acache = self._adjacency(f"h{h}", g)
        Y = X @ p[f"h{h}.Wn"]
        M = kernels.spmm(g.indptr, g.indices, w, Y)
        pre, bn = batchnorm_forward(M, p[f"h{h}.g"], p[f"h{h}.b"])
        return elu(pre), w, (acache, Y, pre, bn)

    def forward(self, X, g: GraphInputs):
        """Returns ``(Z, logits, cache)``."""
        X = np.asarray(X, dtype=np.float64)
        outs, caches = [], []
        for h in range(self.config.heads):
            z, w, cache = self.head_forward(h, X, g)
            outs.append(z)
            caches.append((w, cache))
        Z = np.concatenate(outs, axis=1)
        wc, ccache = self._adjacency("c", g)
        Yc = Z @ self.params["c.Wn"]
        logits = kernels.spmm(g.indptr, g.indices, wc, Yc) + self.params["c.bias"]
        return Z, logits, (X, caches, wc, ccache, Yc, Z)

    def backward(self, g: GraphInputs, cache, dlogits, dZ_extra=None):
        """Parameter gradients given d(loss)/d(logits) (and optionally d/dZ)."""
        p = self.params
        X, caches, wc, ccache, Yc, Z = cache
        grads: dict[str, np.ndarray] = {}
        grads["c.bias"] = dlogits.sum(axis=0)
        dYc = kernels.spmm_t(g.indptr, g.indices, wc, dlogits, g.n)
        dwc = kernels.edge_dot(g.indptr, g.indices, dlogits, Yc)
        grads["c.Wn"] = Z.T @ dYc
        dZ = dYc @ p["c.Wn"].T
        if dZ_extra is not None:
            dZ = dZ + dZ_extra
        self._adjacency_backward("c", g, wc, ccache, dwc, grads)
        d = self.config.d_hid
        for h, (w, (acache, Y, pre, bn)) in enumerate(caches):
            dpre = elu_grad(pre, dZ[:, h * d:(h + 1) * d])
            dM, grads[f"h{h}.g"], grads[f"h{h}.b"] = batchnorm_backward(dpre, bn)
            dY = kernels.spmm_t(g.indptr, g.indices, w, dM, g.n)
            dw = kernels.edge_dot(g.indptr, g.indices, dM, Y)
            grads[f"h{h}.Wn"] = X.T @ dY
            self._adjacency_backward(f"h{h}", g, w, acache, dw, grads)
        return grads

    def adjacency(self, g: GraphInputs, head: int | None = None) -> np.ndarray:
        """Dense learned adjacency of a head (``None`` = classifier)."""
        w, _ = self._adjacency("c" if head is None else f"h{head}", g)
        return g.dense(w)

    def save(self, path) -> None:
        save_checkpoint(path, "mmgn", self.params, asdict(self.config))

    @classmethod
    def load(cls, path) -> "MmgnModel":
        params, cfg = load_checkpoint(path, "mmgn")
        return cls(MmgnConfig(**cfg), params=params)


def mgm_forward(model: MmgnModel, head: int, X, g: GraphInputs):
    """Single graph module: returns ``(Z_head, dense adjacency)``."""
    z, w, _ = model.head_forward(head, np.asarray(X, dtype=np.float64), g)
    return z, g.dense(w)


def mmgn_forward(model: MmgnModel, X, g: GraphInputs):
    Z, logits, _ = model.forward(X, g)
    return Z, logits


def extract_multimodal_features(model: MmgnModel, X, g: GraphInputs) -> np.ndarray:
    return model.forward(X, g)[0]


@dataclass
class MmgnHyper:
    epochs: int = 80
    lr: float = 1e-2
    weight_decay: float = 5e-4
    use_triplet: bool = False
    triplet_margin: float = 0.4


def mmgn_loss(model: MmgnModel, X, g: GraphInputs, labels, hyper: MmgnHyper | None = None):
    """Mean cross-entropy over labelled nodes (``labels >= 0``), plus the
    optional batch-hard triplet term on normalised Z.  Returns (loss, grads)."""
    hyper = hyper or MmgnHyper()
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.flatnonzero(labels >= 0)
    Z, logits, cache = model.forward(X, g)
    loss, dl = softmax_cross_entropy(logits[idx], labels[idx])
    dlogits = np.zeros_like(logits)
    dlogits[idx] = dl
    dZ = None
    if hyper.use_triplet:
        u, norm = l2_normalize(Z[idx])
        tl, du, _ = batch_hard_triplet(u, labels[idx], hyper.triplet_margin)
        loss += tl
        dZ = np.zeros_like(Z)
        dZ[idx] = l2_normalize_backward(du, u, norm)
    return loss, model.backward(g, cache, dlogits, dZ)


def mmgn_train(model: MmgnModel, X, g: GraphInputs, labels, hyper: MmgnHyper | None = None) -> list[float]:
    """Full-graph Adam training on pseudo labels; returns the per-epoch losses.

    Needs at least two labelled classes; otherwise training is skipped
    (the model is left untouched) and an empty history is returned.
    """
    hyper = hyper or MmgnHyper()
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels[labels >= 0])
    if len(classes) < 2:
        log.warning("mmgn_train: fewer than 2 labelled classes, training skipped")
        return []
    opt = Adam(model.params, hyper.lr, hyper.weight_decay)
    history = []
    for _ in range(hyper.epochs):
        loss, grads = mmgn_loss(model, X, g, labels, hyper)
        history.append(loss)
        opt.step(grads)
    return history
