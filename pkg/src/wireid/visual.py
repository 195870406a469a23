"""Trainable appearance embedding standing in for the re-id backbone.

A two-layer perceptron maps raw descriptors to unit-norm embeddings.  It
is first trained with one instance classifier per camera (each video its
own class), then fine-tuned with a batch-hard triplet loss on pseudo
labels.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .nn import (
    SGD,
    Adam,
    batch_hard_triplet,
    elu,
    elu_grad,
    init_linear,
    init_orthogonal,
    l2_normalize,
    l2_normalize_backward,
    load_checkpoint,
    save_checkpoint,
    softmax_cross_entropy,
)

log = logging.getLogger(__name__)


@dataclass
class VisualConfig:
    d_raw: int = 48
    d_mid: int = 64
    d_feat: int = 32


class VisualModel:
    def __init__(self, config: VisualConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        if params is not None:
            self.params = params
            return
        rng = np.random.default_rng(seed)
        c = config
        self.params = {
            "W1": init_orthogonal(rng, c.d_raw, c.d_mid),
            "b1": np.zeros(c.d_mid),
            "W2": init_orthogonal(rng, c.d_mid, c.d_feat),
            "b2": np.zeros(c.d_feat),
        }

    @classmethod
    def from_descriptors(cls, config: VisualConfig, descriptors, seed: int = 0) -> "VisualModel":
        """Label-free warm start that mimics a pretrained backbone.

        The first layer is a random semi-orthogonal lift; the second is
        chosen so the composed linear part projects onto the leading
        principal directions of ``descriptors``.  Needs d_mid >= d_raw.
        """
        model = cls(config, seed)
        D = np.asarray(descriptors, dtype=np.float64)
        c = config
        if c.d_mid < c.d_raw or c.d_feat > min(c.d_raw, len(D)):
            log.info("principal-direction start not applicable; keeping random init")
            return model
        _, _, vt = np.linalg.svd(D, full_matrices=False)
        basis = vt[:c.d_feat].T
        model.params["W2"] = model.params["W1"].T @ basis
        return model

    def embed(self, D):
        """Unit-norm embeddings and the cache needed by :meth:`embed_backward`."""
        p = self.params
        h = D @ p["W1"] + p["b1"]
        a = elu(h)
        e = a @ p["W2"] + p["b2"]
        u, norm = l2_normalize(e)
        return u, (D, h, a, u, norm)

    def embed_backward(self, du, cache):
        D, h, a, u, norm = cache
        p = self.params
        de = l2_normalize_backward(du, u, norm)
        grads = {"W2": a.T @ de, "b2": de.sum(axis=0)}
        dh = elu_grad(h, de @ p["W2"].T)
        grads["W1"] = D.T @ dh
        grads["b1"] = dh.sum(axis=0)
        return grads

    def save(self, path) -> None:
        save_checkpoint(path, "visual", self.params, asdict(self.config))

    @classmethod
    def load(cls, path) -> "VisualModel":
        params, cfg = load_checkpoint(path, "visual")
        return cls(VisualConfig(**cfg), params=params)


def extract_features(model: VisualModel, descriptors) -> np.ndarray:
    return model.embed(np.asarray(descriptors, dtype=np.float64))[0]


@dataclass
class InitialHyper:
    epochs: int = 80
    lr: float = 3e-4
    weight_decay: float = 5e-4
    batch_size: int = 576


def camera_classifiers(rng, d_feat, camera_ids) -> dict[str, np.ndarray]:
    cams = np.asarray(camera_ids)
    return {
        f"cls{c}": init_linear(rng, d_feat, int((cams == c).sum()))
        for c in np.unique(cams).tolist()
    }


def instance_loss(model: VisualModel, classifiers, descriptors, camera_ids, local_index):
    """Sum over cameras of the mean cross-entropy of each camera's instance classifier."""
    u, cache = model.embed(descriptors)
    cams = np.asarray(camera_ids)
    du = np.zeros_like(u)
    grads_cls = {}
    total = 0.0
    for c in np.unique(cams).tolist():
        rows = np.flatnonzero(cams == c)
        W = classifiers[f"cls{c}"]
        loss, dl = softmax_cross_entropy(u[rows] @ W, local_index[rows])
        total += loss
        du[rows] += dl @ W.T
        grads_cls[f"cls{c}"] = u[rows].T @ dl
    grads = model.embed_backward(du, cache)
    for k in classifiers:
        grads[k] = grads_cls.get(k, np.zeros_like(classifiers[k]))
    return total, grads


def initial_train(model: VisualModel, descriptors, camera_ids, hyper: InitialHyper | None = None,
                  seed: int = 0) -> list[float]:
    """Per-camera instance classification; each video is its own class within its camera.

    The per-camera classifiers are discarded afterwards.  Returns epoch losses.
    """
    hyper = hyper or InitialHyper()
    D = np.asarray(descriptors, dtype=np.float64)
    cams = np.asarray(camera_ids)
    rng = np.random.default_rng(seed)
    local = np.zeros(len(cams), dtype=np.int64)
    for c in np.unique(cams):
        rows = np.flatnonzero(cams == c)
        local[rows] = np.arange(len(rows))
        if len(rows) == 1:
            log.info("camera %d has a single video; its classifier term is degenerate", c)
    classifiers = camera_classifiers(rng, model.config.d_feat, cams)
    params = {**model.params, **classifiers}
    opt = Adam(params, hyper.lr, hyper.weight_decay)
    history = []
    for _ in range(hyper.epochs):
        order = rng.permutation(len(D))
        epoch_loss = []
        for s in range(0, len(D), hyper.batch_size):
            b = order[s:s + hyper.batch_size]
            loss, grads = instance_loss(model, classifiers, D[b], cams[b], local[b])
            opt.step(grads)
            epoch_loss.append(loss)
        history.append(float(np.mean(epoch_loss)))
    return history


@dataclass
class TripletHyper:
    epochs: int = 5
    lr: float = 1e-2
    weight_decay: float = 5e-4
    momentum: float = 0.9
    margin: float = 0.4
    p_classes: int = 8
    k_samples: int = 4


def sample_pk_batches(rng, labels, p_classes: int, k_samples: int):
    """One epoch of P x K batches over the labelled videos.

    Classes are visited in a random order, P at a time; each contributes K
    members, drawn with replacement when it has fewer than K.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels[labels >= 0])
    members = {c: np.flatnonzero(labels == c) for c in classes.tolist()}
    order = rng.permutation(classes)
    batches = []
    for s in range(0, len(order), p_classes):
        chunk = order[s:s + p_classes]
        if len(chunk) < 2:
            continue
        idx = []
        for c in chunk.tolist():
            pool = members[c]
            idx.extend(rng.choice(pool, size=k_samples, replace=len(pool) < k_samples).tolist())
        batches.append(np.asarray(idx, dtype=np.int64))
    return batches


def triplet_loss(model: VisualModel, descriptors, labels, margin: float):
    u, cache = model.embed(descriptors)
    loss, du, _ = batch_hard_triplet(u, labels, margin)
    return loss, model.embed_backward(du, cache)


def triplet_finetune(model: VisualModel, descriptors, pseudo_labels, hyper: TripletHyper | None = None,
                     seed: int = 0) -> list[float]:
    """SGD on batch-hard triplet loss over P x K batches of labelled videos.

    Unlabelled videos (label -1) are never sampled.  Needs two classes with
    at least two members each; otherwise the round is skipped.
    """
    hyper = hyper or TripletHyper()
    D = np.asarray(descriptors, dtype=np.float64)
    labels = np.asarray(pseudo_labels, dtype=np.int64)
    _, sizes = np.unique(labels[labels >= 0], return_counts=True)
    if (sizes >= 2).sum() < 2:
        log.warning("triplet_finetune: need 2 classes with >= 2 members, round skipped")
        return []
    rng = np.random.default_rng(seed)
    opt = SGD(model.params, hyper.lr, hyper.weight_decay, hyper.momentum)
    history = []
    for _ in range(hyper.epochs):
        losses = []
        for b in sample_pk_batches(rng, labels, hyper.p_classes, hyper.k_samples):
            loss, grads = triplet_loss(model, D[b], labels[b], hyper.margin)
            opt.step(grads)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else 0.0)
    return history
