"""Small numpy building blocks shared by the visual and graph models.

Every layer is a pair of functions: ``*_forward`` returns the output and
a cache; ``*_backward`` consumes the upstream gradient and the cache.
Parameters live in plain ``dict[str, np.ndarray]`` so optimizers and
checkpoints can treat all models uniformly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import kernels

BN_EPS = 1e-5
LEAKY_SLOPE = 0.01
CHECKPOINT_VERSION = 1


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Semi-orthogonal matrix (orthonormal rows or columns, whichever fits)."""
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if fan_in >= fan_out else q.T


def leaky_relu(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def leaky_relu_grad(x, g):
    return np.where(x > 0, g, LEAKY_SLOPE * g)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x, g):
    return np.where(x > 0, g, g * np.exp(np.minimum(x, 0.0)))


def batchnorm_forward(x, gamma, beta):
    """Normalize over rows using the batch's own statistics (no running averages)."""
    mu = x.mean(axis=0)
    xc = x - mu
    var = (xc * xc).mean(axis=0)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = xc * inv
    return gamma * xhat + beta, (xhat, inv, gamma)


def batchnorm_backward(g, cache):
    xhat, inv, gamma = cache
    n = g.shape[0]
    dgamma = (g * xhat).sum(axis=0)
    dbeta = g.sum(axis=0)
    dxhat = g * gamma
    dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy and its gradient w.r.t. ``logits``."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(targets)
    loss = -logp[np.arange(n), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k] + self.weight_decay * p
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params, lr, weight_decay=0.0, momentum=0.0):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.buf = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        for k, p in self.params.items():
            g = grads[k] + self.weight_decay * p
            if self.momentum:
                self.buf[k] = self.momentum * self.buf[k] + g
                g = self.buf[k]
            p -= self.lr * g


def save_checkpoint(path, kind: str, params: dict, config: dict) -> None:
    """JSON parameter dump with a shape manifest; floats kept at full precision."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "config": config,
        "shapes": {k: list(v.shape) for k, v in params.items()},
        "params": {k: v.ravel().tolist() for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, kind: str):
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('format_version')!r}")
    if doc.get("kind") != kind:
        raise ValueError(f"{path}: checkpoint holds {doc.get('kind')!r}, expected {kind!r}")
    params = {
        k: np.asarray(doc["params"][k], dtype=np.float64).reshape(shape)
        for k, shape in doc["shapes"].items()
    }
    return params, doc["config"]


def l2_normalize(x):
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    return x / norm, norm


def l2_normalize_backward(g, u, norm):
    return (g - u * (u * g).sum(axis=1, keepdims=True)) / norm


def batch_hard_triplet(u, labels, margin):
    """Batch-hard triplet loss on unit rows with distance ``1 - cosine``.

    Returns ``(loss, grad_u, (pos, neg))``; anchors lacking a positive or a
    negative contribute zero but still count in the mean.
    """
    labels = np.asarray(labels, dtype=np.int64)
    sim = u @ u.T
    pos, neg = kernels.batch_hard(sim, labels)
    n = len(labels)
    valid = (pos >= 0) & (neg >= 0)
    a = np.flatnonzero(valid)
    hinge = sim[a, neg[a]] - sim[a, pos[a]] + margin
    active = a[hinge > 0]
    loss = float(np.maximum(hinge, 0.0).sum() / n)
    grad = np.zeros_like(u)
    np.add.at(grad, active, (u[neg[active]] - u[pos[active]]) / n)
    np.add.at(grad, neg[active], u[active] / n)
    np.add.at(grad, pos[active], -u[active] / n)
    return loss, grad, (pos, neg)
