# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Signatures and semantics match ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def disc_runs(xs, ys, double cx, double cy, double radius):
    cdef const double[:] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[:] y = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], i
    cdef double r2 = radius * radius, dx, dy
    cdef bint inside, prev = False
    starts = []
    ends = []
    for i in range(n):
        dx = x[i] - cx
        dy = y[i] - cy
        inside = dx * dx + dy * dy < r2
        if inside and not prev:
            starts.append(i)
        elif prev and not inside:
            ends.append(i - 1)
        prev = inside
    if prev:
        ends.append(n - 1)
    return np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64)


def segment_softmax(logits, indptr):
    cdef const double[:] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const cnp.int64_t[:] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    out_arr = np.empty(z.shape[0], dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t r, e
    cdef double m, s
    for r in range(ptr.shape[0] - 1):
        if ptr[r] == ptr[r + 1]:
            continue
        m = -INFINITY
        for e in range(ptr[r], ptr[r + 1]):
            if z[e] > m:
                m = z[e]
        s = 0.0
        for e in range(ptr[r], ptr[r + 1]):
            out[e] = exp(z[e] - m)
            s += out[e]
        for e in range(ptr[r], ptr[r + 1]):
            out[e] /= s
    return out_arr


def segment_softmax_backward(weights, grad_w, indptr):
    cdef const double[:] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:] g = np.ascontiguousarray(grad_w, dtype=np.float64)
    cdef const cnp.int64_t[:] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    out_arr = np.empty(w.shape[0], dtype=np.float64)
    cdef double[:] out = out_arr
    cdef Py_ssize_t r, e
    cdef double dot
    for r in range(ptr.shape[0] - 1):
        dot = 0.0
        for e in range(ptr[r], ptr[r + 1]):
            dot += w[e] * g[e]
        for e in range(ptr[r], ptr[r + 1]):
            out[e] = w[e] * (g[e] - dot)
    return out_arr


def spmm(indptr, indices, data, Y):
    cdef const cnp.int64_t[:] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[:] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:] a = np.ascontiguousarray(data, dtype=np.float64)
    cdef const double[:, :] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n_rows = ptr.shape[0] - 1, d = y.shape[1], r, e, k, j
    out_arr = np.zeros((n_rows, d), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef double w
    for r in range(n_rows):
        for e in range(ptr[r], ptr[r + 1]):
            w = a[e]
            j = idx[e]
            for k in range(d):
                out[r, k] += w * y[j, k]
    return out_arr


def spmm_t(indptr, indices, data, G, Py_ssize_t n_cols):
    cdef const cnp.int64_t[:] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[:] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:] a = np.ascontiguousarray(data, dtype=np.float64)
    cdef const double[:, :] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t n_rows = ptr.shape[0] - 1, d = g.shape[1], r, e, k, j
    out_arr = np.zeros((n_cols, d), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef double w
    for r in range(n_rows):
        for e in range(ptr[r], ptr[r + 1]):
            w = a[e]
            j = idx[e]
            for k in range(d):
                out[j, k] += w * g[r, k]
    return out_arr


def edge_dot(indptr, indices, G, Y):
    cdef const cnp.int64_t[:] ptr = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[:] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const double[:, :] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[:, :] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n_rows = ptr.shape[0] - 1, d = g.shape[1], r, e, k, j
    out_arr = np.empty(idx.shape[0], dtype=np.float64)
    cdef double[:] out = out_arr
    cdef double s
    for r in range(n_rows):
        for e in range(ptr[r], ptr[r + 1]):
            j = idx[e]
            s = 0.0
            for k in range(d):
                s += g[r, k] * y[j, k]
            out[e] = s
    return out_arr


def pair_histogram(pair_idx, values, Py_ssize_t n_pairs, Py_ssize_t n_total, Py_ssize_t bins):
    cdef const cnp.int64_t[:] p = np.ascontiguousarray(pair_idx, dtype=np.int64)
    cdef const double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    hist_arr = np.zeros((n_pairs, bins), dtype=np.float64)
    cdef double[:, :] hist = hist_arr
    cdef Py_ssize_t e, b, i
    cdef double inv = 1.0 / n_total
    for i in range(n_pairs):
        hist[i, 0] = n_total
    for e in range(p.shape[0]):
        b = <Py_ssize_t>(v[e] * bins)
        if b > bins - 1:
            b = bins - 1
        hist[p[e], b] += 1.0
        hist[p[e], 0] -= 1.0
    for i in range(n_pairs):
        for b in range(bins):
            hist[i, b] *= inv
    return hist_arr


cdef Py_ssize_t _find(cnp.int64_t[:] parent, Py_ssize_t x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def union_components(Py_ssize_t n, edge_a, edge_b):
    cdef const cnp.int64_t[:] ea = np.ascontiguousarray(edge_a, dtype=np.int64)
    cdef const cnp.int64_t[:] eb = np.ascontiguousarray(edge_b, dtype=np.int64)
    parent_arr = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[:] parent = parent_arr
    cdef Py_ssize_t e, ra, rb, i
    for e in range(ea.shape[0]):
        ra = _find(parent, ea[e])
        rb = _find(parent, eb[e])
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    for i in range(n):
        parent[i] = _find(parent, i)
    return parent_arr


def batch_hard(sim, labels):
    cdef const double[:, :] s = np.ascontiguousarray(sim, dtype=np.float64)
    cdef const cnp.int64_t[:] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = lab.shape[0], i, j
    pos_arr = np.full(n, -1, dtype=np.int64)
    neg_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[:] pos = pos_arr
    cdef cnp.int64_t[:] neg = neg_arr
    cdef double best_p, best_n
    for i in range(n):
        best_p = INFINITY
        best_n = -INFINITY
        for j in range(n):
            if lab[j] == lab[i]:
                if j != i and (s[i, j] < best_p or pos[i] < 0):
                    best_p = s[i, j]
                    pos[i] = j
            else:
                if s[i, j] > best_n or neg[i] < 0:
                    best_n = s[i, j]
                    neg[i] = j
    return pos_arr, neg_arr
