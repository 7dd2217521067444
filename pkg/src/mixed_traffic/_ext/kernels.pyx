# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Signatures mirror ``mixed_traffic._fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite, sqrt, pow, floor, ceil, fmax, fmin

cnp.import_array()


def idm_batch(const double[::1] v, const double[::1] gap, const double[::1] lead_v,
              const unsigned char[::1] has_leader, double v0, double T, double s0,
              double a_max, double b, double delta, double b_emergency):
    cdef Py_ssize_t n = v.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] acc = out
    cdef double sqrt_ab = 2.0 * sqrt(a_max * b)
    cdef double free, s_star, a
    for i in range(n):
        free = 1.0 - pow(v[i] / v0, delta)
        if has_leader[i]:
            if gap[i] <= 0.0:
                acc[i] = -b_emergency
                continue
            s_star = s0 + fmax(0.0, v[i] * T + v[i] * (v[i] - lead_v[i]) / sqrt_ab)
            a = a_max * (free - (s_star / gap[i]) * (s_star / gap[i]))
        else:
            a = a_max * free
        acc[i] = fmin(a_max, fmax(-b_emergency, a))
    return out


def sumtree_update(double[::1] tree, Py_ssize_t leaf_base,
                   const cnp.int64_t[::1] leaves, const double[::1] values):
    cdef Py_ssize_t k, node
    cdef double delta
    for k in range(leaves.shape[0]):
        node = leaf_base + leaves[k]
        delta = values[k] - tree[node]
        while node >= 1:
            tree[node] += delta
            node >>= 1


def sumtree_find(const double[::1] tree, Py_ssize_t leaf_base, const double[::1] targets):
    cdef Py_ssize_t n = targets.shape[0], k, node
    cdef double t
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    for k in range(n):
        t = targets[k]
        node = 1
        while node < leaf_base:
            node <<= 1
            if t >= tree[node] and tree[node + 1] > 0.0:
                t -= tree[node]
                node += 1
        res[k] = node - leaf_base
    return out


def categorical_projection(const double[:, ::1] next_probs, const double[::1] rewards,
                           const unsigned char[::1] dones, double gamma,
                           double v_min, double v_max):
    cdef Py_ssize_t B = next_probs.shape[0], K = next_probs.shape[1]
    cdef Py_ssize_t i, j, lo, hi
    cdef double dz = (v_max - v_min) / (K - 1)
    cdef double tz, pos, p, disc
    out = np.zeros((B, K), dtype=np.float64)
    cdef double[:, ::1] m = out
    for i in range(B):
        disc = 0.0 if dones[i] else gamma
        for j in range(K):
            p = next_probs[i, j]
            if p == 0.0:
                continue
            tz = rewards[i] + disc * (v_min + j * dz)
            tz = fmin(v_max, fmax(v_min, tz))
            pos = (tz - v_min) / dz
            lo = <Py_ssize_t>floor(pos)
            hi = <Py_ssize_t>ceil(pos)
            if hi > K - 1:
                hi = K - 1
            if lo > K - 1:
                lo = K - 1
            if lo == hi:
                m[i, lo] += p
            else:
                m[i, lo] += p * (hi - pos)
                m[i, hi] += p * (pos - lo)
    return out


def adam_update(double[::1] param, const double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double c1, double c2, double eps):
    """Fused bias-corrected Adam step over flat arrays; returns the non-finite count."""
    cdef Py_ssize_t n = param.shape[0], i
    cdef Py_ssize_t bad = 0
    cdef double g, mi, vi
    cdef double step = lr / c1, inv_sc2 = 1.0 / sqrt(c2)
    cdef double a1 = 1.0 - beta1, a2 = 1.0 - beta2
    for i in range(n):
        if not isfinite(grad[i]):
            bad += 1
    if bad:
        return bad
    for i in range(n):
        g = grad[i]
        mi = beta1 * m[i] + a1 * g
        vi = beta2 * v[i] + a2 * g * g
        m[i] = mi
        v[i] = vi
        param[i] -= step * mi / (sqrt(vi) * inv_sc2 + eps)
    return 0
