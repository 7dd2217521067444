"""Pure-Python/numpy versions of the compiled kernels.

Same signatures and results as ``mixed_traffic._ext.kernels``; used when the
extension is not built or ``MIXED_TRAFFIC_PURE_PYTHON=1`` is set.
"""
import numpy as np


def idm_batch(v, gap, lead_v, has_leader, v0, T, s0, a_max, b, delta, b_emergency):
    v = np.asarray(v, dtype=np.float64)
    lead = np.asarray(has_leader, dtype=bool)
    free = 1.0 - (v / v0) ** delta
    s_star = s0 + np.maximum(0.0, v * T + v * (v - lead_v) / (2.0 * np.sqrt(a_max * b)))
    safe_gap = np.where(gap > 0.0, gap, 1.0)
    interaction = np.where(lead, (s_star / safe_gap) ** 2, 0.0)
    acc = np.clip(a_max * (free - interaction), -b_emergency, a_max)
    return np.where(lead & (gap <= 0.0), -b_emergency, acc)


def sumtree_update(tree, leaf_base, leaves, values):
    for leaf, value in zip(leaves, values):
        node = leaf_base + int(leaf)
        delta = value - tree[node]
        while node >= 1:
            tree[node] += delta
            node >>= 1


def sumtree_find(tree, leaf_base, targets):
    out = np.empty(len(targets), dtype=np.int64)
    for k, t in enumerate(targets):
        node = 1
        while node < leaf_base:
            node <<= 1
            if t >= tree[node] and tree[node + 1] > 0.0:
                t -= tree[node]
                node += 1
        out[k] = node - leaf_base
    return out


def categorical_projection(next_probs, rewards, dones, gamma, v_min, v_max):
    B, K = next_probs.shape
    dz = (v_max - v_min) / (K - 1)
    support = v_min + dz * np.arange(K)
    disc = np.where(np.asarray(dones, dtype=bool), 0.0, gamma)
    tz = np.clip(rewards[:, None] + disc[:, None] * support[None, :], v_min, v_max)
    pos = (tz - v_min) / dz
    lo = np.minimum(np.floor(pos).astype(np.int64), K - 1)
    hi = np.minimum(np.ceil(pos).astype(np.int64), K - 1)
    same = lo == hi
    rows = np.repeat(np.arange(B), K).reshape(B, K)
    out = np.zeros((B, K))
    np.add.at(out, (rows, lo), np.where(same, next_probs, next_probs * (hi - pos)))
    np.add.at(out, (rows, hi), np.where(same, 0.0, next_probs * (pos - lo)))
    return out


def adam_update(param, grad, m, v, lr, beta1, beta2, c1, c2, eps):
    bad = int(grad.size - np.isfinite(grad).sum())
    if bad:
        return bad
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= (lr / c1) * m / (np.sqrt(v) / np.sqrt(c2) + eps)
    return 0
