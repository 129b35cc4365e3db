"""Independent reference implementations used only by the tests.

Plain nested loops in float64; deliberately share no code with the package.
"""

import numpy as np


def conv2d_naive(x, w, b):
    h, wd, c = x.shape
    r, _, _, n = w.shape
    top = (r - 1) // 2
    out = np.zeros((h, wd, n))
    for m in range(h):
        for q in range(wd):
            for o in range(n):
                s = b[o]
                for i in range(r):
                    for j in range(r):
                        y, z = m + i - top, q + j - top
                        if 0 <= y < h and 0 <= z < wd:
                            for ch in range(c):
                                s += w[i, j, ch, o] * x[y, z, ch]
                out[m, q, o] = s
    return out


def maxpool_naive(x):
    h, w, c = x.shape
    out = np.zeros((h // 2, w // 2, c))
    for m in range(h // 2):
        for q in range(w // 2):
            for ch in range(c):
                out[m, q, ch] = max(x[2 * m + i, 2 * q + j, ch] for i in range(2) for j in range(2))
    return out


def dense_naive(x, w, b):
    return np.array([b[j] + sum(w[i, j] * x[i] for i in range(len(x))) for j in range(w.shape[1])])


def temporal_naive(window, w, b):
    t_len, m_len, n_len, c_len = window.shape
    out = np.zeros((m_len, n_len, c_len))
    for m in range(m_len):
        for q in range(n_len):
            for c in range(c_len):
                out[m, q, c] = b[c] + sum(w[c, t] * window[t, m, q, c] for t in range(t_len))
    return out


def softmax_naive(z):
    e = [np.exp(v) for v in z]
    s = sum(e)
    return np.array([v / s for v in e])


def finite_diff(f, x, eps=1e-3):
    """Central differences of scalar ``f`` with respect to every entry of ``x`` (in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = f()
        x[idx] = orig - eps
        down = f()
        x[idx] = orig
        grad[idx] = (up - down) / (2 * eps)
    return grad


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)).max())
