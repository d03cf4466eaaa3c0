"""Independent reference implementations used as test oracles.

They are written as plain loops (or a generic QP method) and share no code
with the package, so agreement is evidence rather than tautology.
"""

import cmath
import math

import numpy as np


def naive_wl(x):
    total = 0.0
    for i in range(1, len(x)):
        total += abs(x[i] - x[i - 1])
    return total


def naive_var(x):
    n = len(x)
    mean = sum(x) / n
    return sum((v - mean) ** 2 for v in x) / n


def naive_stft(x, block=4, bins=4):
    """Mean over hop-1 blocks of |DFT| for bins 0..bins//2."""
    n_blocks = len(x) - block + 1
    out = []
    for k in range(bins // 2 + 1):
        acc = 0.0
        for t in range(n_blocks):
            s = 0j
            for m in range(block):
                s += x[t + m] * cmath.exp(-2j * math.pi * k * m / bins)
            acc += abs(s)
        out.append(acc / n_blocks)
    return out


def naive_features(window, kind, block=4, bins=4):
    """Feature row of a (W, C) window, channel blocks in channel order."""
    row = []
    for c in range(window.shape[1]):
        x = [float(v) for v in window[:, c]]
        if kind == "WL":
            row.append(naive_wl(x))
        elif kind == "VAR":
            row.append(naive_var(x))
        else:
            row.extend(naive_stft(x, block, bins))
    return np.array(row)


def _project(v, y, C):
    """Euclidean projection onto {a : 0 <= a <= C, y.a = 0} for y in {-1, +1}.

    ``h(mu) = y . clip(v - mu y, 0, C)`` is piecewise linear and
    non-increasing in ``mu``; its breakpoints are where a coordinate hits a
    bound, so the root is found exactly by interpolation between them.
    """
    bps = np.unique(np.concatenate([v / y, (v - C) / y]))
    a = np.clip(v[None, :] - bps[:, None] * y[None, :], 0.0, C)
    h = a @ y
    k = int(np.searchsorted(-h, 0.0))
    if k == 0:
        return a[0]
    if k == bps.size:
        return a[-1]
    m0, m1, h0, h1 = bps[k - 1], bps[k], h[k - 1], h[k]
    mu = m0 if h0 == h1 else m0 + (m1 - m0) * h0 / (h0 - h1)
    return np.clip(v - mu * y, 0.0, C)


def qp_dual_oracle(K, y, C, max_iter=200_000, step_tol=1e-13):
    """Maximize the SVM dual by accelerated projected gradient ascent.

    FISTA with function-value restarts and step ``1/L``, ``L`` the largest
    eigenvalue of ``Q = (y y^T) * K``; it stops when an iterate moves by less
    than ``step_tol * max(1, C)``, or when a freshly restarted step no
    longer increases the objective (round-off level).

    Returns
    -------
    alpha : ndarray
    objective : float
    """
    y = np.asarray(y, dtype=float)
    Q = np.outer(y, y) * K
    L = float(np.linalg.eigvalsh(Q)[-1])

    def f(a):
        return float(a.sum() - 0.5 * a @ Q @ a)

    a = np.zeros(y.size)
    z, t, fa = a.copy(), 1.0, 0.0
    for _ in range(max_iter):
        an = _project(z + (1.0 - Q @ z) / L, y, C)
        fn = f(an)
        if fn < fa:
            if t == 1.0:
                break
            z, t = a.copy(), 1.0
            continue
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        done = np.max(np.abs(an - a)) < step_tol * max(1.0, C)
        z = an + (t - 1.0) / tn * (an - a)
        a, t, fa = an, tn, fn
        if done:
            break
    return a, fa


def oracle_bias(K, y, alpha, C, eps=1e-7):
    """Bias from the KKT conditions: mean over free vectors, else mid-range."""
    y = np.asarray(y, dtype=float)
    grad_margin = y - (K @ (alpha * y))  # b candidates: y_i - sum_j a_j y_j K_ij
    free = (alpha > eps * C) & (alpha < C * (1 - eps))
    if free.any():
        return float(grad_margin[free].mean())
    up = ((y > 0) & (alpha < C * (1 - eps))) | ((y < 0) & (alpha > eps * C))
    low = ((y > 0) & (alpha > eps * C)) | ((y < 0) & (alpha < C * (1 - eps)))
    return float(0.5 * (grad_margin[up].max() + grad_margin[low].min()))
