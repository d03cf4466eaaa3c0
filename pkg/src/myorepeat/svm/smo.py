"""Binary soft-margin SVM trained by sequential minimal optimization.

The dual problem solved here is

    min_a  0.5 a^T Q a - sum(a)   s.t.  y^T a = 0,  0 <= a_i <= C,

with ``Q_ij = y_i y_j K(x_i, x_j)``. Each iteration picks the maximal
violating pair and solves the two-variable subproblem in closed form.
The decision function is ``f(x) = sum_i a_i y_i K(x_i, x) - rho``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ..errors import DegenerateProblem, ShapeMismatch
from .kernel import rbf_matrix

TAU = 1e-12
SNAP_EPS = 1e-12  # relative distance below which alpha is snapped to a box bound
DEFAULT_TOL = 1e-3
DEFAULT_CACHE_MB = 64
DEFAULT_MAX_KERNEL_EVALS = 10**7
MAX_ITER = 10**7


@njit(cache=True)
def _select_pair(y, alpha, grad, C):
    gmax = -np.inf
    gmin = np.inf
    i = -1
    j = -1
    for t in range(y.size):
        v = -y[t] * grad[t]
        if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
            if v > gmax:
                gmax = v
                i = t
        if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
            if v < gmin:
                gmin = v
                j = t
    return i, j, gmax - gmin


@njit(cache=True)
def _pair_update(i, j, y, alpha, grad, C, kii, kjj, kij):
    """Closed-form two-variable step; returns the changes of alpha_i and alpha_j."""
    ai, aj = alpha[i], alpha[j]
    if y[i] != y[j]:
        quad = kii + kjj - 2.0 * kij
        if quad <= 0.0:
            quad = TAU
        delta = (-grad[i] - grad[j]) / quad
        diff = ai - aj
        ni = ai + delta
        nj = aj + delta
        if diff > 0.0:
            if nj < 0.0:
                nj = 0.0
                ni = diff
        else:
            if ni < 0.0:
                ni = 0.0
                nj = -diff
        if diff > 0.0:
            if ni > C:
                ni = C
                nj = C - diff
        else:
            if nj > C:
                nj = C
                ni = C + diff
    else:
        quad = kii + kjj - 2.0 * kij
        if quad <= 0.0:
            quad = TAU
        delta = (grad[i] - grad[j]) / quad
        total = ai + aj
        ni = ai - delta
        nj = aj + delta
        if total > C:
            if ni > C:
                ni = C
                nj = total - C
        else:
            if nj < 0.0:
                nj = 0.0
                ni = total
        if total > C:
            if nj > C:
                nj = C
                ni = total - C
        else:
            if ni < 0.0:
                ni = 0.0
                nj = total
    # Round-off residues next to a bound (e.g. C - (C - diff)) would otherwise
    # count as free vectors in the bias average.
    snap = SNAP_EPS * C
    if ni < snap:
        ni = 0.0
    elif ni > C - snap:
        ni = C
    if nj < snap:
        nj = 0.0
    elif nj > C - snap:
        nj = C
    alpha[i] = ni
    alpha[j] = nj
    return ni - ai, nj - aj


@njit(cache=True)
def _select_active(active, n_active, y, alpha, grad, C):
    gmax = -np.inf
    gmin = np.inf
    i = -1
    j = -1
    for k in range(n_active):
        t = active[k]
        v = -y[t] * grad[t]
        if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
            if v > gmax:
                gmax = v
                i = t
        if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
            if v < gmin:
                gmin = v
                j = t
    return i, j, gmax, gmin


@njit(cache=True)
def _shrink(active, n_active, y, alpha, grad, C, gmax, gmin):
    """Move bounded variables that cannot join a violating pair out of the active set."""
    k = 0
    while k < n_active:
        t = active[k]
        v = -y[t] * grad[t]
        out = False
        at_upper = alpha[t] >= C
        at_lower = alpha[t] <= 0.0
        # a bounded variable sits in only one of I_up / I_low; drop it when its
        # score lies strictly beyond the other set's extreme
        if (at_upper and y[t] < 0) or (at_lower and y[t] > 0):  # I_up only
            out = v < gmin
        elif (at_upper and y[t] > 0) or (at_lower and y[t] < 0):  # I_low only
            out = v > gmax
        if out:
            n_active -= 1
            active[k], active[n_active] = active[n_active], active[k]
        else:
            k += 1
    return n_active


@njit(cache=True)
def _full_gradient(K, y, alpha, grad):
    """Rebuild the gradient from scratch; returns the kernel entries read.

    ``K`` is symmetric, so rows are read in place of columns.
    """
    n = y.size
    for t in range(n):
        grad[t] = -1.0
    reads = 0
    for s in range(n):
        if alpha[s] != 0.0:
            c = alpha[s] * y[s]
            ks = K[s]
            for t in range(n):
                grad[t] += y[t] * ks[t] * c
            reads += n
    return reads


@njit(cache=True)
def _smo_dense(K, y, C, tol, alpha, grad, max_evals):
    """Maximal-violating-pair SMO on a precomputed kernel matrix.

    Bounded variables that cannot be selected are periodically shrunk out of
    the active set; on apparent convergence the full gradient is rebuilt and
    optimality is re-checked over all variables, so the stopping rule is
    unchanged. Every kernel entry the solver consumes counts against
    ``max_evals``.

    Returns (iterations, converged, kernel entries consumed).
    """
    n = y.size
    active = np.arange(n)
    n_active = n
    period = min(n, 1000)
    counter = period
    it = 0
    evals = 0
    i, j, gmax, gmin = _select_active(active, n_active, y, alpha, grad, C)
    while evals < max_evals and it < MAX_ITER:
        counter -= 1
        if counter == 0:
            counter = period
            n_active = _shrink(active, n_active, y, alpha, grad, C, gmax, gmin)
            i, j, gmax, gmin = _select_active(active, n_active, y, alpha, grad, C)
        if i < 0 or j < 0 or gmax - gmin < tol:
            if n_active == n:
                return it, True, evals
            evals += _full_gradient(K, y, alpha, grad)
            n_active = n
            i, j, gmax, gmin = _select_active(active, n_active, y, alpha, grad, C)
            if i < 0 or j < 0 or gmax - gmin < tol:
                return it, True, evals
            counter = 1
        dai, daj = _pair_update(i, j, y, alpha, grad, C, K[i, i], K[j, j], K[i, j])
        si = y[i] * dai
        sj = y[j] * daj
        ki = K[i]
        kj = K[j]
        # gradient update fused with the selection of the next pair
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for k in range(n_active):
            t = active[k]
            yt = y[t]
            g = grad[t] + yt * (ki[t] * si + kj[t] * sj)
            grad[t] = g
            v = -yt * g
            at = alpha[t]
            if (yt > 0 and at < C) or (yt < 0 and at > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (yt > 0 and at > 0) or (yt < 0 and at < C):
                if v < gmin:
                    gmin = v
                    j = t
        evals += 2 * n_active
        it += 1
    if n_active < n:
        evals += _full_gradient(K, y, alpha, grad)
    return it, False, evals


@njit(cache=True)
def _rho(y, alpha, grad, C):
    ub = np.inf
    lb = -np.inf
    n_free = 0
    s = 0.0
    for t in range(y.size):
        yg = y[t] * grad[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            s += yg
    if n_free > 0:
        return s / n_free
    return 0.5 * (ub + lb)


class KernelRowCache:
    """Least-recently-used cache of RBF kernel rows over a fixed point set.

    ``computed`` counts kernel entries actually evaluated, ``requested`` the
    entries handed out (cache hits included).
    """

    def __init__(self, X, gamma, capacity_bytes):
        self.X = np.asarray(X, dtype=float)
        self.gamma = gamma
        n = self.X.shape[0]
        self.capacity = max(2, int(capacity_bytes // max(1, 8 * n)))
        self._rows = OrderedDict()
        self.computed = 0
        self.requested = 0

    def row(self, i):
        self.requested += self.X.shape[0]
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            return r
        r = rbf_matrix(self.X[i:i + 1], self.X, self.gamma)[0]
        self.computed += r.size
        self._rows[i] = r
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return r


def _smo_cached(cache, y, C, tol, alpha, grad, max_kernel_evals):
    it = 0
    while cache.requested < max_kernel_evals and it < MAX_ITER:
        i, j, gap = _select_pair(y, alpha, grad, C)
        if i < 0 or j < 0 or gap < tol:
            return it, True
        ki = cache.row(i)
        kj = cache.row(j)
        dai, daj = _pair_update(i, j, y, alpha, grad, C, ki[i], kj[j], ki[j])
        grad += y * (ki * (y[i] * dai) + kj * (y[j] * daj))
        it += 1
    return it, False


@dataclass(frozen=True)
class SmoSolution:
    alpha: np.ndarray
    rho: float
    iterations: int
    converged: bool
    kernel_evaluations: int
    grad: np.ndarray = field(repr=False)


def solve_dual(y, C, tol=DEFAULT_TOL, K=None, X=None, gamma=None,
               cache_bytes=DEFAULT_CACHE_MB * 2**20, max_kernel_evals=DEFAULT_MAX_KERNEL_EVALS,
               alpha0=None):
    """Solve the SVM dual for labels ``y`` in {-1, +1}.

    Pass either a precomputed kernel matrix ``K`` or points ``X`` with
    ``gamma``. Without ``K`` the full matrix is built when it fits in
    ``cache_bytes``; otherwise rows are computed on demand through an LRU
    cache.

    The solver stops when the maximal KKT violation drops below ``tol`` or
    after ``max_kernel_evals`` kernel evaluations. Evaluations are counted
    as the kernel entries the iterations consume (two columns per step),
    whether or not they come from a cache, so the budget does not depend on
    the cache size.

    ``alpha0`` warm-starts the solver and must be feasible for ``C``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if not C > 0:
        raise ValueError("C must be positive")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateProblem("both classes must be present")
    alpha = np.zeros(n) if alpha0 is None else np.array(alpha0, dtype=float)
    if alpha.shape != (n,) or np.any(alpha < 0) or np.any(alpha > C):
        raise ValueError("alpha0 must have one entry per point within [0, C]")
    if K is None and 8 * n * n <= cache_bytes:
        K = rbf_matrix(X, X, gamma)

    if K is not None:
        K = np.ascontiguousarray(K, dtype=float)
        if K.shape != (n, n):
            raise ShapeMismatch(f"kernel matrix must be ({n}, {n})")
        grad = np.empty(n)
        used = _full_gradient(K, y, alpha, grad)
        it, ok, evals = _smo_dense(K, y, float(C), float(tol), alpha, grad,
                                   int(max_kernel_evals) - used)
        evals += used
    else:
        cache = KernelRowCache(X, gamma, cache_bytes)
        grad = -np.ones(n)
        for t in np.flatnonzero(alpha):
            grad += y * cache.row(t) * (y[t] * alpha[t])
        it, ok = _smo_cached(cache, y, float(C), float(tol), alpha, grad, max_kernel_evals)
        evals = cache.requested
    return SmoSolution(alpha, float(_rho(y, alpha, grad, float(C))), int(it), bool(ok), evals, grad)


def dual_objective(alpha, y, K):
    """Dual objective ``sum(a) - 0.5 a^T Q a`` (to be maximized)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def kkt_gap(alpha, y, grad, C):
    """Largest violation ``m(a) - M(a)`` of the KKT conditions."""
    return float(_select_pair(np.asarray(y, dtype=float), alpha, grad, float(C))[2])


@dataclass(frozen=True)
class BinarySvmModel:
    """Trained binary RBF SVM.

    ``dual_coeffs`` holds ``alpha_i * y_i`` for every support vector;
    negative decisions vote for ``class_pair[0]``, positive ones for
    ``class_pair[1]``.
    """

    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    bias: float
    class_pair: tuple
    C: float
    gamma: float
    support_index: np.ndarray | None = field(default=None, compare=False, repr=False)
    iterations: int = field(default=0, compare=False)
    converged: bool = field(default=True, compare=False)

    @property
    def alphas(self):
        return np.abs(self.dual_coeffs)

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ShapeMismatch(
                f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}")
        return rbf_matrix(X, self.support_vectors, self.gamma) @ self.dual_coeffs + self.bias

    def predict(self, X):
        lo, hi = self.class_pair
        return np.where(self.decision_function(X) > 0, hi, lo)


def model_from_solution(X, y, sol, C, gamma, class_pair=(-1, 1)):
    sv = np.flatnonzero(sol.alpha > 0)
    return BinarySvmModel(
        np.asarray(X, dtype=float)[sv], sol.alpha[sv] * np.asarray(y, dtype=float)[sv],
        -sol.rho, tuple(class_pair), float(C), float(gamma), sv, sol.iterations, sol.converged,
    )


def train_binary_smo(X, y, C, gamma, tol=DEFAULT_TOL, cache_mb=DEFAULT_CACHE_MB,
                     max_kernel_evals=DEFAULT_MAX_KERNEL_EVALS, class_pair=(-1, 1)):
    """Train a binary RBF SVM.

    Parameters
    ----------
    X : array_like, shape (n, d)
    y : array_like, shape (n,)
        Labels in {-1, +1}.
    C : float
        Box constraint.
    gamma : float or RbfParams
        RBF exponent coefficient.
    tol : float
        Stopping tolerance on the maximal KKT violation.

    Returns
    -------
    BinarySvmModel
    """
    gamma = getattr(gamma, "gamma", gamma)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeMismatch("X must be (n, d) with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    sol = solve_dual(y, C, tol, X=X, gamma=gamma, cache_bytes=cache_mb * 2**20,
                     max_kernel_evals=max_kernel_evals)
    return model_from_solution(X, y, sol, C, gamma, class_pair)
