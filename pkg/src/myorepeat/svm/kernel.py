"""Gaussian RBF kernel."""

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch


def rbf(x, y, gamma):
    """``exp(-gamma * ||x - y||^2)`` for two vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ShapeMismatch(f"dimension mismatch {x.shape} vs {y.shape}")
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValueError("gamma must be finite and positive")
    d = x - y
    return float(np.exp(-gamma * np.dot(d.ravel(), d.ravel())))


def squared_distances(X, Y):
    """Pairwise squared Euclidean distances, clipped at zero."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise ShapeMismatch(f"dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
    d = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * (X @ Y.T)
    np.maximum(d, 0.0, out=d)
    return d


def rbf_matrix(X, Y, gamma):
    d = squared_distances(X, Y)
    d *= -gamma
    return np.exp(d, out=d)


@dataclass(frozen=True)
class RbfParams:
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be finite and positive")
