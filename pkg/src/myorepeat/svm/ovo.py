"""One-vs-one multiclass reduction with majority voting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from ..errors import DegenerateProblem, ShapeMismatch
from .kernel import rbf_matrix
from .smo import (DEFAULT_CACHE_MB, DEFAULT_MAX_KERNEL_EVALS, DEFAULT_TOL, BinarySvmModel,
                  model_from_solution, solve_dual)

PREDICT_CHUNK = 4096


def vote(decisions, lo_idx, hi_idx, n_classes):
    """Majority vote over pairwise decisions.

    A positive decision votes for the pair's higher class. Vote ties go to the
    smallest class index.
    """
    m = decisions.shape[0]
    winners = np.where(decisions > 0, hi_idx[None, :], lo_idx[None, :])
    counts = np.zeros((m, n_classes), dtype=np.int64)
    np.add.at(counts, (np.arange(m)[:, None], winners), 1)
    return counts.argmax(axis=1)


@dataclass
class _ClassExpansion:
    """Support vectors grouped by class with their per-pair coefficients."""

    blocks: list  # per class: (support vectors, coef matrix (n_c, n_pairs_of_c), pair indices)
    biases: np.ndarray
    gamma: float


@dataclass(frozen=True)
class OvoSvmModel:
    binaries: tuple
    class_set: tuple
    _expansion: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self):
        k = len(self.class_set)
        if len(self.binaries) != k * (k - 1) // 2:
            raise ValueError(f"{k} classes need {k * (k - 1) // 2} binaries, got {len(self.binaries)}")

    @property
    def dim(self):
        return self.binaries[0].support_vectors.shape[1]

    def _expanded(self):
        if self._expansion:
            return self._expansion[0]
        index = {c: i for i, c in enumerate(self.class_set)}
        gammas = {b.gamma for b in self.binaries}
        if len(gammas) != 1:
            raise ValueError("binaries must share one gamma")
        per_class = {i: [] for i in range(len(self.class_set))}
        for p, b in enumerate(self.binaries):
            lo, hi = index[b.class_pair[0]], index[b.class_pair[1]]
            for side, ci in ((b.dual_coeffs < 0, lo), (b.dual_coeffs > 0, hi)):
                per_class[ci].append((p, b.support_vectors[side], b.dual_coeffs[side]))
        blocks = []
        for ci in range(len(self.class_set)):
            entries = [e for e in per_class[ci] if e[1].shape[0]]
            if not entries:
                continue
            rows = np.concatenate([e[1] for e in entries])
            uniq, inv = np.unique(rows, axis=0, return_inverse=True)
            inv = inv.ravel()
            pairs = sorted({e[0] for e in entries})
            col = {p: j for j, p in enumerate(pairs)}
            coef = np.zeros((uniq.shape[0], len(pairs)))
            offset = 0
            for p, sv, c in entries:
                np.add.at(coef[:, col[p]], inv[offset:offset + sv.shape[0]], c)
                offset += sv.shape[0]
            blocks.append((uniq, coef, np.array(pairs)))
        exp = _ClassExpansion(blocks, np.array([b.bias for b in self.binaries]), gammas.pop())
        self._expansion.append(exp)
        return exp

    def decision_matrix(self, X):
        """Pairwise decision values, shape (n, n_binaries)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ShapeMismatch(f"expected {self.dim} features, got {X.shape[1]}")
        exp = self._expanded()
        out = np.tile(exp.biases, (X.shape[0], 1))
        for start in range(0, X.shape[0], PREDICT_CHUNK):
            chunk = X[start:start + PREDICT_CHUNK]
            for sv, coef, pairs in exp.blocks:
                out[start:start + chunk.shape[0], pairs] += rbf_matrix(chunk, sv, exp.gamma) @ coef
        return out

    def predict(self, X):
        dec = self.decision_matrix(X)
        lo, hi = self._pair_indices()
        return np.asarray(self.class_set)[vote(dec, lo, hi, len(self.class_set))]

    def _pair_indices(self):
        index = {c: i for i, c in enumerate(self.class_set)}
        lo = np.array([index[b.class_pair[0]] for b in self.binaries])
        hi = np.array([index[b.class_pair[1]] for b in self.binaries])
        return lo, hi

    def to_dict(self):
        return {
            "class_set": [int(c) for c in self.class_set],
            "binaries": [
                {
                    "pair": [int(b.class_pair[0]), int(b.class_pair[1])],
                    "C": b.C,
                    "gamma": b.gamma,
                    "bias": b.bias,
                    "support_vectors": b.support_vectors.tolist(),
                    "dual_coeffs": b.dual_coeffs.tolist(),
                }
                for b in self.binaries
            ],
        }

    @classmethod
    def from_dict(cls, d):
        bins = []
        for b in d["binaries"]:
            sv = np.asarray(b["support_vectors"], dtype=float)
            if sv.size == 0:
                sv = sv.reshape(0, 0)
            bins.append(BinarySvmModel(sv, np.asarray(b["dual_coeffs"], dtype=float),
                                       float(b["bias"]), tuple(b["pair"]), float(b["C"]),
                                       float(b["gamma"])))
        return cls(tuple(bins), tuple(d["class_set"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_xy(features, labels=None):
    if labels is None:
        return np.asarray(features.values, dtype=float), np.asarray(features.labels)
    return np.asarray(features, dtype=float), np.asarray(labels)


def class_pairs(class_set):
    return list(combinations(class_set, 2))


def train_ovo(features, C, gamma, labels=None, tol=DEFAULT_TOL, cache_mb=DEFAULT_CACHE_MB,
              max_kernel_evals=DEFAULT_MAX_KERNEL_EVALS):
    """Train one binary SVM per unordered class pair.

    Parameters
    ----------
    features : FeatureMatrix or ndarray
        Training rows; pass ``labels`` separately when giving an array.
    C, gamma : float

    Returns
    -------
    OvoSvmModel
    """
    gamma = getattr(gamma, "gamma", gamma)
    X, y = _as_xy(features, labels)
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise DegenerateProblem(f"need at least 2 classes, got {len(classes)}")
    cache_bytes = cache_mb * 2**20
    full = None
    if 8 * X.shape[0] ** 2 <= cache_bytes:
        full = rbf_matrix(X, X, gamma)
    binaries = []
    for a, b in class_pairs(classes):
        idx = np.flatnonzero((y == a) | (y == b))
        yy = np.where(y[idx] == b, 1.0, -1.0)
        K = None if full is None else full[np.ix_(idx, idx)]
        sol = solve_dual(yy, C, tol, K=K, X=X[idx], gamma=gamma, cache_bytes=cache_bytes,
                         max_kernel_evals=max_kernel_evals)
        binaries.append(model_from_solution(X[idx], yy, sol, C, gamma, (a, b)))
    return OvoSvmModel(tuple(binaries), classes)


def predict_ovo(model, x):
    """Predict the label of a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeMismatch("predict_ovo takes one vector; use OvoSvmModel.predict for batches")
    return int(model.predict(x[None, :])[0])


__all__ = ["OvoSvmModel", "train_ovo", "predict_ovo", "vote", "class_pairs"]
