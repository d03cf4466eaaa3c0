"""Exhaustive (C, gamma) search over powers of two, scored on a validation set."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateProblem, EmptyValidation, ShapeMismatch
from .kernel import squared_distances
from .ovo import OvoSvmModel, class_pairs, vote
from .smo import (DEFAULT_MAX_KERNEL_EVALS, DEFAULT_TOL, SmoSolution, model_from_solution,
                  solve_dual)

DEFAULT_C_EXPONENTS = tuple(range(0, 17, 2))
DEFAULT_GAMMA_EXPONENTS = tuple(range(-16, -1, 2))
SCORE_CHUNK = 2048


@dataclass(frozen=True)
class GridSpec:
    c_exponents: tuple = DEFAULT_C_EXPONENTS
    gamma_exponents: tuple = DEFAULT_GAMMA_EXPONENTS

    def __post_init__(self):
        if not self.c_exponents or not self.gamma_exponents:
            raise ValueError("grid exponents must be non-empty")
        object.__setattr__(self, "c_exponents", tuple(sorted(int(i) for i in self.c_exponents)))
        object.__setattr__(self, "gamma_exponents",
                           tuple(sorted(int(j) for j in self.gamma_exponents)))

    @property
    def size(self):
        return len(self.c_exponents) * len(self.gamma_exponents)

    def points(self):
        return [(2.0**i, 2.0**j) for i in self.c_exponents for j in self.gamma_exponents]


@dataclass
class GridResult:
    """Outcome of a grid search against one validation set.

    ``accuracy[a, b]`` is the validation accuracy at
    ``C = 2**c_exponents[a]`` and ``gamma = 2**gamma_exponents[b]``.
    """

    spec: GridSpec
    accuracy: np.ndarray
    best_c: float = 0.0
    best_gamma: float = 0.0
    best_accuracy: float = -1.0
    model: OvoSvmModel | None = field(default=None, repr=False)
    solution: tuple | None = field(default=None, repr=False)  # (alphas per pair, rhos)

    @property
    def evaluated(self):
        return int(np.isfinite(self.accuracy).sum())

    def to_dict(self):
        return {
            "c_exponents": list(self.spec.c_exponents),
            "gamma_exponents": list(self.spec.gamma_exponents),
            "accuracy": self.accuracy.tolist(),
            "best_C": self.best_c,
            "best_gamma": self.best_gamma,
            "best_accuracy": self.best_accuracy,
        }


def select_best(result):
    """Set and return the best grid point: highest accuracy, then smallest C, then smallest gamma."""
    best = None
    for a in range(len(result.spec.c_exponents)):
        for b in range(len(result.spec.gamma_exponents)):
            acc = result.accuracy[a, b]
            if best is None or acc > best[0]:
                best = (acc, a, b)
    acc, a, b = best
    result.best_accuracy = float(acc)
    result.best_c = 2.0 ** result.spec.c_exponents[a]
    result.best_gamma = 2.0 ** result.spec.gamma_exponents[b]
    return a, b


class _SortedTrainSet:
    """Training rows reordered so that each class occupies a contiguous block."""

    def __init__(self, X, y):
        order = np.argsort(y, kind="stable")
        self.X = X[order]
        self.y = y[order]
        self.classes = tuple(int(c) for c in np.unique(self.y))
        bounds = np.searchsorted(self.y, self.classes + (np.inf,))
        self.blocks = [slice(int(bounds[k]), int(bounds[k + 1])) for k in range(len(self.classes))]
        self.pairs = class_pairs(range(len(self.classes)))
        self.pair_rows = [
            np.concatenate([np.arange(self.blocks[a].start, self.blocks[a].stop),
                            np.arange(self.blocks[b].start, self.blocks[b].stop)])
            for a, b in self.pairs
        ]
        self.pair_y = [
            np.concatenate([-np.ones(self.blocks[a].stop - self.blocks[a].start),
                            np.ones(self.blocks[b].stop - self.blocks[b].start)])
            for a, b in self.pairs
        ]
        # pairs each class takes part in
        self.class_pairs = [[p for p, (a, b) in enumerate(self.pairs) if k in (a, b)]
                            for k in range(len(self.classes))]


def _class_coefficients(ts, alphas):
    """Per class: (n_c, n_pairs_of_c) matrix of alpha*y for that class's rows."""
    coefs = []
    for k, blk in enumerate(ts.blocks):
        n_k = blk.stop - blk.start
        mat = np.zeros((n_k, len(ts.class_pairs[k])))
        for col, p in enumerate(ts.class_pairs[k]):
            a, b = ts.pairs[p]
            n_a = ts.blocks[a].stop - ts.blocks[a].start
            part = slice(0, n_a) if k == a else slice(n_a, None)
            mat[:, col] = (alphas[p] * ts.pair_y[p])[part]
        coefs.append(mat)
    return coefs


def _score(ts, kernel_chunks, alphas, rhos, truths, n_val):
    """Validation accuracy of one OvO model given validation-vs-train kernel chunks."""
    coefs = _class_coefficients(ts, alphas)
    lo = np.array([a for a, _ in ts.pairs])
    hi = np.array([b for _, b in ts.pairs])
    correct = 0
    for kv, truth in zip(kernel_chunks, truths):
        dec = np.tile(-rhos, (kv.shape[0], 1))
        for k, blk in enumerate(ts.blocks):
            dec[:, ts.class_pairs[k]] += kv[:, blk] @ coefs[k]
        pred = vote(dec, lo, hi, len(ts.classes))
        correct += int(np.sum(pred == truth))
    return correct / n_val


def _build_model(ts, alphas, rhos, C, gamma):
    binaries = []
    for p, (a, b) in enumerate(ts.pairs):
        rows = ts.pair_rows[p]
        sol = SmoSolution(alphas[p], float(rhos[p]), 0, True, 0, np.empty(0))
        binaries.append(model_from_solution(ts.X[rows], ts.pair_y[p], sol, C, gamma,
                                            (ts.classes[a], ts.classes[b])))
    return OvoSvmModel(tuple(binaries), ts.classes)


def model_from_alphas(train, alphas, rhos, C, gamma):
    """Rebuild the OvO model of a grid point from its per-pair dual solutions.

    ``alphas[p]`` follows the row order the grid search uses: training rows
    stably sorted by label, lower class of the pair first.
    """
    X, y = _xy(train)
    ts = _SortedTrainSet(X, y)
    if len(alphas) != len(ts.pairs) or len(rhos) != len(ts.pairs):
        raise ShapeMismatch(f"expected {len(ts.pairs)} pair solutions")
    for p, al in enumerate(alphas):
        if len(al) != len(ts.pair_rows[p]):
            raise ShapeMismatch(f"pair {p}: expected {len(ts.pair_rows[p])} multipliers")
    return _build_model(ts, [np.asarray(a, dtype=float) for a in alphas],
                        np.asarray(rhos, dtype=float), C, gamma)


def pair_sizes(labels):
    """Row count of every OvO pair problem, in grid-search order."""
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return [int(counts[a] + counts[b]) for a, b in class_pairs(range(counts.size))]


def _xy(fm):
    return np.asarray(fm.values, dtype=float), np.asarray(fm.labels)


def grid_search_many(train, validations, spec=None, tol=DEFAULT_TOL, warm_start=True,
                     keep_models=True, max_kernel_evals=DEFAULT_MAX_KERNEL_EVALS):
    """Run one grid sweep and score it against several validation sets.

    The OvO models at each grid point depend only on the training set, so
    they are trained once and shared across validation sets.

    Parameters
    ----------
    train : FeatureMatrix
    validations : list of FeatureMatrix
    spec : GridSpec, optional
    tol, max_kernel_evals
        Stopping rule of every binary solve (see ``solve_dual``).
    warm_start : bool
        Start each C from the solution of the previous (smaller) C at the
        same gamma; the previous solution stays feasible since the box grows.
    keep_models : bool
        Attach the best OvO model of each validation set to its result.

    Returns
    -------
    list of GridResult
    """
    spec = spec or GridSpec()
    X, y = _xy(train)
    if X.shape[0] == 0:
        raise DegenerateProblem("empty training set")
    vals = []
    for v in validations:
        Xv, yv = _xy(v)
        if Xv.shape[0] == 0:
            raise EmptyValidation("validation set is empty")
        if Xv.shape[1] != X.shape[1]:
            raise ShapeMismatch(f"validation has {Xv.shape[1]} features, training {X.shape[1]}")
        vals.append((Xv, yv))
    ts = _SortedTrainSet(X, y)
    if len(ts.classes) < 2:
        raise DegenerateProblem("grid search needs at least 2 classes")

    results = [GridResult(spec, np.full((len(spec.c_exponents), len(spec.gamma_exponents)), np.nan))
               for _ in vals]
    solutions = {}
    dist_tt = squared_distances(ts.X, ts.X)
    for b, gj in enumerate(spec.gamma_exponents):
        gamma = 2.0**gj
        K = np.exp(-gamma * dist_tt)
        blocks = [np.ascontiguousarray(K[np.ix_(r, r)]) for r in ts.pair_rows]
        models = []
        alphas = [None] * len(ts.pairs)
        for a, ci in enumerate(spec.c_exponents):
            C = 2.0**ci
            rhos = np.empty(len(ts.pairs))
            new = []
            for p in range(len(ts.pairs)):
                sol = solve_dual(ts.pair_y[p], C, tol, K=blocks[p],
                                 max_kernel_evals=max_kernel_evals,
                                 alpha0=alphas[p] if warm_start else None)
                new.append(sol.alpha)
                rhos[p] = sol.rho
            alphas = new
            models.append((a, alphas, rhos))
            if keep_models:
                solutions[a, b] = (alphas, rhos)
        for v, (Xv, yv) in enumerate(vals):
            # labels unseen in training can never be predicted: map them to -1
            known = np.isin(yv, ts.classes)
            truth = np.where(known, np.searchsorted(ts.classes, yv), -1)
            chunks, truths = [], []
            for start in range(0, Xv.shape[0], SCORE_CHUNK):
                kv = np.exp(-gamma * squared_distances(Xv[start:start + SCORE_CHUNK], ts.X))
                chunks.append(kv)
                truths.append(truth[start:start + SCORE_CHUNK])
            for a, al, rhos in models:
                results[v].accuracy[a, b] = _score(ts, chunks, al, rhos, truths, Xv.shape[0])

    for res in results:
        a, b = select_best(res)
        if keep_models:
            al, rhos = solutions[a, b]
            res.solution = (al, rhos)
            res.model = _build_model(ts, al, rhos, res.best_c, res.best_gamma)
    return results


def grid_search(train, validation, spec=None, tol=DEFAULT_TOL, warm_start=True, keep_models=True,
                max_kernel_evals=DEFAULT_MAX_KERNEL_EVALS):
    """Pick ``(C, gamma)`` maximizing validation accuracy.

    Ties go to the smaller C, then the smaller gamma.

    Returns
    -------
    GridResult
        With ``best_c``, ``best_gamma``, the full accuracy grid and the
        best model.
    """
    return grid_search_many(train, [validation], spec, tol, warm_start, keep_models,
                            max_kernel_evals)[0]
