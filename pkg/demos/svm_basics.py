"""Binary SMO, one-vs-one voting and the (C, gamma) grid on toy data.

Run with ``python demos/svm_basics.py``. The two-point problem has the closed
form alpha = 1 / (1 - k12) with zero bias, which the solver reproduces.
"""

import numpy as np

from myorepeat.features import FeatureMatrix
from myorepeat.svm.grid import GridSpec, grid_search
from myorepeat.svm.ovo import train_ovo
from myorepeat.svm.smo import train_binary_smo

# two points, hard margin
X = np.array([[0.0, 0.0], [1.0, 0.0]])
model = train_binary_smo(X, np.array([-1.0, 1.0]), C=100.0, gamma=1.0)
print("two-point problem")
print(f"  dual coefficients {model.dual_coeffs}, expected +/-{1 / (1 - np.exp(-1.0)):.6f}")
print(f"  bias {model.bias + 0.0:.2e}")  # + 0.0 turns -0.0 into 0.0

# three Gaussian blobs, one-vs-one
rng = np.random.default_rng(0)
centres = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])


def blobs(n):
    labels = np.repeat(np.arange(3), n)
    return centres[labels] + rng.normal(scale=0.8, size=(3 * n, 2)), labels


Xtr, ytr = blobs(40)
Xva, yva = blobs(40)
ovo = train_ovo(Xtr, C=1.0, gamma=0.5, labels=ytr)
print(f"\none-vs-one: {len(ovo.binaries)} binaries, validation accuracy "
      f"{np.mean(ovo.predict(Xva) == yva):.3f}")


def fm(values, labels):
    return FeatureMatrix(values, labels, "WL", 2, 1)


result = grid_search(fm(Xtr, ytr), fm(Xva, yva), GridSpec((0, 2, 4), (-4, -2, 0)))
print("\ngrid search (rows C = 2^0, 2^2, 2^4; columns gamma = 2^-4, 2^-2, 2^0):")
print(np.array2string(result.accuracy, precision=3))
print(f"chosen C = {result.best_c}, gamma = {result.best_gamma} "
      f"(accuracy {result.best_accuracy:.3f}; ties go to the smaller C, then gamma)")
