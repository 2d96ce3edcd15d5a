"""Input validation helpers shared by the estimator wrappers."""

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .errors import LengthMismatch


def check_features(X, n_features=None, min_samples=1):
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    return X


def check_features_labels(X, y):
    X, y = check_X_y(X, y, dtype=np.float64)
    if not np.issubdtype(np.asarray(y).dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
    return X, y


def check_same_length(a, b, what="vectors"):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"{what} differ in shape: {a.shape} vs {b.shape}")
    return a, b
