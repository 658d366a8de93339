"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array


def check_kernel(K, square=False, sym_tol=1e-8):
    K = check_array(K, dtype=np.float64, ensure_2d=True)
    if square:
        if K.shape[0] != K.shape[1]:
            raise ValueError(f"kernel matrix must be square, got {K.shape}")
        if not np.allclose(K, K.T, atol=sym_tol, rtol=0):
            raise ValueError("kernel matrix is not symmetric")
    return K


def check_binary_labels(labels, n=None):
    y = np.asarray(labels).ravel()
    if n is not None and len(y) != n:
        raise ValueError(f"expected {n} labels, got {len(y)}")
    bad = set(np.unique(y).tolist()) - {1, 2}
    if bad:
        raise ValueError(f"labels must be 1 or 2, got {sorted(bad)}")
    return y.astype(int)
