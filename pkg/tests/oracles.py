"""Independent reference implementations used only by the tests."""
import itertools

import numpy as np


def brute_force_dual(K, y, upper, tol=1e-10):
    """Exact minimizer of ½ αᵀQα − Σα, Σ yα = 0, 0 ≤ α ≤ upper, by enumerating
    every (lower, free, upper) partition and solving the KKT system of the
    free block.  Exponential; meant for n ≤ 8."""
    K = np.asarray(K, float)
    y = np.asarray(y, float)
    upper = np.asarray(upper, float)
    n = len(y)
    Q = np.outer(y, y) * K
    best, best_alpha = np.inf, None
    for states in itertools.product((0, 1, 2), repeat=n):
        st = np.array(states)
        F = np.flatnonzero(st == 1)
        U = np.flatnonzero(st == 2)
        alpha = np.zeros(n)
        alpha[U] = upper[U]
        if len(F):
            A = np.zeros((len(F) + 1, len(F) + 1))
            A[:-1, :-1] = Q[np.ix_(F, F)]
            A[:-1, -1] = y[F]
            A[-1, :-1] = y[F]
            rhs = np.concatenate([1 - Q[np.ix_(F, U)] @ upper[U], [-(y[U] @ upper[U])]])
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.abs(A @ sol - rhs).max() > 1e-8:
                continue
            alpha[F] = sol[:-1]
            if (alpha[F] < -tol).any() or (alpha[F] > upper[F] + tol).any():
                continue
            alpha[F] = np.clip(alpha[F], 0, upper[F])
        if abs(y @ alpha) > 1e-8:
            continue
        obj = 0.5 * alpha @ Q @ alpha - alpha.sum()
        if obj < best - 1e-14:
            best, best_alpha = obj, alpha
    return best, best_alpha


def oracle_bias(K, y, alpha, upper, eps=1e-8):
    grad = (np.outer(y, y) * K) @ alpha - 1
    yg = -y * grad
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        return float(yg[free].mean())
    up = ((alpha <= eps) & (y > 0)) | ((alpha >= upper - eps) & (y < 0))
    lo = ((alpha <= eps) & (y < 0)) | ((alpha >= upper - eps) & (y > 0))
    return float(0.5 * (yg[up].max() + yg[lo].min()))


def rbf_problem(rng, n, n_test=20, gamma=0.5):
    X = rng.normal(size=(n + n_test, 2))
    d2 = ((X[:, None] - X[None]) ** 2).sum(-1)
    K = np.exp(-gamma * d2)
    labels = np.where(rng.random(n) < 0.5, 1, 2)
    labels[0], labels[1] = 1, 2
    return K[:n, :n], K[n:, :n], labels


def random_search_max(f, bounds, n, rng, batch=100_000):
    best = -np.inf
    done = 0
    while done < n:
        m = min(batch, n - done)
        X = bounds.sample(rng, m)
        best = max(best, float(np.max(f(X))))
        done += m
    return best
