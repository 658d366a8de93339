"""Constrained Bayesian optimization of the pulse durations.

Surrogate: zero-noise GP with an isotropic Matérn-5/2 covariance and a
constant mean that carries a N(0, 10²) prior.  Acquisition: upper
confidence bound, maximized over the feasible duration polytope

    tau0 + t0 + tau1 + t1 + tau2 < 500 ns,  every duration > 5 ns.

Inputs are durations in ns, unnormalized.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class GpHyperparams:
    length_scale: float = 10.0
    signal_std: float = 10.0
    mean_prior_std: float = 10.0
    jitter: float = 1e-8

    def __post_init__(self):
        if self.length_scale <= 0 or self.signal_std <= 0:
            raise ValueError("length_scale and signal_std must be positive")


def matern52(x, x2, hp: GpHyperparams = GpHyperparams()):
    """σ²(1 + √5 r/ℓ + 5r²/(3ℓ²)) exp(−√5 r/ℓ); broadcasts over leading axes."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(x2, dtype=float), axis=-1)
    s = SQRT5 * r / hp.length_scale
    return hp.signal_std**2 * (1.0 + s + s * s / 3.0) * np.exp(-s)


def matern52_matrix(A, B, hp: GpHyperparams):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    return matern52(A[:, None, :], B[None, :, :], hp)


class GpNumericalError(np.linalg.LinAlgError):
    pass


@dataclass
class GpState:
    X: np.ndarray
    y: np.ndarray
    hp: GpHyperparams = field(default_factory=GpHyperparams)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if len(self.X) != len(self.y):
            raise ValueError("X and y differ in length")
        self._factor = None

    @classmethod
    def empty(cls, dim: int, hp: GpHyperparams | None = None):
        return cls(np.zeros((0, dim)), np.zeros(0), hp or GpHyperparams())

    def add(self, x, value) -> "GpState":
        return GpState(np.vstack([self.X, np.atleast_2d(x)]), np.append(self.y, value), self.hp)

    def with_hp(self, hp) -> "GpState":
        return GpState(self.X, self.y, hp)

    def __len__(self):
        return len(self.y)

    def factor(self):
        """Cholesky factor of K + jitter·I, the constant mean, and weights."""
        if self._factor is None:
            self._factor = _fit(self.X, self.y, self.hp)
        return self._factor


def _fit(X, y, hp):
    K = matern52_matrix(X, X, hp)
    n = len(y)
    jitter = hp.jitter
    for _ in range(8):
        try:
            cf = cho_factor(K + jitter * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10
    else:
        raise GpNumericalError("covariance not positive definite after jitter escalation")
    ones = np.ones(n)
    Ki1 = cho_solve(cf, ones)
    Kiy = cho_solve(cf, y)
    # posterior mean of the constant under its Gaussian prior
    m = (ones @ Kiy) / (ones @ Ki1 + 1.0 / hp.mean_prior_std**2)
    alpha = cho_solve(cf, y - m)
    return cf, m, alpha


def gp_posterior(state: GpState, x):
    """Posterior mean and variance at ``x`` (one point or a batch)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = np.atleast_2d(x)
    s2 = state.hp.signal_std**2
    if len(state) == 0:
        mean = np.zeros(len(Xq))
        var = np.full(len(Xq), s2)
    else:
        cf, m, alpha = state.factor()
        Ks = matern52_matrix(Xq, state.X, state.hp)
        mean = m + Ks @ alpha
        v = cho_solve(cf, Ks.T)
        var = s2 - np.einsum("ij,ji->i", Ks, v)
        var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def ucb(state: GpState, x, k: float = 2.0):
    if k < 0:
        raise ValueError("k must be >= 0")
    mean, var = gp_posterior(state, x)
    return mean + k * np.sqrt(var)


def log_marginal_likelihood(X, y, hp: GpHyperparams) -> float:
    cf, m, alpha = _fit(X, y, hp)
    r = y - m
    logdet = 2.0 * np.log(np.diag(cf[0])).sum()
    return float(-0.5 * r @ alpha - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi))


def log_posterior(X, y, hp: GpHyperparams, prior: GpHyperparams = GpHyperparams(), prior_scale=1.0):
    """Marginal likelihood plus log-normal priors on ℓ and σ."""
    lp = 0.0
    for v, c in ((hp.length_scale, prior.length_scale), (hp.signal_std, prior.signal_std)):
        z = (math.log(v) - math.log(c)) / prior_scale
        lp += -0.5 * z * z - math.log(v)
    return log_marginal_likelihood(X, y, hp) + lp


def map_refit(state: GpState, seed: int = 0, n_starts: int = 8, prior=GpHyperparams(),
              prior_scale: float = 1.0) -> GpHyperparams:
    """MAP estimate of (ℓ, σ); keeps the incumbent if no start improves on it."""
    if len(state) < 3:
        return state.hp
    X, y = state.X, state.y
    base = state.hp

    def neg(theta):
        hp = replace(base, length_scale=math.exp(theta[0]), signal_std=math.exp(theta[1]))
        try:
            return -log_posterior(X, y, hp, prior, prior_scale)
        except (np.linalg.LinAlgError, FloatingPointError):
            return np.inf

    rng = np.random.default_rng(seed)
    inc = np.array([math.log(base.length_scale), math.log(base.signal_std)])
    starts = [inc, np.log([prior.length_scale, prior.signal_std])]
    starts += [inc + rng.normal(0.0, 1.5, size=2) for _ in range(max(0, n_starts - 2))]
    best_x, best_f = inc, neg(inc)
    for x0 in starts:
        res = minimize(neg, x0, method="L-BFGS-B", bounds=[(-7.0, 9.0), (-9.0, 9.0)])
        if np.isfinite(res.fun) and res.fun < best_f - 1e-12:
            best_x, best_f = res.x, res.fun
    return replace(base, length_scale=float(math.exp(best_x[0])), signal_std=float(math.exp(best_x[1])))


# -- feasible polytope ------------------------------------------------------

@dataclass(frozen=True)
class DurationBounds:
    """{x : x_i >= lower + slack, Σx <= total - slack}; strict hardware bounds
    become closed by a small slack."""

    dim: int = 5
    lower: float = 5.0
    total: float = 500.0
    slack: float = 1e-3

    @property
    def lo(self):
        return self.lower + self.slack

    @property
    def budget(self):
        return self.total - self.slack - self.dim * self.lo

    def feasible(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((x > self.lower).all() and x.sum() < self.total)

    def sample(self, rng, size):
        """Uniform samples from the polytope."""
        w = rng.dirichlet(np.ones(self.dim + 1), size=size)[:, : self.dim]
        return self.lo + self.budget * w

    def project(self, x):
        """Euclidean projection onto the closed polytope."""
        z = np.asarray(x, dtype=float) - self.lo
        c = np.maximum(z, 0.0)
        if c.sum() <= self.budget:
            return c + self.lo
        # projection onto the simplex {z >= 0, Σz = budget}
        u = np.sort(z)[::-1]
        css = np.cumsum(u) - self.budget
        idx = np.arange(1, len(u) + 1)
        rho = np.nonzero(u - css / idx > 0)[0][-1]
        theta = css[rho] / (rho + 1)
        return np.maximum(z - theta, 0.0) + self.lo


@dataclass(frozen=True)
class BoConfig:
    max_iterations: int = 50
    ucb_k: float = 2.0
    refit_period: int = 10
    seed: int = 0
    bounds: DurationBounds = field(default_factory=DurationBounds)
    hp: GpHyperparams = field(default_factory=GpHyperparams)
    n_candidates: int = 2000
    n_local: int = 3

    def __post_init__(self):
        if self.max_iterations < 1 or self.refit_period < 1:
            raise ValueError("max_iterations and refit_period must be >= 1")


def propose_next(state: GpState, config: BoConfig = BoConfig(), rng=None) -> np.ndarray:
    """Feasible maximizer of UCB: random candidates, then projected local search."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    b = config.bounds
    if len(state) == 0:
        return b.sample(rng, 1)[0]
    cand = b.sample(rng, config.n_candidates)
    scores = ucb(state, cand, config.ucb_k)
    order = np.argsort(-scores)[: config.n_local]
    best_x, best_v = cand[order[0]], scores[order[0]]

    cons = [{"type": "ineq", "fun": lambda x: b.total - b.slack - x.sum(),
             "jac": lambda x: -np.ones_like(x)}]
    bnds = [(b.lo, None)] * b.dim
    for x0 in cand[order]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(lambda x: -float(ucb(state, x, config.ucb_k)), x0, method="SLSQP",
                           bounds=bnds, constraints=cons, options={"maxiter": 100, "ftol": 1e-10})
        x = b.project(res.x)
        v = float(ucb(state, x, config.ucb_k))
        if v > best_v:
            best_x, best_v = x, v
    return b.project(best_x)


@dataclass
class BoTrace:
    X: list = field(default_factory=list)
    values: list = field(default_factory=list)
    incumbent: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    hps: list = field(default_factory=list)

    def rows(self):
        for it, (x, v, inc) in enumerate(zip(self.X, self.values, self.incumbent)):
            yield [it, *map(float, x), v, inc]


def _key(x):
    return struct.pack(f"{len(x)}d", *np.asarray(x, dtype=float))


def optimize(objective, config: BoConfig = BoConfig()):
    """Maximize ``objective`` over the duration polytope.

    Returns ``(best_x, best_value, trace)``.  Failed evaluations are
    recorded in ``trace.errors`` and skipped; repeated proposals hit a cache.
    """
    rng = np.random.default_rng(config.seed)
    state = GpState.empty(config.bounds.dim, config.hp)
    trace = BoTrace()
    cache: dict = {}
    best_x, best_v = None, -np.inf
    for it in range(config.max_iterations):
        if it > 0 and it % config.refit_period == 0:
            state = state.with_hp(map_refit(state, seed=config.seed + it, prior=config.hp))
        x = propose_next(state, config, rng)
        k = _key(x)
        try:
            v = cache[k] if k in cache else float(objective(x))
        except Exception as exc:  # noqa: BLE001 - objective errors are data here
            trace.errors[it] = repr(exc)
            continue
        cache[k] = v
        if not np.isfinite(v):
            trace.errors[it] = f"non-finite objective {v}"
            continue
        if k not in {_key(p) for p in state.X}:
            state = state.add(x, v)
        if v > best_v:
            best_x, best_v = x, v
        trace.X.append(x)
        trace.values.append(v)
        trace.incumbent.append(best_v)
        trace.hps.append(state.hp)
    return best_x, best_v, trace


class MaternGP(RegressorMixin, BaseEstimator):
    """Noise-free GP regressor with a Matérn-5/2 covariance.

    Parameters
    ----------
    length_scale, signal_std : float
        Initial covariance hyperparameters.
    refit : bool
        Replace them by the MAP estimate during ``fit``.
    """

    def __init__(self, length_scale=10.0, signal_std=10.0, mean_prior_std=10.0, refit=False, seed=0):
        self.length_scale = length_scale
        self.signal_std = signal_std
        self.mean_prior_std = mean_prior_std
        self.refit = refit
        self.seed = seed

    def fit(self, X, y):
        X = check_array(X)
        hp = GpHyperparams(self.length_scale, self.signal_std, self.mean_prior_std)
        state = GpState(X, y, hp)
        if self.refit:
            state = state.with_hp(map_refit(state, seed=self.seed, prior=hp))
        self.state_ = state
        self.hp_ = state.hp
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "state_")
        mean, var = gp_posterior(self.state_, check_array(X))
        return (mean, np.sqrt(var)) if return_std else mean
