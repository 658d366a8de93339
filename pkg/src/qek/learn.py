"""Binary SVM on a precomputed kernel, metrics, and cross-validated grid search.

Class 1 is the positive class everywhere (``y = +1`` in the dual), class 2
maps to ``y = -1``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_is_fitted

from ._validation import check_kernel, check_binary_labels

TAU = 1e-12
POSITIVE = 1


@dataclass(frozen=True)
class SvmHyperparams:
    C: float = 1.0
    class_weights: tuple[float, float] = (1.0, 1.0)  # (class 1, class 2)

    def __post_init__(self):
        if self.C <= 0 or min(self.class_weights) <= 0:
            raise ValueError("C and class weights must be positive")

    @property
    def ratio(self) -> float:
        w1, w2 = self.class_weights
        return max(w1, w2) / min(w1, w2)


@dataclass
class SvmModel:
    dual_coef: np.ndarray  # α_i·y_i for every training point
    bias: float
    support: np.ndarray
    alpha: np.ndarray
    y: np.ndarray  # ±1
    upper: np.ndarray  # per-point box C·w(y_i)
    n_iter: int = 0
    train_ids: list | None = None

    def decision_function(self, kernel_rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(kernel_rows, dtype=float))
        if rows.shape[1] != len(self.dual_coef):
            raise ValueError(f"kernel rows have {rows.shape[1]} columns, model has "
                             f"{len(self.dual_coef)} training points")
        return rows @ self.dual_coef + self.bias

    def dual_objective(self, K) -> float:
        """½ Σ α_i α_j y_i y_j K_ij − Σ α_i (minimized by the solver)."""
        v = self.dual_coef
        return float(0.5 * v @ np.asarray(K) @ v - self.alpha.sum())


def _shift_if_indefinite(K, threshold=-1e-6):
    lam = np.linalg.eigvalsh(K)[0]
    if lam < threshold:
        return K + (-lam) * np.eye(len(K))
    return K


def _smo_core(K, y, Cb, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.empty(n)
    for t in range(n):
        QD[t] = K[t, t]
    it = 0
    while it < max_iter:
        # most violating index i from I_up
        i = -1
        m = -np.inf
        M = np.inf
        for t in range(n):
            yg = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < Cb[t]) or (y[t] < 0 and alpha[t] > 0):
                if yg > m:
                    m = yg
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < Cb[t]):
                if yg < M:
                    M = yg
        if i < 0 or m - M < tol:
            break
        # second-order choice of j from I_low
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < Cb[t]):
                b = m + y[t] * G[t]
                if b > 0:
                    a = QD[i] + QD[t] - 2.0 * K[i, t]
                    if a <= 0:
                        a = TAU
                    sc = -(b * b) / a
                    if sc < best:
                        best = sc
                        j = t
        if j < 0:
            break
        it += 1
        ai_old = alpha[i]
        aj_old = alpha[j]
        Ci = Cb[i]
        Cj = Cb[j]
        Qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            elif ai < 0:
                ai = 0.0
                aj = -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai = Ci
                    aj = Ci - diff
            elif aj > Cj:
                aj = Cj
                ai = Cj + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if s > Ci:
                if ai > Ci:
                    ai = Ci
                    aj = s - Ci
            elif aj < 0:
                aj = 0.0
                ai = s
            if s > Cj:
                if aj > Cj:
                    aj = Cj
                    ai = s - Cj
            elif ai < 0:
                ai = 0.0
                aj = s
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - ai_old
        daj = aj - aj_old
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * dai + y[j] * K[t, j] * daj)
    return alpha, G, it


try:
    from numba import njit

    _smo_core = njit(cache=True)(_smo_core)
except ImportError:  # pragma: no cover
    pass


def solve_dual(K, y, upper, tol=1e-4, max_iter=100_000):
    """SMO with second-order working-set selection.

    ``K`` is the Gram matrix, ``y`` in {+1, -1}, ``upper`` the per-point
    box.  Stops when the maximal KKT violation ``m - M`` drops below ``tol``.
    Returns ``(alpha, bias, n_iter)``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    Cb = np.ascontiguousarray(upper, dtype=np.float64)
    alpha, G, it = _smo_core(K, y, Cb, float(tol), int(max_iter))
    return alpha, _bias(alpha, G, y, Cb), int(it)


def _bias(alpha, G, y, Cb):
    yG = y * G
    at_up = alpha >= Cb
    at_lo = alpha <= 0
    free = ~at_up & ~at_lo
    if free.any():
        rho = yG[free].mean()
    else:
        ub_mask = (at_up & (y < 0)) | (at_lo & (y > 0))
        lb_mask = (at_up & (y > 0)) | (at_lo & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return float(-rho)


def train_svm(K, labels, hp: SvmHyperparams = SvmHyperparams(), tol=1e-4, ids=None) -> SvmModel:
    """Fit the weighted soft-margin dual on a square training kernel."""
    K = check_kernel(K, square=True)
    labels = check_binary_labels(labels, len(K))
    y = np.where(labels == POSITIVE, 1.0, -1.0)
    if (y > 0).all() or (y < 0).all():
        raise ValueError("training set contains a single class")
    w1, w2 = hp.class_weights
    upper = hp.C * np.where(y > 0, w1, w2)
    Kt = _shift_if_indefinite(K)
    alpha, b, it = solve_dual(Kt, y, upper, tol=tol)
    return SvmModel(dual_coef=alpha * y, bias=b, support=np.flatnonzero(alpha > 0),
                    alpha=alpha, y=y, upper=upper, n_iter=it, train_ids=ids)


def predict(model: SvmModel, kernel_rows) -> np.ndarray:
    """Class labels (1 / 2); an exactly-zero decision value maps to class 1."""
    dv = model.decision_function(kernel_rows)
    return np.where(dv >= 0, 1, 2)


@dataclass(frozen=True)
class Metrics:
    f1: float
    accuracy: float
    precision: float
    recall: float

    def as_dict(self):
        return {"f1": self.f1, "accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall}

    @classmethod
    def mean(cls, items):
        items = list(items)
        return cls(*(float(np.mean([getattr(m, k) for m in items]))
                     for k in ("f1", "accuracy", "precision", "recall")))


def evaluate(y_true, y_pred, positive=POSITIVE) -> Metrics:
    yt = np.asarray(y_true)
    yp = np.asarray(y_pred)
    if yt.shape != yp.shape:
        raise ValueError(f"length mismatch: {yt.shape} vs {yp.shape}")
    if yt.size == 0:
        raise ValueError("empty label arrays")
    tp = int(np.sum((yt == positive) & (yp == positive)))
    fp = int(np.sum((yt != positive) & (yp == positive)))
    fn = int(np.sum((yt == positive) & (yp != positive)))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return Metrics(f1=f1, accuracy=float(np.mean(yt == yp)), precision=prec, recall=rec)


def default_grid(n_c=100, n_w=30):
    """C log-spaced on [1e-4, 1e4]; minority-class weight ratio log-spaced on [1, 1000]."""
    return {"C": np.logspace(-4, 4, n_c), "ratio": np.logspace(0, 3, n_w)}


def stratified_folds(labels, k=10, seed=0):
    """List of (train_idx, test_idx); degrades with a warning when a class has < k members."""
    if k < 2:
        raise ValueError("k must be >= 2")
    labels = np.asarray(labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
        return [(tr, te) for tr, te in skf.split(np.zeros(len(labels)), labels)]


def _hp_for(C, ratio, labels):
    n1 = int(np.sum(labels == 1))
    n2 = len(labels) - n1
    weights = (ratio, 1.0) if n1 <= n2 else (1.0, ratio)
    return SvmHyperparams(C=float(C), class_weights=weights)


@dataclass
class GridSearchResult:
    best: SvmHyperparams
    fold_metrics: list
    mean: Metrics
    folds: list = field(repr=False, default_factory=list)
    scores: np.ndarray | None = field(repr=False, default=None)

    def to_dict(self):
        return {
            "best": {"C": self.best.C, "w": list(self.best.class_weights)},
            "folds": [m.as_dict() for m in self.fold_metrics],
            "mean": self.mean.as_dict(),
        }


def cross_validate(K, labels, hp: SvmHyperparams, folds, tol=1e-4):
    out = []
    for tr, te in folds:
        model = train_svm(K[np.ix_(tr, tr)], labels[tr], hp, tol=tol)
        out.append(evaluate(labels[te], predict(model, K[np.ix_(te, tr)])))
    return out


def kfold_grid_search(K, labels, grid=None, k=10, seed=0, folds=None, n_jobs=None, tol=1e-4):
    """Pick the (C, class weight) pair with the best mean held-out F1.

    ``grid`` maps ``"C"`` and ``"ratio"`` to 1-d arrays; the ratio weights
    the minority class.  Ties go to the lower C, then the lower ratio.
    """
    K = check_kernel(K, square=True)
    labels = check_binary_labels(labels, len(K))
    grid = grid or default_grid()
    Cs = np.sort(np.asarray(grid["C"], dtype=float))
    ratios = np.sort(np.asarray(grid["ratio"], dtype=float))
    folds = folds if folds is not None else stratified_folds(labels, k, seed)
    points = [(C, r) for C in Cs for r in ratios]

    def run(C, r):
        return cross_validate(K, labels, _hp_for(C, r, labels), folds, tol)

    if n_jobs and n_jobs != 1:
        from joblib import Parallel, delayed

        per_point = Parallel(n_jobs=n_jobs)(delayed(run)(C, r) for C, r in points)
    else:
        per_point = [run(C, r) for C, r in points]

    scores = np.array([np.mean([m.f1 for m in fm]) for fm in per_point])
    best = int(np.argmax(scores))  # first max in (C, ratio) order = tie-break rule
    C, r = points[best]
    fm = per_point[best]
    return GridSearchResult(best=_hp_for(C, r, labels), fold_metrics=fm, mean=Metrics.mean(fm),
                            folds=folds, scores=scores.reshape(len(Cs), len(ratios)))


def majority_baseline(labels) -> Metrics:
    """Metrics of always predicting the most frequent class (ties -> class 2)."""
    labels = np.asarray(labels)
    n1 = int(np.sum(labels == 1))
    guess = 1 if n1 > len(labels) - n1 else 2
    return evaluate(labels, np.full(len(labels), guess))


class PrecomputedSVC(ClassifierMixin, BaseEstimator):
    """Weighted binary SVM on a precomputed kernel, solved by SMO.

    Parameters
    ----------
    C : float
        Box constraint.
    class_weight : dict or None
        Multiplier of ``C`` per class label.
    tol : float
        KKT violation tolerance.

    ``fit(K, y)`` takes the square training kernel; ``predict(K_test)`` the
    (n_test, n_train) block of similarities to the training points.  The
    smaller of the two class labels is the positive class.
    """

    def __init__(self, C=1.0, class_weight=None, tol=1e-4):
        self.C = C
        self.class_weight = class_weight
        self.tol = tol

    def fit(self, X, y):
        K = check_kernel(X, square=True)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {self.classes_}")
        cw = self.class_weight or {}
        hp = SvmHyperparams(C=self.C, class_weights=(float(cw.get(self.classes_[0], 1.0)),
                                                     float(cw.get(self.classes_[1], 1.0))))
        internal = np.where(y == self.classes_[0], 1, 2)
        self.model_ = train_svm(K, internal, hp, tol=self.tol)
        self.n_features_in_ = K.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(check_kernel(X))

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, self.classes_[0], self.classes_[1])

    @property
    def support_(self):
        return self.model_.support

    @property
    def dual_coef_(self):
        return self.model_.dual_coef

    @property
    def intercept_(self):
        return self.model_.bias
