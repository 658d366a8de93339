"""Energy histograms, Jensen-Shannon divergence and the graph kernels built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .emulator import DEFAULT_C6, interaction_matrix

N_BINS = 100
LN2 = math.log(2.0)


def _bits(bitstring):
    if isinstance(bitstring, str):
        return np.frombuffer(bitstring.encode(), dtype=np.uint8) - 48
    return np.asarray(bitstring)


def interaction_energy(bitstring, positions, c6_over_hbar=DEFAULT_C6) -> float:
    """Σ_{j<k} V_jk n_j n_k over all atom pairs, in rad/µs."""
    n = _bits(bitstring).astype(float)
    V = interaction_matrix(getattr(positions, "positions", positions), c6_over_hbar)
    if len(n) != len(V):
        raise ValueError(f"bitstring has {len(n)} bits for {len(V)} atoms")
    return float(0.5 * n @ V @ n)


def shot_energies(bit_array, positions, c6_over_hbar=DEFAULT_C6) -> np.ndarray:
    """Vectorised :func:`interaction_energy` for a (shots, atoms) 0/1 array."""
    V = interaction_matrix(getattr(positions, "positions", positions), c6_over_hbar)
    b = np.asarray(bit_array, dtype=float).reshape(-1, len(V))
    return 0.5 * np.einsum("si,ij,sj->s", b, V, b)


@dataclass(frozen=True)
class Binning:
    e1: float
    e2: float
    edges: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.e1 == self.e2


def global_binning(samples, n_bins: int = N_BINS) -> Binning:
    """Shared support [min, max] over every sample, split into equal bins."""
    nonempty = [np.asarray(s, dtype=float) for s in samples if len(s)]
    if not nonempty:
        raise ValueError("global_binning needs at least one non-empty sample")
    e1 = float(min(s.min() for s in nonempty))
    e2 = float(max(s.max() for s in nonempty))
    return Binning(e1, e2, np.linspace(e1, e2, n_bins + 1))


@dataclass
class EnergyDistribution:
    probabilities: np.ndarray
    bin_edges: np.ndarray
    graph_id: int | None = None

    @property
    def e1(self):
        return float(self.bin_edges[0])

    @property
    def e2(self):
        return float(self.bin_edges[-1])

    def to_record(self):
        return {"graph_id": self.graph_id, "e1": self.e1, "e2": self.e2,
                "probabilities": [float(p) for p in self.probabilities]}

    @classmethod
    def from_record(cls, rec):
        p = np.asarray(rec["probabilities"], dtype=float)
        if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
            raise ValueError(f"graph {rec.get('graph_id')}: probabilities are not normalized")
        return cls(p, np.linspace(rec["e1"], rec["e2"], len(p) + 1), rec.get("graph_id"))


def bin_counts(sample, edges) -> np.ndarray:
    """Histogram counts on ``edges``; the last bin is right-closed."""
    x = np.asarray(sample, dtype=float)
    nb = len(edges) - 1
    e1, e2 = edges[0], edges[-1]
    if x.size and (x.min() < e1 or x.max() > e2):
        raise ValueError(f"energies outside the support [{e1}, {e2}]")
    if e1 == e2:
        counts = np.zeros(nb)
        counts[0] = x.size
        return counts
    counts, _ = np.histogram(x, bins=edges)
    return counts.astype(float)


def to_distribution(sample, edges, graph_id=None) -> EnergyDistribution:
    """Normalized histogram (counts / k) of one graph's shot energies."""
    edges = getattr(edges, "edges", edges)
    sample = np.asarray(sample, dtype=float)
    if sample.size == 0:
        raise ValueError("cannot build a distribution from zero shots")
    p = bin_counts(sample, edges) / sample.size
    return EnergyDistribution(p, np.asarray(edges, dtype=float), graph_id)


def _probs(p):
    return np.asarray(getattr(p, "probabilities", p), dtype=float)


def _overlap_sum(p, q):
    """Σ over bins where both are positive of p·ln(1 + q/p) + q·ln(1 + p/q)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = p * np.log1p(q / p) + q * np.log1p(p / q)
    return np.where((p > 0) & (q > 0), t, 0.0).sum(axis=-1)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in nats, clamped to [0, ln 2].

    Written as ln 2 minus a sum over the shared support, so disjoint
    supports give exactly ln 2.
    """
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ValueError("distributions have different supports")
    for name, v in (("P", p), ("Q", q)):
        if abs(v.sum() - 1.0) > 1e-9 or (v < 0).any():
            raise ValueError(f"{name} is not a normalized distribution")
    if np.array_equal(p, q):
        return 0.0
    js = LN2 - 0.5 * float(_overlap_sum(p, q))
    return min(max(js, 0.0), LN2)


def _kernel_from_js(js, mu):
    # 2^-mu exactly at the maximal divergence
    return np.where(js == LN2, 2.0 ** -mu, np.exp(-mu * js))


def qek_value(p, q, mu: float = 1.0) -> float:
    if mu <= 0:
        raise ValueError("mu must be positive")
    return float(_kernel_from_js(js_divergence(p, q), mu))


def _js_matrix(A, B):
    """Pairwise JS between rows of A and rows of B (both row-normalized)."""
    js = LN2 - 0.5 * _overlap_sum(A[:, None, :], B[None, :, :])
    return np.clip(js, 0.0, LN2)


def qek_matrix(distributions, mu: float = 1.0, others=None) -> np.ndarray:
    """Kernel matrix exp(−μ·JS).

    With ``others`` the result is the rectangular block K(distributions, others).
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    A = np.vstack([_probs(d) for d in distributions])
    if others is None:
        if len(A) < 2:
            raise ValueError("qek_matrix needs at least two distributions")
        K = _kernel_from_js(_js_matrix(A, A), mu)
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
        return K
    B = np.vstack([_probs(d) for d in others])
    return _kernel_from_js(_js_matrix(A, B), mu)


def _path_length_counts(graph):
    a = graph.adjacency()
    if graph.n_nodes < 2:
        return {}
    dist = shortest_path(a.astype(float), unweighted=True, directed=False)
    iu = np.triu_indices(graph.n_nodes, 1)
    d = dist[iu]
    d = d[np.isfinite(d)].astype(int)
    lengths, counts = np.unique(d, return_counts=True)
    return dict(zip(lengths.tolist(), counts.tolist()))


def _spk_raw(ca, cb):
    return float(sum(n * cb.get(length, 0) for length, n in ca.items()))


def spk_matrix(graphs, others=None) -> np.ndarray:
    """Normalized shortest-path delta kernel (unit diagonal)."""
    ca = [_path_length_counts(g) for g in graphs]
    cb = ca if others is None else [_path_length_counts(g) for g in others]
    da = np.array([_spk_raw(c, c) for c in ca])
    db = da if others is None else np.array([_spk_raw(c, c) for c in cb])
    K = np.array([[_spk_raw(x, y) for y in cb] for x in ca])
    denom = np.sqrt(np.outer(da, db))
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(denom > 0, K / denom, 0.0)
    if others is None:
        np.fill_diagonal(K, 1.0)
    return K


class EnergyHistogram(TransformerMixin, BaseEstimator):
    """Fit a shared energy support on a corpus, then histogram each sample on it.

    ``X`` is a list of 1-d arrays of per-shot energies (one per graph).
    """

    def __init__(self, n_bins=N_BINS):
        self.n_bins = n_bins

    def fit(self, X, y=None):
        self.binning_ = global_binning(X, self.n_bins)
        return self

    def transform(self, X):
        check_is_fitted(self, "binning_")
        return np.vstack([to_distribution(s, self.binning_.edges).probabilities for s in X])


class QuantumEvolutionKernel(TransformerMixin, BaseEstimator):
    """exp(−μ·JS) kernel rows against the distributions seen in ``fit``.

    ``transform(X)`` returns an (len(X), n_fit) array ready for an SVM with
    a precomputed kernel.
    """

    def __init__(self, mu=1.0):
        self.mu = mu

    def fit(self, X, y=None):
        self.train_ = np.vstack([_probs(d) for d in X])
        return self

    def transform(self, X):
        check_is_fitted(self, "train_")
        return qek_matrix(X, self.mu, others=self.train_)


class ShortestPathKernel(TransformerMixin, BaseEstimator):
    """Normalized shortest-path kernel rows against the graphs seen in ``fit``."""

    def fit(self, X, y=None):
        self.train_ = list(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "train_")
        return spk_matrix(list(X), others=self.train_)
