"""Constrained unit-disk embedding of graphs into a rectangular atom register.

A register realizes a graph when atoms closer than the blockade radius
are exactly the graph's edges.  Positions are found by multi-restart
minimization of a hinge-penalty loss; a result is only accepted after
:func:`verify_ud` re-checks every constraint exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, TransformerMixin

from .emulator import DEFAULT_C6, DEFAULT_OMEGA_MAX, blockade_radius, derive_rng
from .graph_io import Graph

EPS = 1e-9  # µm, comparison slack in verify_ud


def default_blockade_radius() -> float:
    return float(blockade_radius(DEFAULT_OMEGA_MAX, 0.0, DEFAULT_C6))


@dataclass(frozen=True)
class RegisterConstraints:
    width: float = 75.0
    height: float = 76.0
    row_spacing: float = 4.0
    min_pair_distance: float = 4.0
    blockade_radius: float = field(default_factory=default_blockade_radius)
    margin: float | None = None
    max_atoms: int = 256

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.min_pair_distance <= 0:
            raise ValueError("register dimensions and min_pair_distance must be positive")
        if self.row_spacing < 0:
            raise ValueError("row_spacing must be >= 0")
        if not self.min_pair_distance < self.blockade_radius < max(self.width, self.height):
            raise ValueError("need min_pair_distance < blockade_radius < max(width, height)")
        if self.margin is not None and self.margin < 0:
            raise ValueError("margin must be >= 0")

    @property
    def r_b(self) -> float:
        return self.blockade_radius

    @property
    def loss_margin(self) -> float:
        return self.blockade_radius / 20 if self.margin is None else self.margin

    @property
    def top_row(self) -> float:
        if self.row_spacing <= 0:
            return self.height
        return math.floor(self.height / self.row_spacing + EPS) * self.row_spacing

    @property
    def capacity(self) -> int:
        step_y = self.row_spacing if self.row_spacing > 0 else self.min_pair_distance
        rows = math.floor(self.height / step_y + EPS) + 1
        per_row = math.floor(self.width / self.min_pair_distance + EPS) + 1
        return min(self.max_atoms, rows * per_row)


@dataclass
class Register:
    positions: np.ndarray
    r_b: float
    graph_id: int | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.positions)

    def to_record(self) -> dict:
        return {"graph_id": self.graph_id, "r_b_um": float(self.r_b),
                "positions": [[float(x), float(y)] for x, y in self.positions]}

    @classmethod
    def from_record(cls, rec: dict) -> "Register":
        return cls(positions=np.asarray(rec["positions"], dtype=float), r_b=float(rec["r_b_um"]),
                   graph_id=rec.get("graph_id"))


@dataclass
class EmbeddingReport:
    violated_edges: list = field(default_factory=list)
    spurious_edges: list = field(default_factory=list)
    boundary_violations: list = field(default_factory=list)
    spacing_violations: list = field(default_factory=list)
    row_violations: list = field(default_factory=list)
    final_loss: float = 0.0

    @property
    def feasible(self) -> bool:
        return not (self.violated_edges or self.spurious_edges or self.boundary_violations
                    or self.spacing_violations or self.row_violations)

    def n_violations(self) -> int:
        return (len(self.violated_edges) + len(self.spurious_edges) + len(self.boundary_violations)
                + len(self.spacing_violations) + len(self.row_violations))


@dataclass
class EmbeddingResult:
    graph_id: int
    register: Register | None
    report: EmbeddingReport
    attempts: int
    rejected_reason: str | None = None

    @property
    def feasible(self) -> bool:
        return self.register is not None


def _pair_terms(pos, adj, c: RegisterConstraints, with_grad=False):
    n = len(pos)
    iu, ju = np.triu_indices(n, 1)
    diff = pos[iu] - pos[ju]
    d = np.sqrt((diff**2).sum(axis=1))
    edge = adj[iu, ju]
    m = c.loss_margin
    r_b = c.r_b

    h_edge = np.where(edge, np.maximum(0.0, d - (r_b - m)), 0.0)
    h_non = np.where(~edge, np.maximum(0.0, (r_b + m) - d), 0.0)
    h_min = np.maximum(0.0, c.min_pair_distance - d)
    loss = (h_edge**2).sum() + (h_non**2).sum() + (h_min**2).sum()

    dy = diff[:, 1]
    ady = np.abs(dy)
    rs = c.row_spacing
    if rs > 0:
        h_row = np.where(ady < rs, np.minimum(ady, rs - ady), 0.0)
        loss += (h_row**2).sum()

    lo = np.maximum(0.0, -pos)
    hi = np.maximum(0.0, pos - np.array([c.width, c.height]))
    loss += (lo**2).sum() + (hi**2).sum()
    if not with_grad:
        return float(loss)

    dd = 2 * h_edge - 2 * h_non - 2 * h_min  # dloss/dd per pair
    unit = diff / np.maximum(d, 1e-12)[:, None]
    gpair = dd[:, None] * unit
    if rs > 0:
        # d/d|dy| of min(|dy|, rs-|dy|)² : +2h below rs/2, -2h above
        g_ady = np.where(ady <= rs / 2, 2 * h_row, -2 * h_row)
        gpair[:, 1] += g_ady * np.sign(dy)
    grad = np.zeros_like(pos)
    np.add.at(grad, iu, gpair)
    np.add.at(grad, ju, -gpair)
    grad += -2 * lo + 2 * hi
    return float(loss), grad


def embedding_loss(positions, graph: Graph, constraints: RegisterConstraints | None = None) -> float:
    """Sum of squared hinge penalties; zero iff every constraint holds with margin.

    Edges must sit below ``r_b - margin``, non-edges above ``r_b + margin``;
    atoms must stay in the rectangle, keep ``min_pair_distance`` apart and,
    when rows are enforced, be either on the same row or a full row apart.
    """
    c = constraints or RegisterConstraints()
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pos) != graph.n_nodes:
        raise ValueError(f"expected {graph.n_nodes} positions, got {len(pos)}")
    return _pair_terms(pos, graph.adjacency(), c)


def verify_ud(register, graph: Graph, constraints: RegisterConstraints | None = None) -> EmbeddingReport:
    """Exact feasibility check of a register against ``graph`` and ``constraints``."""
    c = constraints or RegisterConstraints()
    pos = register.positions if isinstance(register, Register) else np.asarray(register, float).reshape(-1, 2)
    n = graph.n_nodes
    if len(pos) != n:
        raise ValueError(f"expected {n} positions, got {len(pos)}")
    adj = graph.adjacency()
    rep = EmbeddingReport()
    for i, (x, y) in enumerate(pos):
        if x < -EPS or x > c.width + EPS:
            rep.boundary_violations.append((i, "x", float(x)))
        if y < -EPS or y > c.height + EPS:
            rep.boundary_violations.append((i, "y", float(y)))
        if c.row_spacing > 0:
            off = abs(y - c.row_spacing * round(y / c.row_spacing))
            if off > EPS:
                rep.row_violations.append((i, float(y)))
    for i in range(n):
        for j in range(i + 1, n):
            d = math.dist(pos[i], pos[j])
            if d < c.min_pair_distance - EPS:
                rep.spacing_violations.append((i, j, d))
            if adj[i, j] and not d < c.r_b - EPS:
                rep.violated_edges.append((i, j))
            elif not adj[i, j] and d < c.r_b - EPS:
                rep.spurious_edges.append((i, j))
    rep.final_loss = _pair_terms(pos, adj, c)
    return rep


def snap_to_rows(positions, constraints: RegisterConstraints):
    pos = np.array(positions, dtype=float).reshape(-1, 2)
    rs = constraints.row_spacing
    if rs > 0:
        pos[:, 1] = np.clip(rs * np.round(pos[:, 1] / rs), 0.0, constraints.top_row)
    return pos


def _attempt(graph, adj, c, rng, maxiter):
    n = graph.n_nodes
    side = min(c.width, c.height, c.r_b * (1.0 + math.sqrt(n)))
    origin = np.array([c.width - side, c.height - side]) / 2
    x0 = origin + rng.random((n, 2)) * side
    bounds = [(0.0, c.width), (0.0, c.height)] * n

    def f(flat):
        loss, g = _pair_terms(flat.reshape(n, 2), adj, c, with_grad=True)
        return loss, g.ravel()

    res = minimize(f, x0.ravel(), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12})
    pos = res.x.reshape(n, 2)
    if c.row_spacing <= 0:
        return pos
    pos = snap_to_rows(pos, c)
    ys = pos[:, 1].copy()

    # rows are now fixed; only x moves
    def fx(xs):
        p = np.column_stack([xs, ys])
        loss, g = _pair_terms(p, adj, c, with_grad=True)
        return loss, g[:, 0]

    res = minimize(fx, pos[:, 0], jac=True, method="L-BFGS-B", bounds=[(0.0, c.width)] * n,
                   options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12})
    return np.column_stack([res.x, ys])


def embed(graph: Graph, constraints: RegisterConstraints | None = None, seed: int = 0,
          attempts: int = 20, maxiter: int = 2000) -> EmbeddingResult:
    """Search for a feasible register for ``graph``.

    Returns the first attempt that passes :func:`verify_ud`; otherwise an
    infeasible result carrying the lowest-loss attempt's report.  Failure
    after ``attempts`` restarts is "not found", not a proof.
    """
    c = constraints or RegisterConstraints()
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    if graph.n_nodes < 2 or graph.is_edgeless:
        return EmbeddingResult(graph.id, None, EmbeddingReport(final_loss=math.inf), 0,
                               rejected_reason="graph has no edges")
    if graph.n_nodes > c.capacity:
        return EmbeddingResult(graph.id, None, EmbeddingReport(final_loss=math.inf), 0,
                               rejected_reason=f"{graph.n_nodes} nodes exceed capacity {c.capacity}")
    adj = graph.adjacency()
    best = None
    for a in range(attempts):
        rng = derive_rng(seed, f"embed/{a}", graph.id)
        pos = _attempt(graph, adj, c, rng, maxiter)
        rep = verify_ud(pos, graph, c)
        if rep.feasible:
            return EmbeddingResult(graph.id, Register(pos, c.r_b, graph.id), rep, a + 1)
        if best is None or rep.final_loss < best.final_loss:
            best = rep
    return EmbeddingResult(graph.id, None, best, attempts, rejected_reason="no feasible embedding found")


@dataclass
class EmbeddedDataset:
    embedded: list  # (Graph, Register) pairs, input order
    rejected: list[int]
    attempts: dict

    @property
    def graphs(self):
        return [g for g, _ in self.embedded]

    @property
    def registers(self):
        return [r for _, r in self.embedded]


def embed_dataset(graphs, constraints: RegisterConstraints | None = None, seed: int = 0,
                  attempts: int = 20, n_jobs: int | None = None) -> EmbeddedDataset:
    """Embed every graph; each graph draws its own seeded stream so the
    outcome does not depend on scheduling."""
    c = constraints or RegisterConstraints()
    graphs = list(graphs)
    if n_jobs and n_jobs != 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(embed)(g, c, seed, attempts) for g in graphs)
    else:
        results = [embed(g, c, seed, attempts) for g in graphs]
    embedded, rejected, tries = [], [], {}
    for g, r in zip(graphs, results):
        tries[g.id] = r.attempts
        if r.feasible:
            embedded.append((g, r.register))
        else:
            rejected.append(g.id)
    return EmbeddedDataset(embedded, rejected, tries)


class UnitDiskEmbedder(TransformerMixin, BaseEstimator):
    """Transformer mapping graphs to registers (``None`` where embedding failed).

    Parameters
    ----------
    constraints : RegisterConstraints, optional
        Register geometry; defaults to a 75 µm × 76 µm area with 4 µm rows.
    seed : int
        Master seed; every graph gets an independent stream.
    attempts : int
        Random restarts per graph.
    """

    def __init__(self, constraints=None, seed=0, attempts=20, n_jobs=None):
        self.constraints = constraints
        self.seed = seed
        self.attempts = attempts
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        self.constraints_ = self.constraints or RegisterConstraints()
        return self

    def transform(self, X):
        c = getattr(self, "constraints_", None) or self.constraints or RegisterConstraints()
        ds = embed_dataset(X, c, self.seed, self.attempts, self.n_jobs)
        regs = dict((g.id, r) for g, r in ds.embedded)
        self.rejected_ = ds.rejected
        self.attempts_ = ds.attempts
        return [regs.get(g.id) for g in X]
