"""Synthetic graph corpora that are unit-disk embeddable by construction.

Graphs are generated from atom positions on the register's row grid, so a
feasible register (with the loss margin) exists for every graph.  Two
topology classes are provided: compact clusters (class 1) and chain-like
trees (class 2).
"""
from __future__ import annotations

import math

import numpy as np

from .embedder import RegisterConstraints, embed
from .graph_io import Graph, GraphSet


def _ud_graph(pos, c: RegisterConstraints):
    """Unit-disk edges of ``pos``, or None if some pair sits in a margin band."""
    n = len(pos)
    lo, hi = c.r_b - c.loss_margin, c.r_b + c.loss_margin
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            d = math.dist(pos[i], pos[j])
            if d < c.min_pair_distance + c.loss_margin or lo <= d <= hi:
                return None
            if d < lo:
                edges.append((i, j))
    return edges


def _cluster_positions(rng, n, c: RegisterConstraints):
    rs = c.row_spacing or c.min_pair_distance
    pos = [(0.0, 0.0)]
    tries = 0
    while len(pos) < n and tries < 2000:
        tries += 1
        ax, ay = pos[rng.integers(len(pos))]
        y = ay + rs * rng.integers(-1, 2)
        x = ax + rng.uniform(-6.0, 6.0)
        cand = (x, y)
        near = sum(math.dist(cand, p) < c.r_b - c.loss_margin for p in pos)
        if near >= min(2, len(pos)) and all(math.dist(cand, p) >= c.min_pair_distance + c.loss_margin for p in pos):
            pos.append(cand)
    return np.array(pos) if len(pos) == n else None


def _chain_positions(rng, n, c: RegisterConstraints):
    rs = c.row_spacing or c.min_pair_distance
    reach = c.r_b - c.loss_margin
    pos = [(0.0, 0.0)]
    tries = 0
    while len(pos) < n and tries < 2000:
        tries += 1
        # mostly extend the newest node, sometimes branch from an older one
        k = len(pos) - 1 if rng.random() < 0.8 else rng.integers(len(pos))
        ax, ay = pos[k]
        dy = rs * rng.integers(-1, 2)
        dmax = math.sqrt(max(reach**2 - dy**2, 0.0))
        if dmax < 1.0:
            continue
        dx = rng.choice([-1.0, 1.0]) * rng.uniform(max(0.0, c.min_pair_distance**2 - dy**2) ** 0.5, dmax)
        cand = (ax + dx, ay + dy)
        others = [p for i, p in enumerate(pos) if i != k]
        if all(math.dist(cand, p) > c.r_b + c.loss_margin for p in others):
            pos.append(cand)
    return np.array(pos) if len(pos) == n else None


def _place(pos, c: RegisterConstraints):
    """Shift into the rectangle with rows on multiples of the row spacing."""
    pos = pos - pos.min(axis=0)
    span = pos.max(axis=0)
    if span[0] > c.width or span[1] > c.height:
        return None
    rs = c.row_spacing
    off_y = 0.0 if rs <= 0 else rs * math.floor((c.height - span[1]) / 2 / rs)
    return pos + np.array([(c.width - span[0]) / 2, off_y])


def make_topology_corpus(n_per_class=20, min_nodes=6, max_nodes=10, seed=0,
                         constraints: RegisterConstraints | None = None,
                         check_embeddable=True, name="TOPO") -> GraphSet:
    """Two-class corpus: dense clusters (label 1) and chain-like trees (label 2).

    When ``check_embeddable`` is set, every graph is also confirmed by the
    optimizer-based embedder under its final id and ``seed``, so a pipeline
    run with the same seed and default constraints embeds all of them.
    Node counts are drawn uniformly from [min_nodes, max_nodes] for both
    classes.
    """
    c = constraints or RegisterConstraints()
    rng = np.random.default_rng(seed)
    makers = {1: _cluster_positions, 2: _chain_positions}
    # labels are assigned to ids up front so any prefix is mixed
    label_of = rng.permutation([1] * n_per_class + [2] * n_per_class)
    graphs: list[Graph] = []
    for gid, label in enumerate(label_of.tolist(), start=1):
        while True:
            n = int(rng.integers(min_nodes, max_nodes + 1))
            pos = makers[label](rng, n, c)
            if pos is None or (pos := _place(pos, c)) is None:
                continue
            edges = _ud_graph(pos, c)
            if edges is None:
                continue
            g = Graph.from_edges(gid, n, edges, label)
            if not g.is_connected():
                continue
            if check_embeddable and not embed(g, c, seed=seed).feasible:
                continue
            graphs.append(g)
            break
    return GraphSet(name=name, graphs=graphs)
