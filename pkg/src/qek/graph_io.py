"""Graph containers and the TU multi-file text format.

A TU dataset named ``NAME`` is a directory holding at least::

    NAME_A.txt                 "u, v" per line, 1-based global node ids
    NAME_graph_indicator.txt   graph id of node i on line i
    NAME_graph_labels.txt      class label of graph j on line j

Node label / attribute files may be present and are ignored.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence


class TUParseError(ValueError):
    """Raised for malformed or missing TU dataset files."""

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Graph:
    id: int
    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    label: int

    def __post_init__(self):
        seen = set()
        normed = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"graph {self.id}: self-loop on node {u}")
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise ValueError(f"graph {self.id}: edge ({u}, {v}) out of range")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise ValueError(f"graph {self.id}: duplicate edge {e}")
            seen.add(e)
            normed.append(e)
        if self.label not in (1, 2):
            raise ValueError(f"graph {self.id}: label must be 1 or 2, got {self.label}")
        object.__setattr__(self, "edges", tuple(sorted(normed)))

    @classmethod
    def from_edges(cls, id, n_nodes, edges, label=1):
        """Build a graph, silently dropping duplicate edges."""
        uniq = {(min(u, v), max(u, v)) for u, v in edges}
        return cls(id=id, n_nodes=n_nodes, edges=tuple(sorted(uniq)), label=label)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_edgeless(self) -> bool:
        return not self.edges

    def adjacency(self):
        import numpy as np

        a = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return False
        nbrs = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        seen = {0}
        stack = [0]
        while stack:
            for w in nbrs[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.n_nodes


@dataclass
class GraphSet:
    name: str
    graphs: list[Graph] = field(default_factory=list)

    def __post_init__(self):
        ids = [g.id for g in self.graphs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.name}: duplicate graph ids")

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def ids(self) -> list[int]:
        return [g.id for g in self.graphs]

    @property
    def labels(self) -> list[int]:
        return [g.label for g in self.graphs]

    def by_id(self, graph_id: int) -> Graph:
        for g in self.graphs:
            if g.id == graph_id:
                return g
        raise KeyError(graph_id)

    def edgeless_ids(self) -> list[int]:
        """Ids of graphs with no edges; these are kept but cannot be embedded."""
        return [g.id for g in self.graphs if g.is_edgeless]


@dataclass(frozen=True)
class CorpusStats:
    n_graphs: int
    min_nodes: int
    avg_nodes: Fraction
    max_nodes: int
    min_edges: int
    avg_edges: Fraction
    max_edges: int
    class_counts: dict

    def to_dict(self) -> dict:
        return {
            "n_graphs": self.n_graphs,
            "nodes": {"min": self.min_nodes, "avg": float(self.avg_nodes), "max": self.max_nodes},
            "edges": {"min": self.min_edges, "avg": float(self.avg_edges), "max": self.max_edges},
            "class_counts": {str(k): v for k, v in sorted(self.class_counts.items())},
        }


def _read_int_lines(path: Path) -> list[int]:
    if not path.is_file():
        raise TUParseError(path, "missing file")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s.split(",")[0]))
            except ValueError:
                raise TUParseError(path, f"expected an integer, got {s!r}", lineno) from None
    return out


def parse_tu_dataset(root_path, dataset_name: str | None = None) -> GraphSet:
    """Read a TU-format dataset directory into a :class:`GraphSet`.

    ``dataset_name`` defaults to the directory's base name.  Graph ids are
    the 1-based ids used in the indicator file; local node indices are
    0-based in indicator order.
    """
    root = Path(root_path)
    name = dataset_name or root.name
    a_path = root / f"{name}_A.txt"
    ind_path = root / f"{name}_graph_indicator.txt"
    lab_path = root / f"{name}_graph_labels.txt"
    if not a_path.is_file():
        raise TUParseError(a_path, "missing file")

    indicator = _read_int_lines(ind_path)
    raw_labels = _read_int_lines(lab_path)

    # graph id -> (first global node, node count), in indicator order
    order: list[int] = []
    offset: dict[int, int] = {}
    count: dict[int, int] = {}
    for node, gid in enumerate(indicator, start=1):
        if gid not in offset:
            offset[gid] = node
            count[gid] = 0
            order.append(gid)
        elif indicator[node - 2] != gid:
            raise TUParseError(ind_path, f"nodes of graph {gid} are not contiguous", node)
        count[gid] += 1

    n_labels = len(raw_labels)
    for gid in order:
        if not 1 <= gid <= n_labels:
            raise TUParseError(lab_path, f"no label for graph {gid} ({n_labels} labels)")

    distinct = sorted(set(raw_labels))
    if len(distinct) > 2:
        raise TUParseError(lab_path, f"expected a binary task, found labels {distinct}")
    label_map = {v: i + 1 for i, v in enumerate(distinct)}

    edges: dict[int, set] = {gid: set() for gid in order}
    with open(a_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            parts = s.split(",")
            if len(parts) != 2:
                raise TUParseError(a_path, f"expected 'u, v', got {s!r}", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise TUParseError(a_path, f"non-integer node id in {s!r}", lineno) from None
            for x in (u, v):
                if not 1 <= x <= len(indicator):
                    raise TUParseError(a_path, f"node {x} not in graph indicator", lineno)
            gid = indicator[u - 1]
            if indicator[v - 1] != gid:
                raise TUParseError(
                    a_path, f"edge ({u}, {v}) crosses graphs {gid} and {indicator[v - 1]}", lineno
                )
            if u == v:
                continue
            lu, lv = u - offset[gid], v - offset[gid]
            edges[gid].add((min(lu, lv), max(lu, lv)))

    graphs = [
        Graph(id=gid, n_nodes=count[gid], edges=tuple(sorted(edges[gid])),
              label=label_map[raw_labels[gid - 1]])
        for gid in order
    ]
    return GraphSet(name=name, graphs=graphs)


def write_tu_dataset(gs: GraphSet, root_path, dataset_name: str | None = None) -> Path:
    """Serialize ``gs`` in TU format; inverse of :func:`parse_tu_dataset`.

    Graph ids must be 1..N in some order; labels are written as 1 / 2.
    """
    name = dataset_name or gs.name
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    by_id = {g.id: g for g in gs.graphs}
    if sorted(by_id) != list(range(1, len(gs) + 1)):
        raise ValueError("TU format needs graph ids 1..N")
    start = {}
    nxt = 1
    with open(root / f"{name}_graph_indicator.txt", "w") as ind:
        for g in gs.graphs:
            start[g.id] = nxt
            nxt += g.n_nodes
            ind.writelines(f"{g.id}\n" for _ in range(g.n_nodes))
    with open(root / f"{name}_A.txt", "w") as fa:
        for g in gs.graphs:
            s = start[g.id]
            for u, v in g.edges:
                fa.write(f"{u + s}, {v + s}\n")
                fa.write(f"{v + s}, {u + s}\n")
    with open(root / f"{name}_graph_labels.txt", "w") as fl:
        fl.writelines(f"{by_id[i].label}\n" for i in range(1, len(gs) + 1))
    return root


def filter_by_node_count(gs: GraphSet, max_nodes: int) -> GraphSet:
    if max_nodes < 1:
        raise ValueError("max_nodes must be >= 1")
    return GraphSet(name=gs.name, graphs=[g for g in gs.graphs if g.n_nodes <= max_nodes])


def corpus_stats(gs: GraphSet | Sequence[Graph]) -> CorpusStats:
    graphs = list(gs)
    if not graphs:
        raise ValueError("corpus_stats needs a non-empty graph set")
    nodes = [g.n_nodes for g in graphs]
    edges = [g.n_edges for g in graphs]
    counts: dict[int, int] = {}
    for g in graphs:
        counts[g.label] = counts.get(g.label, 0) + 1
    return CorpusStats(
        n_graphs=len(graphs),
        min_nodes=min(nodes),
        avg_nodes=Fraction(sum(nodes), len(nodes)),
        max_nodes=max(nodes),
        min_edges=min(edges),
        avg_edges=Fraction(sum(edges), len(edges)),
        max_edges=max(edges),
        class_counts=counts,
    )


def graphs_to_json(graphs: Iterable[Graph]) -> list[dict]:
    return [
        {"id": g.id, "n_nodes": g.n_nodes, "edges": [list(e) for e in g.edges], "label": g.label}
        for g in graphs
    ]


def graphs_from_json(records: Iterable[dict]) -> list[Graph]:
    return [
        Graph(id=int(r["id"]), n_nodes=int(r["n_nodes"]),
              edges=tuple(tuple(e) for e in r["edges"]), label=int(r["label"]))
        for r in records
    ]


def save_graphs(gs: GraphSet, path) -> None:
    with open(path, "w") as fh:
        json.dump({"name": gs.name, "graphs": graphs_to_json(gs)}, fh, indent=1)


def load_graphs(path) -> GraphSet:
    path = os.fspath(path)
    if os.path.isdir(path):
        return parse_tu_dataset(path)
    with open(path) as fh:
        doc = json.load(fh)
    return GraphSet(name=doc.get("name", "graphs"), graphs=graphs_from_json(doc["graphs"]))
