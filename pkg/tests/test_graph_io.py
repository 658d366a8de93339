import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qek.graph_io import (Graph, GraphSet, TUParseError, corpus_stats, filter_by_node_count,
                          load_graphs, parse_tu_dataset, save_graphs, write_tu_dataset)


def _write(root, name, edges, indicator, labels):
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{name}_A.txt").write_text("".join(f"{u}, {v}\n" for u, v in edges))
    (root / f"{name}_graph_indicator.txt").write_text("".join(f"{i}\n" for i in indicator))
    (root / f"{name}_graph_labels.txt").write_text("".join(f"{v}\n" for v in labels))
    return root


def test_minimal_dataset(tmp_path):
    root = _write(tmp_path / "MINI", "MINI", [(1, 2)], [1, 1], [1])
    gs = parse_tu_dataset(root)
    assert len(gs) == 1
    g = gs[0]
    assert (g.n_nodes, g.n_edges, g.label) == (2, 1, 1)


def test_symmetric_edges_are_collapsed(tmp_path):
    root = _write(tmp_path / "D", "D", [(1, 2), (2, 1), (2, 3), (3, 2), (4, 5)],
                  [1, 1, 1, 2, 2], [0, 1])
    gs = parse_tu_dataset(root)
    assert [g.edges for g in gs] == [((0, 1), (1, 2)), ((0, 1),)]
    # raw labels 0/1 are mapped in ascending order
    assert gs.labels == [1, 2]


@pytest.mark.parametrize("edges, indicator, labels, match", [
    ([(1, 3)], [1, 1, 2], [1, 2], "crosses graphs"),
    ([(1, 9)], [1, 1], [1], "not in graph indicator"),
    ([(1, 2)], [1, 2, 1], [1, 2], "not contiguous"),
    ([(1, 2)], [1, 1], [1, 2, 3], "binary task"),
    ([(1, 2)], [1, 1, 2, 2], [1], "no label"),
])
def test_malformed_inputs(tmp_path, edges, indicator, labels, match):
    root = _write(tmp_path / "BAD", "BAD", edges, indicator, labels)
    with pytest.raises(TUParseError, match=match):
        parse_tu_dataset(root)


def test_error_reports_line_number(tmp_path):
    root = _write(tmp_path / "L", "L", [(1, 2), (2, 3)], [1, 1, 2], [1, 2])
    with pytest.raises(TUParseError) as exc:
        parse_tu_dataset(root)
    assert exc.value.line == 2
    assert "L_A.txt:2" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(TUParseError, match="missing file"):
        parse_tu_dataset(tmp_path)


@pytest.mark.parametrize("kwargs, match", [
    (dict(n_nodes=2, edges=((0, 0),), label=1), "self-loop"),
    (dict(n_nodes=2, edges=((0, 2),), label=1), "out of range"),
    (dict(n_nodes=3, edges=((0, 1), (1, 0)), label=1), "duplicate"),
    (dict(n_nodes=2, edges=(), label=3), "label"),
])
def test_graph_invariants(kwargs, match):
    with pytest.raises(ValueError, match=match):
        Graph(id=1, **kwargs)


def test_corpus_stats_triangle():
    s = corpus_stats([Graph(1, 3, ((0, 1), (1, 2), (0, 2)), 1)])
    assert (s.min_nodes, s.avg_nodes, s.max_nodes) == (3, 3, 3)
    assert (s.min_edges, s.avg_edges, s.max_edges) == (3, 3, 3)


def test_corpus_stats_exact_average():
    gs = [Graph(1, 2, ((0, 1),), 1), Graph(2, 3, (), 2), Graph(3, 3, (), 2)]
    s = corpus_stats(gs)
    assert s.avg_nodes == Fraction(8, 3)
    assert s.class_counts == {1: 1, 2: 2}
    json.dumps(s.to_dict())


def test_filter_by_node_count():
    gs = GraphSet("x", [Graph(i, n, (), 1) for i, n in enumerate([2, 5, 12, 13], 1)])
    assert filter_by_node_count(gs, 12).ids == [1, 2, 3]
    assert len(filter_by_node_count(gs, 1)) == 0
    with pytest.raises(ValueError):
        filter_by_node_count(gs, 0)


def test_edgeless_graphs_kept_and_flagged(tmp_path):
    root = _write(tmp_path / "E", "E", [(1, 2)], [1, 1, 2], [1, 2])
    gs = parse_tu_dataset(root)
    assert gs.edgeless_ids() == [2]
    assert gs.by_id(2).n_nodes == 1


@st.composite
def graph_sets(draw):
    n_graphs = draw(st.integers(1, 6))
    graphs = []
    for gid in range(1, n_graphs + 1):
        n = draw(st.integers(1, 7))
        pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
        edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
        graphs.append(Graph(gid, n, tuple(edges), draw(st.sampled_from([1, 2]))))
    return GraphSet("RT", graphs)


@settings(max_examples=40, deadline=None)
@given(graph_sets())
def test_tu_round_trip(tmp_path_factory, gs):
    root = tmp_path_factory.mktemp("rt")
    write_tu_dataset(gs, root, "RT")
    back = parse_tu_dataset(root, "RT")
    labels_used = sorted(set(gs.labels))
    # a one-class corpus comes back as class 1
    remap = {v: i + 1 for i, v in enumerate(labels_used)}
    assert [(g.id, g.n_nodes, g.edges) for g in back] == [(g.id, g.n_nodes, g.edges) for g in gs]
    assert back.labels == [remap[v] for v in gs.labels]


def test_json_round_trip(tmp_path):
    gs = GraphSet("J", [Graph(3, 3, ((0, 1), (1, 2)), 2), Graph(7, 1, (), 1)])
    save_graphs(gs, tmp_path / "g.json")
    back = load_graphs(tmp_path / "g.json")
    assert back.graphs == gs.graphs and back.name == "J"
