import gzip

import numpy as np
import pytest

from chebppr import apply_delta
from chebppr.temporal import (
    StreamFormatError,
    batch_events,
    delta_between,
    parse_edge_stream,
    read_edge_stream,
    reverse_time,
    same_events,
    snapshot_graph,
    synthetic_stream,
)

SMALL = "0 1 1 10\n1 2 1 20\n"


def test_parse_small_stream():
    s = parse_edge_stream(SMALL)
    assert s.num_nodes == 3
    assert len(s.events) == 2
    assert s.num_snapshots == 2
    assert s.boundaries == (10, 20)


def test_missing_timestamp_is_reported():
    with pytest.raises(StreamFormatError, match="line 2.*missing timestamp"):
        parse_edge_stream("% comment\n0 1\n")


def test_non_numeric_field():
    with pytest.raises(StreamFormatError, match="line 1"):
        parse_edge_stream("0 x 5\n")
    with pytest.raises(StreamFormatError):
        parse_edge_stream("0 1 1 t\n")


def test_ids_are_densified_in_order():
    s = parse_edge_stream("5 900 1\n7 5 2\n")
    assert s.id_map == {5: 0, 7: 1, 900: 2}
    assert s.num_nodes == 3
    assert {(u, v) for u, v, _, _ in s.events} == {(0, 2), (0, 1)}


def test_three_column_and_gzip_input(tmp_path):
    path = tmp_path / "edges.txt.gz"
    path.write_bytes(gzip.compress(b"# header\n1 2 100\n2 3 100\n1 3 200\n"))
    s = read_edge_stream(path)
    assert s.num_snapshots == 2
    assert s.snapshot_sizes() == [2, 1]
    assert all(w == 1.0 for _, _, w, _ in s.events)


def test_events_sorted_and_duplicates_merged():
    s = parse_edge_stream("0 1 1 5\n2 1 1 3\n1 0 2 5\n")
    assert [e[3] for e in s.events] == [3, 5]
    assert s.events[1][:3] == (0, 1, 3.0)


def test_snapshot_graph_examples():
    s = parse_edge_stream(SMALL)
    g0 = snapshot_graph(s, 0)
    assert g0.num_nodes == 3 and g0.num_edges == 0 and g0.isolated.all()
    assert snapshot_graph(s, 1).edges() == [(0, 1, 1.0)]
    assert snapshot_graph(s, 2).num_edges == 2
    with pytest.raises(IndexError):
        snapshot_graph(s, 3)


def test_delta_between_examples():
    s = parse_edge_stream(SMALL)
    assert delta_between(s, 0, 1).changes == ((0, 1, 1.0),)
    assert len(delta_between(s, 0, 2)) == 2
    with pytest.raises(ValueError):
        delta_between(s, 1, 1)


def test_reverse_examples():
    s = parse_edge_stream(SMALL)
    r = reverse_time(s)
    assert snapshot_graph(r, 0).num_edges == 2
    assert delta_between(r, 0, 1).changes == ((1, 2, -1.0),)
    assert same_events(reverse_time(r), s)


def test_reverse_isolates_leaf():
    s = parse_edge_stream("0 1 1 1\n1 2 1 2\n")
    g = snapshot_graph(reverse_time(s), 1)
    assert g.degrees.tolist() == [1, 1, 0]


def test_batching_regroups_events():
    s = parse_edge_stream("0 1 1\n1 2 2\n2 3 3\n3 4 4\n4 5 5\n")
    b = batch_events(s, 2)
    assert b.offsets == (2, 4, 5)
    assert snapshot_graph(b, 3).same_as(snapshot_graph(s, 5))
    with pytest.raises(ValueError):
        batch_events(s, 0)


@pytest.mark.parametrize("model,param", [("pa", 3), ("rgg", 0.05)])
def test_synthetic_streams_are_seeded(model, param):
    a = synthetic_stream(model, 300, param, seed=1, snapshots=50)
    b = synthetic_stream(model, 300, param, seed=1, snapshots=50)
    c = synthetic_stream(model, 300, param, seed=2, snapshots=50)
    assert a.events == b.events and a.offsets == b.offsets
    assert a.events != c.events
    assert snapshot_graph(a, 0).num_edges == 0
    assert snapshot_graph(a, a.num_snapshots).num_edges > snapshot_graph(a, 1).num_edges


def test_unknown_synthetic_model():
    with pytest.raises(ValueError):
        synthetic_stream("er", 100, 2, 0)


def test_composition_and_reversal_on_synthetic_stream():
    s = synthetic_stream("pa", 300, 2, seed=4, snapshots=60, batch=2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        i, j = sorted(rng.choice(s.num_snapshots + 1, size=2, replace=False))
        assert snapshot_graph(s, j).same_as(apply_delta(snapshot_graph(s, i), delta_between(s, i, j)))
    r = reverse_time(s)
    assert same_events(reverse_time(r), s)
    last = s.num_snapshots
    for k in (0, 1, 7, last - 1, last):
        assert snapshot_graph(r, k).same_as(snapshot_graph(s, last - k))
