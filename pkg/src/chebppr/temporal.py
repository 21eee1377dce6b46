"""Timestamped edge streams: parsing, snapshots, deltas and time reversal.

A :class:`SnapshotStream` is a base edge set plus a time-ordered list of
signed edge events. Snapshot ``k`` is the graph after the first ``k``
snapshot groups of events have been applied to the base, so snapshot ``0``
is the base itself (empty for parsed files).
"""
from __future__ import annotations

import gzip
import io
import os
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .graph import Graph, GraphDelta, GraphError, build_graph

Event = tuple[int, int, float, float]


class StreamFormatError(ValueError):
    """Malformed edge-stream input."""


@dataclass(frozen=True)
class SnapshotStream:
    num_nodes: int
    events: tuple[Event, ...]
    offsets: tuple[int, ...]
    boundaries: tuple[float, ...]
    id_map: dict
    base: tuple[tuple[int, int, float], ...] = ()

    @property
    def num_snapshots(self) -> int:
        return len(self.offsets)

    def _cut(self, index: int) -> int:
        if not 0 <= index <= self.num_snapshots:
            raise IndexError(f"snapshot index {index} outside [0, {self.num_snapshots}]")
        return 0 if index == 0 else self.offsets[index - 1]

    def snapshot_sizes(self) -> list[int]:
        """Number of events in each snapshot group."""
        return list(np.diff((0,) + self.offsets))


def _pair(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u <= v else (v, u)


def _aggregate(items: Iterable[tuple[int, int, float]]) -> dict[tuple[int, int], float]:
    acc: dict[tuple[int, int], float] = defaultdict(float)
    for u, v, w in items:
        acc[_pair(u, v)] += w
    return acc


def _parse_number(text: str, lineno: int, what: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise StreamFormatError(f"line {lineno}: {what} {text!r} is not numeric") from None


def _lines(source) -> Iterable[str]:
    if isinstance(source, bytes):
        if source[:2] == b"\x1f\x8b":
            source = gzip.decompress(source)
        return io.StringIO(source.decode("utf-8")).readlines()
    if isinstance(source, str):
        return io.StringIO(source).readlines()
    return (line.decode("utf-8") if isinstance(line, bytes) else line for line in source)


def parse_edge_stream(source: Union[bytes, str, IO, Iterable[str]]) -> SnapshotStream:
    """Parse ``src dst [weight] timestamp`` lines into a snapshot stream.

    Lines starting with ``%`` or ``#`` are comments. Node ids are remapped to
    ``0..N-1`` in increasing order of the original ids. Each distinct
    timestamp is one snapshot; within a timestamp, repeated undirected pairs
    are merged by summing weights.
    """
    raw = []
    for lineno, line in enumerate(_lines(source), start=1):
        text = line.strip()
        if not text or text[0] in "%#":
            continue
        fields = text.split()
        if len(fields) < 3:
            raise StreamFormatError(
                f"line {lineno}: expected 'src dst [weight] timestamp', missing timestamp in {text!r}"
            )
        src = _parse_number(fields[0], lineno, "source id")
        dst = _parse_number(fields[1], lineno, "target id")
        if not isinstance(src, int) or not isinstance(dst, int):
            raise StreamFormatError(f"line {lineno}: node ids must be integers")
        if len(fields) >= 4:
            weight = float(_parse_number(fields[2], lineno, "weight"))
            stamp = _parse_number(fields[3], lineno, "timestamp")
        else:
            weight = 1.0
            stamp = _parse_number(fields[2], lineno, "timestamp")
        if weight < 0:
            raise StreamFormatError(f"line {lineno}: negative weight {weight}")
        raw.append((src, dst, weight, stamp))

    ids = sorted({x for src, dst, _, _ in raw for x in (src, dst)})
    id_map = {ext: i for i, ext in enumerate(ids)}
    raw.sort(key=lambda e: e[3])

    events: list[Event] = []
    offsets: list[int] = []
    boundaries: list[float] = []
    i = 0
    while i < len(raw):
        stamp = raw[i][3]
        group: dict[tuple[int, int], float] = {}
        while i < len(raw) and raw[i][3] == stamp:
            src, dst, weight, _ = raw[i]
            key = _pair(id_map[src], id_map[dst])
            group[key] = group.get(key, 0.0) + weight
            i += 1
        events.extend((u, v, w, stamp) for (u, v), w in group.items() if w != 0.0)
        offsets.append(len(events))
        boundaries.append(stamp)
    return SnapshotStream(len(ids), tuple(events), tuple(offsets), tuple(boundaries), id_map)


def read_edge_stream(path: Union[str, os.PathLike]) -> SnapshotStream:
    """Read an edge stream from a (possibly gzip-compressed) file."""
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_edge_stream(data)


def batch_events(stream: SnapshotStream, size: int) -> SnapshotStream:
    """Regroup events into snapshots of ``size`` consecutive events."""
    if size < 1:
        raise ValueError("batch size must be at least 1")
    total = len(stream.events)
    offsets = tuple(list(range(size, total, size)) + ([total] if total else []))
    boundaries = tuple(stream.events[o - 1][3] for o in offsets)
    return SnapshotStream(stream.num_nodes, stream.events, offsets, boundaries, stream.id_map, stream.base)


def snapshot_graph(stream: SnapshotStream, upto_index: int) -> Graph:
    """Graph after applying the first ``upto_index`` snapshot groups to the base."""
    cut = stream._cut(upto_index)
    acc = _aggregate(list(stream.base) + [(u, v, w) for u, v, w, _ in stream.events[:cut]])
    for (u, v), w in acc.items():
        if w < 0:
            raise GraphError(f"stream drives weight of edge ({u}, {v}) below zero at snapshot {upto_index}")
    return build_graph(((u, v, w) for (u, v), w in acc.items() if w != 0.0), stream.num_nodes)


def delta_between(stream: SnapshotStream, i: int, j: int) -> GraphDelta:
    """Signed changes turning snapshot ``i`` into snapshot ``j`` (``i < j``)."""
    if not i < j:
        raise ValueError(f"delta_between needs i < j, got ({i}, {j})")
    lo, hi = stream._cut(i), stream._cut(j)
    return GraphDelta.from_changes((u, v, w) for u, v, w, _ in stream.events[lo:hi])


def reverse_time(stream: SnapshotStream) -> SnapshotStream:
    """Run the stream backwards: start from the final graph and remove events.

    Reversed snapshot ``k`` equals original snapshot ``S - k``. Reversed
    events carry negated weights and negated timestamps so that timestamps
    stay nondecreasing; reversing twice restores the original stream.
    """
    total = len(stream.events)
    acc = _aggregate(list(stream.base) + [(u, v, w) for u, v, w, _ in stream.events])
    base = tuple((u, v, w) for (u, v), w in sorted(acc.items()) if w != 0.0)
    events = tuple((u, v, -w, -t) for u, v, w, t in reversed(stream.events))
    s = stream.num_snapshots
    starts = (0,) + stream.offsets[:-1]
    offsets = tuple(total - starts[s - j] for j in range(1, s + 1))
    boundaries = tuple(-stream.boundaries[s - j] for j in range(1, s + 1))
    return SnapshotStream(stream.num_nodes, events, offsets, boundaries, stream.id_map, base)


def same_events(a: SnapshotStream, b: SnapshotStream) -> bool:
    """Multiset equality of base edges and events, plus identical snapshot cuts."""
    return (
        a.num_nodes == b.num_nodes
        and Counter(a.events) == Counter(b.events)
        and Counter(_aggregate(a.base).items()) == Counter(_aggregate(b.base).items())
        and a.offsets == b.offsets
        and a.boundaries == b.boundaries
    )


# -- synthetic temporal graphs -----------------------------------------------


def _preferential_stream(n: int, m: int, snapshots: int, batch: int, rng: np.random.Generator):
    n_join = max(1, n // 100)
    n_base = n - n_join
    if n_base <= m + 1:
        raise ValueError(f"need more than {m + 1} base nodes for preferential attachment with m={m}")
    edges: set[tuple[int, int]] = set()
    pool: list[int] = []
    base: list[tuple[int, int]] = []

    def add(u, v):
        edges.add(_pair(u, v))
        pool.extend((u, v))

    for u in range(m + 1):
        for v in range(u):
            add(u, v)
            base.append((v, u))
    for u in range(m + 1, n_base):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(pool[rng.integers(len(pool))])
        for v in sorted(targets):
            add(u, v)
            base.append(_pair(u, v))

    events: list[Event] = [(u, v, 1.0, 0) for u, v in base]
    offsets = [len(events)]
    active = n_base
    join_at = set(rng.choice(np.arange(1, snapshots + 1), size=min(n_join, snapshots), replace=False).tolist())
    for k in range(1, snapshots + 1):
        new: list[tuple[int, int]] = []
        if k in join_at and active < n:
            u = active
            active += 1
            v = pool[rng.integers(len(pool))]
            add(u, v)
            new.append(_pair(u, v))
        else:
            tries = 0
            while len(new) < batch and tries < 100 * batch:
                tries += 1
                u = pool[rng.integers(len(pool))]
                v = int(rng.integers(active))
                if u == v or _pair(u, v) in edges:
                    continue
                add(u, v)
                new.append(_pair(u, v))
        events.extend((u, v, 1.0, k) for u, v in new)
        offsets.append(len(events))
    return events, offsets


def _geometric_stream(n: int, radius: float, snapshots: int, batch: int, rng: np.random.Generator):
    pts = rng.random((n, 2))
    tree = cKDTree(pts)
    near = tree.query_pairs(radius, output_type="ndarray")
    far = tree.query_pairs(1.5 * radius, output_type="ndarray")
    near_set = {tuple(p) for p in near.tolist()}
    extra = [tuple(p) for p in far.tolist() if tuple(p) not in near_set]
    extra = [extra[i] for i in rng.permutation(len(extra))]
    events: list[Event] = [(int(u), int(v), 1.0, 0) for u, v in sorted(near_set)]
    offsets = [len(events)]
    pos = 0
    for k in range(1, snapshots + 1):
        chunk = extra[pos : pos + batch]
        pos += batch
        if not chunk:
            break
        events.extend((int(u), int(v), 1.0, k) for u, v in chunk)
        offsets.append(len(events))
    return events, offsets


def synthetic_stream(
    model: str,
    n: int,
    param: float,
    seed: int,
    snapshots: Optional[int] = None,
    batch: int = 1,
) -> SnapshotStream:
    """Seeded synthetic temporal graph.

    ``model="pa"``: preferential attachment base graph with ``param`` edges per
    node, followed by snapshots that each add ``batch`` edges (or one joining
    node). ``model="rgg"``: random geometric graph of radius ``param`` whose
    later snapshots add pairs at distance up to ``1.5 * param``. Snapshot 1
    is the base graph; snapshot 0 is empty.
    """
    rng = np.random.default_rng(seed)
    snapshots = n if snapshots is None else int(snapshots)
    if model == "pa":
        events, offsets = _preferential_stream(int(n), int(param), snapshots, int(batch), rng)
    elif model == "rgg":
        events, offsets = _geometric_stream(int(n), float(param), snapshots, int(batch), rng)
    else:
        raise ValueError(f"unknown synthetic model {model!r}; expected 'pa' or 'rgg'")
    boundaries = tuple(float(events[o - 1][3]) for o in offsets)
    return SnapshotStream(int(n), tuple(events), tuple(offsets), boundaries, {i: i for i in range(int(n))})
