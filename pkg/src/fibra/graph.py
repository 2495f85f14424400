"""Directed multigraphs with typed, weighted parallel edges.

Graphs are immutable once built. Parallel edges are kept as separate
records; aggregated views collapse them into multiplicity counts.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class GraphValidationError(ValueError):
    """Raised when a graph or a query against it is malformed."""

    def __init__(self, message: str, edge_index: int | None = None):
        super().__init__(message)
        self.edge_index = edge_index


@dataclass(frozen=True, order=True)
class Edge:
    src: int
    dst: int
    type: int = 0
    weight: float = 1.0


@dataclass(frozen=True)
class InNeighbor:
    neighbor: int
    type: int
    multiplicity: int
    total_weight: float


def _as_edge(record, index: int) -> Edge:
    if isinstance(record, Edge):
        return record
    if isinstance(record, dict):
        src, dst = record["src"], record["dst"]
        etype = record.get("type", 0)
        weight = record.get("weight", 1.0)
    else:
        record = tuple(record)
        if not 2 <= len(record) <= 4:
            raise GraphValidationError(
                f"edge {index}: expected (src, dst[, type[, weight]]), got {record!r}", index
            )
        src, dst = record[0], record[1]
        etype = record[2] if len(record) > 2 else 0
        weight = record[3] if len(record) > 3 else 1.0
    try:
        src_i, dst_i, type_i = int(src), int(dst), int(etype)
        w = float(weight)
    except (TypeError, ValueError) as exc:
        raise GraphValidationError(f"edge {index}: non-numeric field ({exc})", index) from None
    if type_i < 0:
        raise GraphValidationError(f"edge {index}: negative edge type {type_i}", index)
    if not np.isfinite(w):
        raise GraphValidationError(f"edge {index}: non-finite weight {w}", index)
    return Edge(src_i, dst_i, type_i, w)


class DirectedMultigraph:
    """A directed multigraph over nodes ``0 .. node_count-1``.

    ``labels`` are discrete node attributes (atom species, gene kind) and take
    part in symmetry detection. ``features`` is an optional real matrix with
    one row per node and is only carried as payload.
    """

    def __init__(
        self,
        node_count: int,
        edges: Sequence[Edge],
        labels: Sequence[str | None] | None = None,
        features: np.ndarray | None = None,
        directed: bool = True,
    ):
        self.node_count = node_count
        self.edges = tuple(edges)
        self.labels = tuple(labels) if labels is not None else None
        self.features = features
        self.directed = directed

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        return f"DirectedMultigraph(n={self.node_count}, edges={len(self.edges)}, {kind})"

    def __len__(self) -> int:
        return self.node_count

    def label(self, u: int) -> str | None:
        return None if self.labels is None else self.labels[u]

    def _check_node(self, u: int) -> None:
        if not (isinstance(u, (int, np.integer)) and 0 <= u < self.node_count):
            raise GraphValidationError(f"node {u!r} is not in [0, {self.node_count})")

    @cached_property
    def in_bundles(self) -> tuple[tuple[tuple[int, int, float, int], ...], ...]:
        """Per target node: sorted ``(src, type, weight, multiplicity)`` bundles.

        Weights are kept bit-exact, so edges that differ only in weight land
        in different bundles.
        """
        counts: list[Counter] = [Counter() for _ in range(self.node_count)]
        for e in self.edges:
            counts[e.dst][(e.src, e.type, e.weight)] += 1
        return tuple(
            tuple((s, t, w, m) for (s, t, w), m in sorted(c.items())) for c in counts
        )

    @cached_property
    def out_bundles(self) -> tuple[tuple[tuple[int, int, float, int], ...], ...]:
        """Per source node: sorted ``(dst, type, weight, multiplicity)`` bundles."""
        counts: list[Counter] = [Counter() for _ in range(self.node_count)]
        for e in self.edges:
            counts[e.src][(e.dst, e.type, e.weight)] += 1
        return tuple(
            tuple((d, t, w, m) for (d, t, w), m in sorted(c.items())) for c in counts
        )

    def in_neighbors(self, u: int) -> tuple[InNeighbor, ...]:
        """Aggregated in-neighborhood of ``u`` sorted by (neighbor, type)."""
        self._check_node(u)
        mult: Counter = Counter()
        weight: dict[tuple[int, int], float] = {}
        for s, t, w, m in self.in_bundles[u]:
            mult[(s, t)] += m
            weight[(s, t)] = weight.get((s, t), 0.0) + w * m
        return tuple(InNeighbor(s, t, mult[(s, t)], weight[(s, t)]) for s, t in sorted(mult))

    def in_degree_profile(self, u: int) -> dict[int, int]:
        """Per-type in-degree of ``u`` counting parallel edges."""
        self._check_node(u)
        profile: Counter = Counter()
        for _, t, _, m in self.in_bundles[u]:
            profile[t] += m
        return dict(sorted(profile.items()))

    def out_degree_profile(self, u: int) -> dict[int, int]:
        self._check_node(u)
        profile: Counter = Counter()
        for _, t, _, m in self.out_bundles[u]:
            profile[t] += m
        return dict(sorted(profile.items()))

    def multiplicity(self, u: int, v: int, etype: int | None = None) -> int:
        """Number of parallel edges ``u -> v`` (optionally of one type)."""
        self._check_node(u)
        self._check_node(v)
        return sum(
            m for s, t, _, m in self.in_bundles[v] if s == u and (etype is None or t == etype)
        )

    @cached_property
    def edge_types(self) -> tuple[int, ...]:
        return tuple(sorted({e.type for e in self.edges}))

    def adjacency(self, binary: bool = False, etype: int | None = None) -> np.ndarray:
        """Dense adjacency ``A[src, dst]`` summing weights over parallel edges."""
        A = np.zeros((self.node_count, self.node_count))
        for e in self.edges:
            if etype is None or e.type == etype:
                A[e.src, e.dst] += e.weight
        if binary:
            A = (A != 0).astype(float)
        return A

    def relabel(self, perm: Sequence[int]) -> "DirectedMultigraph":
        """Return the graph with node ``u`` renamed to ``perm[u]``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.node_count)):
            raise GraphValidationError("relabel needs a permutation of the node ids")
        inv = [0] * self.node_count
        for u, p in enumerate(perm):
            inv[p] = u
        labels = None if self.labels is None else [self.labels[inv[p]] for p in range(self.node_count)]
        features = None if self.features is None else self.features[inv]
        edges = [Edge(perm[e.src], perm[e.dst], e.type, e.weight) for e in self.edges]
        return DirectedMultigraph(self.node_count, edges, labels, features, self.directed)


def build_graph(
    node_count: int,
    edges: Iterable,
    labels: Sequence[str | None] | None = None,
    features=None,
    directed: bool = True,
) -> DirectedMultigraph:
    """Validate edge records and build a graph.

    Edge records may be :class:`Edge` instances, ``(src, dst[, type[, weight]])``
    tuples or dicts with ``src``/``dst``/``type``/``weight`` keys. With
    ``directed=False`` every non-loop edge is stored in both directions; a
    self-loop is its own reverse and is stored once.
    """
    if node_count < 0:
        raise GraphValidationError(f"node_count must be non-negative, got {node_count}")
    stored: list[Edge] = []
    for i, rec in enumerate(edges):
        e = _as_edge(rec, i)
        for end in (e.src, e.dst):
            if not 0 <= end < node_count:
                raise GraphValidationError(
                    f"edge {i}: endpoint {end} out of range for {node_count} nodes", i
                )
        stored.append(e)
        if not directed and e.src != e.dst:
            stored.append(Edge(e.dst, e.src, e.type, e.weight))
    if labels is not None:
        labels = [None if lab is None else str(lab) for lab in labels]
        if len(labels) != node_count:
            raise GraphValidationError(f"{len(labels)} labels for {node_count} nodes")
    if features is not None:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        if features.shape[0] != node_count:
            raise GraphValidationError(f"{features.shape[0]} feature rows for {node_count} nodes")
        if not np.all(np.isfinite(features)):
            raise GraphValidationError("node features must be finite")
    return DirectedMultigraph(node_count, stored, labels, features, directed)


def in_neighbors(g: DirectedMultigraph, u: int) -> tuple[InNeighbor, ...]:
    return g.in_neighbors(u)


def in_degree_profile(g: DirectedMultigraph, u: int) -> dict[int, int]:
    return g.in_degree_profile(u)
