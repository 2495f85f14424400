"""Deterministic graph generators for examples and oracle suites."""

from __future__ import annotations

import numpy as np

from .fibration import Coloring, minimal_balanced_coloring
from .graph import DirectedMultigraph, Edge, build_graph


def cycle(n: int, directed: bool = True) -> DirectedMultigraph:
    if n < 1:
        raise ValueError("cycle needs n >= 1")
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)], directed=directed)


def chain(n: int, directed: bool = True) -> DirectedMultigraph:
    if n < 1:
        raise ValueError("chain needs n >= 1")
    return build_graph(n, [(i, i + 1) for i in range(n - 1)], directed=directed)


def star(leaves: int, inward: bool = True) -> DirectedMultigraph:
    """Node 0 is the hub; ``inward`` points every leaf at the hub."""
    if leaves < 0:
        raise ValueError("star needs leaves >= 0")
    edges = [(i, 0) if inward else (0, i) for i in range(1, leaves + 1)]
    return build_graph(leaves + 1, edges)


def random_digraph(
    n: int,
    p: float,
    seed: int | None = None,
    edge_types: int = 1,
    self_loops: bool = False,
    directed: bool = True,
) -> DirectedMultigraph:
    """Erdos-Renyi digraph: each ordered pair carries an edge with probability ``p``.

    With ``directed=False`` each unordered pair is drawn once and stored both ways.
    """
    if n < 0 or not 0.0 <= p <= 1.0 or edge_types < 1:
        raise ValueError(f"invalid parameters n={n}, p={p}, edge_types={edge_types}")
    rng = np.random.default_rng(seed)
    edges = []
    for u in range(n):
        for v in range(n):
            if u == v and not self_loops:
                continue
            if not directed and v < u:
                continue
            if rng.random() < p:
                edges.append((u, v, int(rng.integers(edge_types))))
    return build_graph(n, edges, directed=directed)


def fiber_planted(
    base_nodes: int,
    max_fiber: int,
    seed: int | None = None,
    edge_types: int = 1,
    density: float = 0.4,
    max_multiplicity: int = 2,
    max_tries: int = 1000,
) -> tuple[DirectedMultigraph, Coloring]:
    """Blow a random fibration-prime base up into a graph with known fibers.

    Each base node becomes a fiber of 1..``max_fiber`` nodes; for every base
    bundle ``y -> x`` of multiplicity ``m`` each member of fiber ``x`` draws
    ``m`` sources from fiber ``y``. The base is redrawn until its own minimal
    balanced coloring is discrete, so the planted partition is the coarsest
    balanced one. Node ids are shuffled.
    """
    if base_nodes < 1 or max_fiber < 1:
        raise ValueError("base_nodes and max_fiber must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        bundles = []
        for y in range(base_nodes):
            for x in range(base_nodes):
                if rng.random() < density:
                    bundles.append(
                        (y, x, int(rng.integers(edge_types)), int(rng.integers(1, max_multiplicity + 1)))
                    )
        base = build_graph(base_nodes, [Edge(y, x, t) for y, x, t, m in bundles for _ in range(m)])
        if minimal_balanced_coloring(base).class_count == base_nodes:
            break
    else:
        raise RuntimeError("could not draw a fibration-prime base")

    sizes = rng.integers(1, max_fiber + 1, size=base_nodes)
    n = int(sizes.sum())
    ids = rng.permutation(n)
    members, fiber_of, pos = [], [0] * n, 0
    for x, s in enumerate(sizes):
        block = [int(i) for i in ids[pos:pos + s]]
        members.append(block)
        for u in block:
            fiber_of[u] = x
        pos += s
    edges = []
    for y, x, t, m in bundles:
        for u in members[x]:
            for src in rng.choice(members[y], size=m, replace=True):
                edges.append(Edge(int(src), u, t))
    return build_graph(n, edges), Coloring.from_assignment(fiber_of)


GENERATORS = {
    "cycle": cycle,
    "chain": chain,
    "star": star,
    "random_digraph": random_digraph,
    "fiber_planted": fiber_planted,
}


def generate(kind: str, **params):
    """Dispatch to a generator by name.

    ``fiber_planted`` returns ``(graph, planted_coloring)``; the others return
    a graph.
    """
    try:
        fn = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown generator {kind!r}; choose from {sorted(GENERATORS)}") from None
    try:
        return fn(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from None
