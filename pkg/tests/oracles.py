"""Independent reference implementations used by the test-suite.

Nothing here calls the refinement code under test.
"""

from __future__ import annotations

import itertools
from collections import Counter

import numpy as np

from fibra.graph import DirectedMultigraph, build_graph


def edge_counts(g: DirectedMultigraph) -> dict[tuple[int, int], Counter]:
    out: dict[tuple[int, int], Counter] = {}
    for e in g.edges:
        out.setdefault((e.src, e.dst), Counter())[(e.type, e.weight)] += 1
    return out


def brute_isomorphic(g1: DirectedMultigraph, g2: DirectedMultigraph) -> bool:
    """Exhaustive search over bijections, extended one node at a time.

    A partial map is abandoned as soon as two mapped nodes disagree on
    labels or on the edge multiset between them.
    """
    n = g1.node_count
    if n != g2.node_count or len(g1.edges) != len(g2.edges):
        return False
    e1, e2 = edge_counts(g1), edge_counts(g2)
    empty: Counter = Counter()

    def consistent(mapping: list[int], u: int) -> bool:
        v = mapping[u]
        if g1.label(u) != g2.label(v):
            return False
        for w in range(u + 1):
            x = mapping[w]
            if e1.get((u, w), empty) != e2.get((v, x), empty):
                return False
            if e1.get((w, u), empty) != e2.get((x, v), empty):
                return False
        return True

    mapping = [-1] * n
    used = [False] * n

    def extend(u: int) -> bool:
        if u == n:
            return True
        for v in range(n):
            if used[v]:
                continue
            mapping[u] = v
            if consistent(mapping, u):
                used[v] = True
                if extend(u + 1):
                    return True
                used[v] = False
        mapping[u] = -1
        return False

    return extend(0)


def class_inputs(g: DirectedMultigraph, assignment, u: int) -> Counter:
    c: Counter = Counter()
    for e in g.edges:
        if e.dst == u:
            c[(assignment[e.src], e.type, e.weight)] += 1
    return c


def balanced(g: DirectedMultigraph, assignment) -> bool:
    first: dict[int, Counter] = {}
    for u in range(g.node_count):
        ci = class_inputs(g, assignment, u)
        ref = first.setdefault(assignment[u], ci)
        if ref != ci:
            return False
    return True


def coarsest_balanced_partition(g: DirectedMultigraph, use_labels: bool = True) -> frozenset:
    """Coarsest balanced partition by exhaustive search.

    Every balanced partition groups only nodes with equal per-type in-degree
    (sum the class-wise counts) and, with ``use_labels``, equal labels, so the
    search only places a node into blocks of matching nodes. A partial
    assignment is cut as soon as two nodes of one block, whose in-neighbors
    are all placed, receive different class-wise inputs. Among all balanced
    partitions the one with the fewest blocks is returned; it is checked to
    be unique and to be refined by every other balanced partition found.
    """
    n = g.node_count
    in_edges: list[list] = [[] for _ in range(n)]
    for e in g.edges:
        in_edges[e.dst].append(e)

    def key(u):
        deg = Counter((e.type, e.weight) for e in in_edges[u])
        return (g.label(u) if use_labels else None, tuple(sorted(deg.items())))

    keys = [key(u) for u in range(n)]
    order = sorted(range(n), key=lambda u: (repr(keys[u]), u))
    position = {u: i for i, u in enumerate(order)}
    ready_at = [max([position[u]] + [position[e.src] for e in in_edges[u]]) for u in range(n)]
    # nodes whose own block and whose in-neighbors are all fixed after step i
    ready_after: list[list[int]] = [[] for _ in range(n)]
    for u in range(n):
        ready_after[ready_at[u]].append(u)

    assignment = [-1] * n
    block_keys: list = []
    block_ref: list = []  # first ready member's class inputs, per block
    found: list[tuple[int, ...]] = []

    def inputs(u):
        c: Counter = Counter()
        for e in in_edges[u]:
            c[(assignment[e.src], e.type, e.weight)] += 1
        return c

    def search(i: int) -> None:
        if i == n:
            found.append(tuple(assignment))
            return
        u = order[i]
        options = [b for b, k in enumerate(block_keys) if k == keys[u]] + [len(block_keys)]
        for b in options:
            fresh = b == len(block_keys)
            if fresh:
                block_keys.append(keys[u])
                block_ref.append(None)
            assignment[u] = b
            saved = list(block_ref)
            ok = True
            for v in ready_after[i]:
                cv = inputs(v)
                ref = block_ref[assignment[v]]
                if ref is None:
                    block_ref[assignment[v]] = cv
                elif ref != cv:
                    ok = False
                    break
            if ok:
                search(i + 1)
            block_ref[:] = saved
            assignment[u] = -1
            if fresh:
                block_keys.pop()
                block_ref.pop()

    search(0)
    assert found, "the discrete partition is always balanced"

    def as_partition(a):
        blocks: dict[int, set] = {}
        for u, b in enumerate(a):
            blocks.setdefault(b, set()).add(u)
        return frozenset(frozenset(s) for s in blocks.values())

    parts = [as_partition(a) for a in found]
    fewest = min(len(p) for p in parts)
    coarsest = [p for p in parts if len(p) == fewest]
    assert len(set(coarsest)) == 1, "coarsest balanced partition must be unique"
    best = coarsest[0]
    for p in parts:
        assert all(any(block <= big for big in best) for block in p)
    return best


def all_digraphs(n: int, symmetric: bool = False) -> list[DirectedMultigraph]:
    """One representative per isomorphism class of loop-free simple digraphs on n nodes."""
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    if symmetric:
        pairs = [(u, v) for u, v in pairs if u < v]
    perms = list(itertools.permutations(range(n)))
    seen = set()
    reps = []
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        edges = [p for p, b in zip(pairs, bits) if b]
        if symmetric:
            edges = edges + [(v, u) for u, v in edges]
        es = frozenset(edges)
        canon = min(tuple(sorted((p[u], p[v]) for u, v in es)) for p in perms)
        if canon in seen:
            continue
        seen.add(canon)
        if symmetric:
            reps.append(build_graph(n, [(u, v) for u, v in canon if u < v], directed=False))
        else:
            reps.append(build_graph(n, list(canon)))
    return reps


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. array ``x`` (modified in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-12)
    return float(np.max(np.abs(a - b))) / scale
