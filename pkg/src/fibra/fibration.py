"""Minimal balanced colorings, fibration bases and input trees.

The minimal balanced coloring is computed by iterated partition refinement
on in-neighborhoods. Class ids are canonical: after every round the distinct
node signatures are sorted and renumbered ``0..k-1``, so two runs on the same
graph (or on relabelled copies) produce comparable colorings.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .graph import DirectedMultigraph, Edge, build_graph


@dataclass(frozen=True)
class Coloring:
    """A partition of the nodes into classes ``0..class_count-1``."""

    assignment: tuple[int, ...]
    history: tuple[tuple[int, ...], ...] = field(default=(), compare=False, repr=False)

    @classmethod
    def from_assignment(cls, labels: Sequence) -> "Coloring":
        """Renumber an arbitrary assignment by first occurrence."""
        ids: dict = {}
        return cls(tuple(ids.setdefault(c, len(ids)) for c in labels))

    @classmethod
    def discrete(cls, n: int) -> "Coloring":
        return cls(tuple(range(n)))

    @property
    def class_count(self) -> int:
        return max(self.assignment) + 1 if self.assignment else 0

    def __len__(self) -> int:
        return len(self.assignment)

    def classes(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.class_count)]
        for u, c in enumerate(self.assignment):
            out[c].append(u)
        return out

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(c) for c in self.classes())

    def same_partition(self, other: "Coloring") -> bool:
        return len(self) == len(other) and self.partition() == other.partition()

    def refines(self, other: "Coloring") -> bool:
        """True if every class of ``self`` lies inside one class of ``other``."""
        seen: dict[int, int] = {}
        for mine, theirs in zip(self.assignment, other.assignment):
            if seen.setdefault(mine, theirs) != theirs:
                return False
        return True


def _label_key(label: str | None) -> tuple:
    return (0, "") if label is None else (1, label)


def _canonical(signatures: list) -> tuple[int, ...]:
    order = {sig: i for i, sig in enumerate(sorted(set(signatures)))}
    return tuple(order[s] for s in signatures)


def _neighborhood_signature(bundles, assignment) -> tuple:
    agg: Counter = Counter()
    for other, t, w, m in bundles:
        agg[(assignment[other], t, w)] += m
    return tuple(sorted((c, t, w, m) for (c, t, w), m in agg.items()))


def initial_coloring(g: DirectedMultigraph, use_attributes: bool = True) -> Coloring:
    """Color nodes by (label, per-type in-degree profile)."""
    sigs = []
    for u in range(g.node_count):
        profile: Counter = Counter()
        for _, t, w, m in g.in_bundles[u]:
            profile[(t, w)] += m
        label = _label_key(g.label(u) if use_attributes else None)
        sigs.append((label, tuple(sorted(profile.items()))))
    return Coloring(_canonical(sigs))


def refine_step(g: DirectedMultigraph, c: Coloring) -> Coloring:
    """One refinement round on in-neighborhoods. Never merges classes."""
    a = c.assignment
    sigs = [(a[u], _neighborhood_signature(g.in_bundles[u], a)) for u in range(g.node_count)]
    return Coloring(_canonical(sigs))


def _fixpoint(g: DirectedMultigraph, start: Coloring, step) -> Coloring:
    history = [start.assignment]
    current = start
    # each productive round adds at least one class, so n rounds always suffice
    for _ in range(g.node_count + 1):
        nxt = step(g, current)
        if nxt.class_count == current.class_count:
            return Coloring(current.assignment, tuple(history))
        history.append(nxt.assignment)
        current = nxt
    raise RuntimeError("refinement did not converge")  # pragma: no cover


def minimal_balanced_coloring(g: DirectedMultigraph, use_attributes: bool = True) -> Coloring:
    """Coarsest balanced coloring of ``g``: its fibers."""
    return _fixpoint(g, initial_coloring(g, use_attributes), refine_step)


def _joint_step(g: DirectedMultigraph, c: Coloring) -> Coloring:
    a = c.assignment
    sigs = [
        (
            a[u],
            _neighborhood_signature(g.in_bundles[u], a),
            _neighborhood_signature(g.out_bundles[u], a),
        )
        for u in range(g.node_count)
    ]
    return Coloring(_canonical(sigs))


def covering_partition(g: DirectedMultigraph, use_attributes: bool = True) -> Coloring:
    """Joint fixpoint of in- and out-refinement (classical 1-WL colors).

    Also serves as the reported upper bound on the automorphism orbits.
    """
    start = Coloring(_canonical([_label_key(g.label(u) if use_attributes else None)
                                 for u in range(g.node_count)]))
    return _fixpoint(g, start, _joint_step)


@dataclass(frozen=True)
class Violation:
    """Nodes ``u`` and ``v`` share a class but receive different numbers of
    ``(edge_type, weight)`` edges from class ``source_class``."""

    u: int
    v: int
    source_class: int
    edge_type: int
    weight: float
    count_u: int
    count_v: int


@dataclass(frozen=True)
class BalanceReport:
    balanced: bool
    witness: Violation | None = None

    def __bool__(self) -> bool:
        return self.balanced


def _class_inputs(g: DirectedMultigraph, a: Sequence[int], u: int) -> Counter:
    agg: Counter = Counter()
    for s, t, w, m in g.in_bundles[u]:
        agg[(a[s], t, w)] += m
    return agg


def is_balanced(g: DirectedMultigraph, c: Coloring) -> BalanceReport:
    if len(c) != g.node_count:
        raise ValueError(f"coloring covers {len(c)} nodes, graph has {g.node_count}")
    a = c.assignment
    for members in c.classes():
        ref = members[0]
        ref_in = _class_inputs(g, a, ref)
        for v in members[1:]:
            v_in = _class_inputs(g, a, v)
            if v_in != ref_in:
                key = min(k for k in set(ref_in) | set(v_in) if ref_in[k] != v_in[k])
                cls, t, w = key
                return BalanceReport(False, Violation(ref, v, cls, t, w, ref_in[key], v_in[key]))
    return BalanceReport(True)


class UnbalancedColoringError(ValueError):
    def __init__(self, witness: Violation):
        super().__init__(
            f"coloring is not balanced: nodes {witness.u} and {witness.v} receive "
            f"{witness.count_u} vs {witness.count_v} edges of type {witness.edge_type} "
            f"(weight {witness.weight}) from class {witness.source_class}"
        )
        self.witness = witness


@dataclass(frozen=True)
class BaseGraph:
    """Quotient of a graph by a balanced coloring.

    ``multiplicities[(y, x, type, weight)]`` is the number of parallel base
    edges ``y -> x``, equal to the number of such edges every member of fiber
    ``x`` receives from fiber ``y``.
    """

    base: DirectedMultigraph
    fiber_map: tuple[int, ...]
    fiber_members: tuple[tuple[int, ...], ...]
    multiplicities: dict[tuple[int, int, int, float], int]

    @property
    def fiber_sizes(self) -> tuple[int, ...]:
        return tuple(len(m) for m in self.fiber_members)

    @property
    def coloring(self) -> Coloring:
        return Coloring(self.fiber_map)


def build_base(
    g: DirectedMultigraph, c: Coloring, representatives: Sequence[int] | None = None
) -> BaseGraph:
    """Relabel one member's in-neighborhood per class and emit it as base edges.

    ``representatives`` optionally picks the member used for each class; by
    balance the result does not depend on the choice.
    """
    report = is_balanced(g, c)
    if not report:
        raise UnbalancedColoringError(report.witness)
    a = c.assignment
    members = c.classes()
    if representatives is None:
        representatives = [m[0] for m in members]
    mult: dict[tuple[int, int, int, float], int] = {}
    edges: list[Edge] = []
    for x, rep in enumerate(representatives):
        if a[rep] != x:
            raise ValueError(f"representative {rep} is not a member of class {x}")
        for (y, t, w), m in sorted(_class_inputs(g, a, rep).items()):
            mult[(y, x, t, w)] = m
            edges.extend(Edge(y, x, t, w) for _ in range(m))
    labels = None
    if g.labels is not None:
        labels = []
        for m in members:
            common = {g.labels[u] for u in m}
            labels.append(common.pop() if len(common) == 1 else None)
    base = build_graph(len(members), edges, labels=labels, directed=True)
    return BaseGraph(base, a, tuple(tuple(m) for m in members), mult)


def minimal_base(g: DirectedMultigraph, use_attributes: bool = True) -> BaseGraph:
    return build_base(g, minimal_balanced_coloring(g, use_attributes))


def compression_factor(g: DirectedMultigraph, b: BaseGraph) -> float:
    """Base-to-original node ratio."""
    if g.node_count == 0:
        raise ValueError("compression factor of an empty graph is undefined")
    if len(b.fiber_map) != g.node_count:
        raise ValueError("base was not built from this graph")
    return b.base.node_count / g.node_count


@dataclass(frozen=True)
class InputTree:
    """Canonical encoding of the in-path tree of ``root`` truncated at ``depth``.

    ``layers[d]`` is a content hash of the tree truncated at depth ``d``; two
    truncated trees are isomorphic exactly when their hashes agree (up to hash
    collisions, which 128-bit digests make negligible).
    """

    root: int
    depth: int
    layers: tuple[str, ...]

    @property
    def encoding(self) -> str:
        return self.layers[-1]


def _digest(payload: str) -> str:
    return hashlib.blake2b(payload.encode(), digest_size=16).hexdigest()


def input_tree_codes(
    g: DirectedMultigraph, depth: int | None = None, use_attributes: bool = True
) -> list[list[str]]:
    """Tree codes for all nodes: ``codes[d][u]`` for ``d = 0..depth``."""
    if depth is None:
        depth = g.node_count
    if depth < 0:
        raise ValueError("depth must be non-negative")
    labels = [repr(g.label(u) if use_attributes else None) for u in range(g.node_count)]
    codes = [[_digest(lab) for lab in labels]]
    for _ in range(depth):
        prev = codes[-1]
        layer = []
        for u in range(g.node_count):
            children = Counter()
            for s, t, w, m in g.in_bundles[u]:
                children[(t, float(w).hex(), prev[s])] += m
            layer.append(_digest(labels[u] + "|" + repr(sorted(children.items()))))
        codes.append(layer)
    return codes


def input_tree(
    g: DirectedMultigraph, u: int, depth: int | None = None, use_attributes: bool = True
) -> InputTree:
    g._check_node(u)
    codes = input_tree_codes(g, depth, use_attributes)
    return InputTree(u, len(codes) - 1, tuple(layer[u] for layer in codes))


def input_tree_partition(
    g: DirectedMultigraph, depth: int | None = None, use_attributes: bool = True
) -> Coloring:
    """Group nodes whose truncated input trees coincide."""
    codes = input_tree_codes(g, depth, use_attributes)
    return Coloring.from_assignment(codes[-1])
