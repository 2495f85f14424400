"""Isomorphism screens: the Fibration test and the 1-WL test.

Both screens are one-sided. A negative verdict (``DifferentBases`` or
``NotIsomorphic``) proves the inputs are not isomorphic; the positive verdicts
only say the screen could not tell them apart.
"""

from __future__ import annotations

import enum
import hashlib
from collections import Counter
from dataclasses import dataclass

from .fibration import (
    Coloring,
    _canonical,
    _fixpoint,
    _joint_step,
    _label_key,
    _neighborhood_signature,
    covering_partition,
    minimal_base,
)
from .graph import DirectedMultigraph, Edge

EXACT_LIMIT = 32


class SizeLimitError(ValueError):
    """Exact isomorphism was requested on graphs larger than supported."""


class Outcome(str, enum.Enum):
    DIFFERENT_BASES = "DifferentBases"
    SAME_BASES = "SameBases"
    NOT_ISOMORPHIC = "NotIsomorphic"
    POSSIBLY_ISOMORPHIC = "PossiblyIsomorphic"


@dataclass(frozen=True)
class ScreenVerdict:
    outcome: Outcome
    evidence: tuple[str, str]
    exact: bool = True

    @property
    def non_isomorphic(self) -> bool:
        """True when the verdict is a proof of non-isomorphism."""
        return self.outcome in (Outcome.DIFFERENT_BASES, Outcome.NOT_ISOMORPHIC)


def wl_stable_partition(g: DirectedMultigraph, use_attributes: bool = True) -> Coloring:
    """Color refinement on both in- and out-neighbor multisets."""
    return covering_partition(g, use_attributes)


def refinement_signature(g: DirectedMultigraph, use_attributes: bool = True) -> str:
    """Isomorphism invariant: digest of the per-round 1-WL signature histograms.

    Two graphs get the same digest exactly when 1-WL cannot separate them.
    """
    a = _canonical([_label_key(g.label(u) if use_attributes else None) for u in range(g.node_count)])
    rounds = [sorted(Counter(_label_key(g.label(u) if use_attributes else None)
                             for u in range(g.node_count)).items())]
    k = len(set(a))
    for _ in range(g.node_count + 1):
        sigs = [
            (a[u], _neighborhood_signature(g.in_bundles[u], a),
             _neighborhood_signature(g.out_bundles[u], a))
            for u in range(g.node_count)
        ]
        rounds.append(sorted(Counter(sigs).items()))
        a = _canonical(sigs)
        if len(set(a)) == k:
            break
        k = len(set(a))
    payload = repr((g.node_count, rounds))
    return hashlib.blake2b(payload.encode(), digest_size=16).hexdigest()


def _union(b1: DirectedMultigraph, b2: DirectedMultigraph) -> DirectedMultigraph:
    n1 = b1.node_count
    edges = list(b1.edges) + [Edge(e.src + n1, e.dst + n1, e.type, e.weight) for e in b2.edges]
    labels = None
    if b1.labels is not None or b2.labels is not None:
        labels = [b1.label(u) for u in range(n1)] + [b2.label(u) for u in range(b2.node_count)]
    return DirectedMultigraph(n1 + b2.node_count, edges, labels)


def _sides_match(c: Coloring, n1: int) -> bool:
    counts: Counter = Counter()
    for u, cls in enumerate(c.assignment):
        counts[cls] += 1 if u < n1 else -1
    return not any(counts.values())


def _is_isomorphism(b1: DirectedMultigraph, b2: DirectedMultigraph, p: list[int]) -> bool:
    for u in range(b1.node_count):
        if b1.label(u) != b2.label(p[u]):
            return False
        mapped = sorted((p[d], t, w, m) for d, t, w, m in b1.out_bundles[u])
        if mapped != list(b2.out_bundles[p[u]]):
            return False
    return True


def multigraph_isomorphic(b1: DirectedMultigraph, b2: DirectedMultigraph) -> bool:
    """Exact isomorphism test preserving labels, edge types, weights and multiplicities.

    Individualization-refinement search on the disjoint union of both graphs.
    """
    if max(b1.node_count, b2.node_count) > EXACT_LIMIT:
        raise SizeLimitError(
            f"exact isomorphism supports at most {EXACT_LIMIT} nodes, "
            f"got {b1.node_count} and {b2.node_count}"
        )
    if b1.node_count != b2.node_count or len(b1.edges) != len(b2.edges):
        return False
    n1 = b1.node_count
    if n1 == 0:
        return True
    u_graph = _union(b1, b2)
    start = Coloring(_canonical([_label_key(u_graph.label(u)) for u in range(u_graph.node_count)]))
    stable = _fixpoint(u_graph, start, _joint_step)
    return _search(b1, b2, u_graph, stable)


def _search(b1, b2, u_graph, c: Coloring) -> bool:
    n1 = b1.node_count
    if not _sides_match(c, n1):
        return False
    if c.class_count == n1:
        mapping = [0] * n1
        owner = {c.assignment[v]: v - n1 for v in range(n1, 2 * n1)}
        for u in range(n1):
            mapping[u] = owner[c.assignment[u]]
        return _is_isomorphism(b1, b2, mapping)
    classes = c.classes()
    target = min((cls for cls in classes if len(cls) > 2), key=lambda m: (len(m), m[0]))
    u = target[0]
    for v in (w for w in target if w >= n1):
        marked = Coloring(_canonical([(c.assignment[w], w in (u, v)) for w in range(2 * n1)]))
        if _search(b1, b2, u_graph, _fixpoint(u_graph, marked, _joint_step)):
            return True
    return False


def fibration_test(
    g1: DirectedMultigraph, g2: DirectedMultigraph, use_attributes: bool = True
) -> ScreenVerdict:
    """Compare the minimal fibration bases of two graphs."""
    b1 = minimal_base(g1, use_attributes).base
    b2 = minimal_base(g2, use_attributes).base
    if not use_attributes:
        b1 = DirectedMultigraph(b1.node_count, b1.edges)
        b2 = DirectedMultigraph(b2.node_count, b2.edges)
    evidence = (refinement_signature(b1), refinement_signature(b2))
    if max(b1.node_count, b2.node_count) <= EXACT_LIMIT:
        same = multigraph_isomorphic(b1, b2)
        exact = True
    else:
        same = evidence[0] == evidence[1]
        exact = not same
    outcome = Outcome.SAME_BASES if same else Outcome.DIFFERENT_BASES
    return ScreenVerdict(outcome, evidence, exact)


def wl_test(
    g1: DirectedMultigraph, g2: DirectedMultigraph, use_attributes: bool = True
) -> ScreenVerdict:
    """Classical 1-WL screen using in- and out-neighborhoods."""
    evidence = (refinement_signature(g1, use_attributes), refinement_signature(g2, use_attributes))
    if evidence[0] != evidence[1]:
        return ScreenVerdict(Outcome.NOT_ISOMORPHIC, evidence)
    return ScreenVerdict(Outcome.POSSIBLY_ISOMORPHIC, evidence)
