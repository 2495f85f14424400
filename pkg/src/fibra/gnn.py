"""Dense message-passing layers on a graph and on its fibration base.

Four layer kinds are supported: graph convolution (GC), edge-conditioned
convolution (GEC), graph isomorphism (GI) and graph attention (GA). Feature
matrices are ``numpy`` arrays with one row per node.

On a base the same formulas run over the quotient multigraph, whose adjacency
entry ``A_B[y, x]`` is the total weight every member of fiber ``x`` receives
from fiber ``y``. Lifting the base output back to the graph reproduces the
graph-level output row for row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fibration import BaseGraph, Coloring
from .graph import DirectedMultigraph

log = logging.getLogger(__name__)

KINDS = ("GC", "GEC", "GI", "GA")


class LayerContractError(ValueError):
    """Shapes, parameters or inputs do not satisfy a layer's contract."""


class LayerCapabilityError(RuntimeError):
    """The requested layer configuration cannot run on a base graph."""


class NotFiberConstantError(ValueError):
    """Input features differ inside a fiber."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "relu": lambda x: np.maximum(x, 0.0),
    "sigmoid": _sigmoid,
    "identity": lambda x: x,
}


def _activation_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(float)
    if name == "sigmoid":
        s = _sigmoid(z)
        return s * (1.0 - s)
    return np.ones_like(z)


@dataclass
class GnnLayer:
    """One message-passing layer.

    ``W`` is used by GC and GA; GEC uses ``theta`` for the self term and
    ``edge_weights[type]`` per edge type; GI applies ``inner`` (matrices with
    ReLU in between) to its aggregate. ``b1``/``b2`` are the GA attention
    vectors, sized to the output dimension.
    """

    kind: str
    W: np.ndarray | None = None
    theta: np.ndarray | None = None
    edge_weights: dict[int, np.ndarray] | None = None
    eps: float = 0.0
    inner: tuple[np.ndarray, ...] = ()
    b1: np.ndarray | None = None
    b2: np.ndarray | None = None
    activation: str = "relu"
    rho: str = "relu"
    binarize: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LayerContractError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS or self.rho not in ACTIVATIONS:
            raise LayerContractError(f"unknown activation {self.activation!r}/{self.rho!r}")
        if self.kind in ("GC", "GA") and self.W is None:
            raise LayerContractError(f"{self.kind} needs W")
        if self.kind == "GEC":
            if self.theta is None or not self.edge_weights:
                raise LayerContractError("GEC needs theta and an edge-type weight table")
            for t, Wt in self.edge_weights.items():
                if Wt.shape != self.theta.shape:
                    raise LayerContractError(
                        f"edge type {t}: weight shape {Wt.shape} != theta shape {self.theta.shape}"
                    )
        if self.kind == "GI":
            if not -1.0 <= self.eps <= 1.0:
                raise LayerContractError(f"GI epsilon must lie in [-1, 1], got {self.eps}")
            for A, B in zip(self.inner, self.inner[1:]):
                if A.shape[1] != B.shape[0]:
                    raise LayerContractError("GI inner map shapes do not compose")
        if self.kind == "GA":
            d_out = self.W.shape[1]
            for b in (self.b1, self.b2):
                if b is None or np.shape(b) != (d_out,):
                    raise LayerContractError(f"GA attention vectors must have shape ({d_out},)")

    @property
    def in_dim(self) -> int | None:
        if self.kind in ("GC", "GA"):
            return self.W.shape[0]
        if self.kind == "GEC":
            return self.theta.shape[0]
        return self.inner[0].shape[0] if self.inner else None

    @property
    def out_dim(self) -> int | None:
        if self.kind in ("GC", "GA"):
            return self.W.shape[1]
        if self.kind == "GEC":
            return self.theta.shape[1]
        return self.inner[-1].shape[1] if self.inner else None


@dataclass
class LayerStack:
    layers: list[GnnLayer]
    readout: str = "sum"

    def __post_init__(self):
        if self.readout not in ("sum", "mean"):
            raise LayerContractError(f"readout must be 'sum' or 'mean', got {self.readout!r}")
        dim = None
        for i, layer in enumerate(self.layers):
            if dim is not None and layer.in_dim is not None and layer.in_dim != dim:
                raise LayerContractError(f"layer {i} expects {layer.in_dim} features, gets {dim}")
            dim = layer.out_dim if layer.out_dim is not None else dim


def _check_features(g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != g.node_count:
        raise LayerContractError(f"H has shape {H.shape}, expected ({g.node_count}, d)")
    if layer.in_dim is not None and H.shape[1] != layer.in_dim:
        raise LayerContractError(f"{layer.kind} expects {layer.in_dim} features, H has {H.shape[1]}")
    if not np.all(np.isfinite(H)):
        raise LayerContractError("H contains non-finite values")
    return H


def _gc_operator(g: DirectedMultigraph, binarize: bool) -> np.ndarray:
    A_hat = g.adjacency(binary=binarize) + np.eye(g.node_count)
    deg = A_hat.sum(axis=0)
    if np.any(deg <= 0):
        raise LayerContractError("GC needs positive column sums of A + I")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * A_hat.T * inv_sqrt[None, :]


def gc_forward(g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer) -> np.ndarray:
    if layer.kind != "GC":
        raise LayerContractError(f"gc_forward got a {layer.kind} layer")
    H = _check_features(g, H, layer)
    Z = _gc_operator(g, layer.binarize) @ H @ layer.W
    return ACTIVATIONS[layer.activation](Z)


def _gec_preactivation(g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer) -> np.ndarray:
    Z = H @ layer.theta
    for t in g.edge_types:
        if t not in layer.edge_weights:
            raise LayerContractError(f"GEC has no weight matrix for edge type {t}")
        Z += g.adjacency(etype=t).T @ H @ layer.edge_weights[t]
    return Z


def gec_forward(g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer) -> np.ndarray:
    if layer.kind != "GEC":
        raise LayerContractError(f"gec_forward got a {layer.kind} layer")
    H = _check_features(g, H, layer)
    return ACTIVATIONS[layer.activation](_gec_preactivation(g, H, layer))


def _inner_map(inner: Sequence[np.ndarray], X: np.ndarray) -> np.ndarray:
    for i, M in enumerate(inner):
        X = X @ M
        if i < len(inner) - 1:
            X = np.maximum(X, 0.0)
    return X


def gi_forward(g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer) -> np.ndarray:
    if layer.kind != "GI":
        raise LayerContractError(f"gi_forward got a {layer.kind} layer")
    H = _check_features(g, H, layer)
    A_hat = g.adjacency() + np.eye(g.node_count)
    agg = (1.0 + layer.eps) * H + A_hat.T @ H
    return ACTIVATIONS[layer.activation](_inner_map(layer.inner, agg))


def ga_forward(
    g: DirectedMultigraph,
    H: np.ndarray,
    layer: GnnLayer,
    diagnostics: list | None = None,
) -> np.ndarray:
    """Graph attention with a log-adjacency mask.

    Rows of nodes without in-edges have nothing to attend to; they produce a
    zero row and their indices are appended to ``diagnostics``.
    """
    if layer.kind != "GA":
        raise LayerContractError(f"ga_forward got a {layer.kind} layer")
    H = _check_features(g, H, layer)
    A = g.adjacency()
    if np.any(A < 0):
        raise LayerContractError("GA needs non-negative edge weights")
    HW = H @ layer.W
    s = HW @ layer.b1
    t = HW @ layer.b2
    # e[i, j] scores the edge j -> i
    e = ACTIVATIONS[layer.rho](s[:, None] + t[None, :])
    with np.errstate(divide="ignore"):
        e = e + np.log(A.T)
    finite = np.isfinite(e)
    live = finite.any(axis=1)
    alpha = np.zeros_like(e)
    if live.any():
        rows = e[live]
        rows = rows - np.max(np.where(np.isfinite(rows), rows, -np.inf), axis=1, keepdims=True)
        ex = np.where(np.isfinite(rows), np.exp(rows), 0.0)
        alpha[live] = ex / ex.sum(axis=1, keepdims=True)
    dead = np.flatnonzero(~live)
    if dead.size:
        log.debug("GA: %d node(s) without in-edges get a zero row", dead.size)
        if diagnostics is not None:
            diagnostics.extend(int(i) for i in dead)
    return ACTIVATIONS[layer.activation](alpha @ HW)


_FORWARD = {"GC": gc_forward, "GEC": gec_forward, "GI": gi_forward, "GA": ga_forward}


def layer_forward(g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer) -> np.ndarray:
    return _FORWARD[layer.kind](g, H, layer)


def base_forward(b: BaseGraph, H_B: np.ndarray, layer: GnnLayer) -> np.ndarray:
    """Run a layer on the base so that ``lift`` of the result equals the graph output.

    The base multigraph carries one parallel edge per received edge, so its
    weighted adjacency holds multiplicity-summed weights and every formula
    applies unchanged. For GC the column sums of ``A_B + I`` equal the
    degrees of the fiber members because the coloring is balanced.
    """
    if layer.kind == "GC" and layer.binarize:
        raise LayerCapabilityError(
            "binarized GC is not fiber-invariant on multigraphs; run it on the original graph"
        )
    H_B = np.asarray(H_B, dtype=float)
    if H_B.ndim != 2 or H_B.shape[0] != b.base.node_count:
        raise LayerContractError(f"H_B has shape {H_B.shape}, expected ({b.base.node_count}, d)")
    return layer_forward(b.base, H_B, layer)


def lift(b: BaseGraph, H_B: np.ndarray) -> np.ndarray:
    """Copy each fiber's row to all of its members."""
    H_B = np.asarray(H_B)
    if H_B.shape[0] != b.base.node_count:
        raise LayerContractError(f"H_B has {H_B.shape[0]} rows, base has {b.base.node_count} nodes")
    return H_B[np.asarray(b.fiber_map, dtype=int)]


def fiber_spread(H: np.ndarray, fibers: Coloring) -> np.ndarray:
    """Largest within-fiber row difference (max-norm), one entry per fiber."""
    out = np.zeros(fibers.class_count)
    for x, members in enumerate(fibers.classes()):
        rows = H[members]
        out[x] = float(np.max(rows.max(axis=0) - rows.min(axis=0))) if rows.size else 0.0
    return out


def restrict(b: BaseGraph, H: np.ndarray, atol: float = 0.0) -> np.ndarray:
    """Inverse of :func:`lift` for fiber-constant ``H``."""
    H = np.asarray(H, dtype=float)
    spread = fiber_spread(H, b.coloring)
    if np.any(spread > atol):
        x = int(np.argmax(spread))
        raise NotFiberConstantError(f"features differ by {spread[x]:.3g} inside fiber {x}")
    return H[[m[0] for m in b.fiber_members]]


def readout(H: np.ndarray, mode: str = "sum") -> np.ndarray:
    if mode == "sum":
        return np.asarray(H).sum(axis=0)
    if mode == "mean":
        return np.asarray(H).mean(axis=0)
    raise LayerContractError(f"readout must be 'sum' or 'mean', got {mode!r}")


def base_readout(b: BaseGraph, H_B: np.ndarray, mode: str = "sum") -> np.ndarray:
    """Graph-level readout computed on the base, weighting rows by fiber size."""
    sizes = np.asarray(b.fiber_sizes, dtype=float)
    total = sizes @ np.asarray(H_B)
    if mode == "sum":
        return total
    if mode == "mean":
        return total / sizes.sum()
    raise LayerContractError(f"readout must be 'sum' or 'mean', got {mode!r}")


def stack_forward(g: DirectedMultigraph, stack: LayerStack, H0: np.ndarray) -> list[np.ndarray]:
    """Activations ``[H0, H1, ..., HL]`` of a stack on a graph."""
    out = [np.asarray(H0, dtype=float)]
    for layer in stack.layers:
        out.append(layer_forward(g, out[-1], layer))
    return out


def base_stack_forward(b: BaseGraph, stack: LayerStack, H0_B: np.ndarray) -> list[np.ndarray]:
    out = [np.asarray(H0_B, dtype=float)]
    for layer in stack.layers:
        out.append(base_forward(b, out[-1], layer))
    return out


@dataclass
class SyncCheck:
    """Within-fiber row spread per layer (index 0 is the input)."""

    spreads: list[np.ndarray]
    tolerances: list[float]
    violations: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def max_spread(self) -> float:
        return max((float(s.max()) for s in self.spreads if s.size), default=0.0)


def check_synchronization(
    g: DirectedMultigraph,
    stack: LayerStack,
    H0: np.ndarray,
    fibers: Coloring,
    rtol: float = 1e-9,
) -> SyncCheck:
    """Run ``stack`` on ``g`` and check that fibers stay synchronized layer by layer."""
    H0 = np.asarray(H0, dtype=float)
    if np.any(fiber_spread(H0, fibers) > 0):
        raise NotFiberConstantError("H0 must be constant on every fiber")
    acts = stack_forward(g, stack, H0)
    spreads, tols, bad = [], [], []
    for k, H in enumerate(acts):
        spread = fiber_spread(H, fibers)
        tol = rtol * (1.0 + float(np.max(np.abs(H), initial=0.0)))
        spreads.append(spread)
        tols.append(tol)
        bad.extend((k, int(x)) for x in np.flatnonzero(spread > tol))
    return SyncCheck(spreads, tols, bad)


def relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """``max|a - b| / max|b|`` (absolute when ``b`` is all zero)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    diff = float(np.max(np.abs(a - b), initial=0.0))
    scale = float(np.max(np.abs(b), initial=0.0))
    return diff / scale if scale > 0 else diff


@dataclass
class EquivalenceReport:
    layer_deviation: list[float]
    readout_deviation: float

    @property
    def max_deviation(self) -> float:
        return max(self.layer_deviation + [self.readout_deviation])


def reduced_form_equivalence(
    g: DirectedMultigraph, b: BaseGraph, stack: LayerStack, H0_B: np.ndarray
) -> EquivalenceReport:
    """Compare the stack on ``g`` (from lifted inputs) with the stack on its base."""
    on_graph = stack_forward(g, stack, lift(b, H0_B))
    on_base = base_stack_forward(b, stack, H0_B)
    layer_dev = [relative_deviation(lift(b, HB), HG) for HB, HG in zip(on_base[1:], on_graph[1:])]
    ro_dev = relative_deviation(
        base_readout(b, on_base[-1], stack.readout), readout(on_graph[-1], stack.readout)
    )
    return EquivalenceReport(layer_dev, ro_dev)


def random_layer(
    kind: str,
    d_in: int,
    d_out: int,
    edge_types: Sequence[int],
    rng: np.random.Generator,
    activation: str = "relu",
) -> GnnLayer:
    """Layer with parameters drawn uniformly from ``[-1/sqrt(d_in), 1/sqrt(d_in)]``."""
    scale = 1.0 / np.sqrt(d_in)

    def mat(r, c):
        return rng.uniform(-scale, scale, size=(r, c))

    if kind == "GC":
        return GnnLayer("GC", W=mat(d_in, d_out), activation=activation)
    if kind == "GEC":
        table = {int(t): mat(d_in, d_out) for t in edge_types}
        return GnnLayer("GEC", theta=mat(d_in, d_out), edge_weights=table or {0: mat(d_in, d_out)},
                        activation=activation)
    if kind == "GI":
        hidden = max(d_in, d_out)
        return GnnLayer("GI", eps=float(rng.uniform(-1, 1)),
                        inner=(mat(d_in, hidden), mat(hidden, d_out)), activation=activation)
    if kind == "GA":
        return GnnLayer("GA", W=mat(d_in, d_out), b1=rng.uniform(-1, 1, d_out),
                        b2=rng.uniform(-1, 1, d_out), activation=activation)
    raise LayerContractError(f"unknown layer kind {kind!r}")


def random_stack(
    rng: np.random.Generator,
    d_in: int,
    edge_types: Sequence[int],
    depth: int = 4,
    width: int = 4,
    kinds: Sequence[str] = KINDS,
    readout_mode: str = "sum",
) -> LayerStack:
    layers = []
    d = d_in
    for _ in range(depth):
        kind = kinds[int(rng.integers(len(kinds)))]
        act = ("relu", "sigmoid", "identity")[int(rng.integers(3))]
        layers.append(random_layer(kind, d, width, edge_types, rng, act))
        d = width
    return LayerStack(layers, readout_mode)


# -- gradients (GC and GEC) ----------------------------------------------------


def gc_backward(
    g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer, grad_out: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of ``sum(grad_out * gc_forward(...))`` w.r.t. ``W`` and ``H``."""
    H = _check_features(g, H, layer)
    S = _gc_operator(g, layer.binarize)
    SH = S @ H
    Z = SH @ layer.W
    dZ = grad_out * _activation_grad(layer.activation, Z)
    return {"W": SH.T @ dZ, "H": S.T @ dZ @ layer.W.T}


def gec_backward(
    g: DirectedMultigraph, H: np.ndarray, layer: GnnLayer, grad_out: np.ndarray
) -> dict:
    """Gradients of ``sum(grad_out * gec_forward(...))``.

    Returns ``theta``, ``H`` and ``edge_weights`` (a dict keyed by edge type).
    """
    H = _check_features(g, H, layer)
    Z = _gec_preactivation(g, H, layer)
    dZ = grad_out * _activation_grad(layer.activation, Z)
    grads = {"theta": H.T @ dZ, "H": dZ @ layer.theta.T, "edge_weights": {}}
    for t in g.edge_types:
        At = g.adjacency(etype=t)
        Wt = layer.edge_weights[t]
        grads["edge_weights"][t] = (At.T @ H).T @ dZ
        grads["H"] = grads["H"] + At @ dZ @ Wt.T
    for t in layer.edge_weights:
        grads["edge_weights"].setdefault(t, np.zeros_like(layer.edge_weights[t]))
    return grads
