"""Bias-free MLPs, activity synchronization and Fibration-Gradient Descent.

Layers are indexed from 0 (input) to ``M-1`` (output). The input layer
applies ReLU to the raw input, hidden layers are ReLU, and the output layer
is linear with a softmax cross-entropy loss.

Fibration-Gradient Descent trains with plain SGD and, every ``period_T``
epochs, merges hidden nodes whose activities are synchronized over the
training set. A merged node takes the mean of its members' incoming weights
and the sum of their outgoing weights, so downstream inputs are unchanged
whenever the members were exactly synchronized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class MlpContractError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class MlpModel:
    """``weights[k]`` has shape ``(d_k, d_{k+1})`` and connects layer k to k+1."""

    weights: list[np.ndarray]

    def __post_init__(self):
        if not self.weights:
            raise MlpContractError("an MLP needs at least one weight matrix")
        for k, (a, b) in enumerate(zip(self.weights, self.weights[1:])):
            if a.shape[1] != b.shape[0]:
                raise MlpContractError(f"weights {k} and {k + 1} do not compose: {a.shape}, {b.shape}")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], seed: int | np.random.Generator | None = None) -> "MlpModel":
        """Uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise MlpContractError(f"invalid layer sizes {layer_sizes}")
        rng = np.random.default_rng(seed)
        ws = []
        for d_in, d_out in zip(layer_sizes, layer_sizes[1:]):
            bound = 1.0 / np.sqrt(d_in)
            ws.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        return cls(ws)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def hidden_layers(self) -> range:
        return range(1, len(self.weights))

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights])


def _relu(x):
    return np.maximum(x, 0.0)


def _forward(m: MlpModel, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations and activities for a batch ``X`` of shape ``(B, d_1)``."""
    inputs = [X]
    acts = [_relu(X)]
    last = len(m.weights) - 1
    for k, W in enumerate(m.weights):
        I = acts[-1] @ W
        inputs.append(I)
        acts.append(I if k == last else _relu(I))
    return inputs, acts


def mlp_forward(m: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    """Activities of every layer; the last entry holds the output logits.

    Accepts a single input vector or a batch (rows are samples).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != m.layer_sizes[0]:
        raise MlpContractError(f"input has shape {x.shape}, model expects {m.layer_sizes[0]} features")
    _, acts = _forward(m, X)
    return [a[0] for a in acts] if single else acts


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_gradients(m: MlpModel, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient for every weight matrix."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    d_out = m.layer_sizes[-1]
    if y.ndim != 1 or len(y) != len(X):
        raise MlpContractError("labels must be a vector with one entry per sample")
    if len(y) and (y.min() < 0 or y.max() >= d_out):
        raise MlpContractError(f"labels must lie in [0, {d_out})")
    inputs, acts = _forward(m, X)
    logp = _log_softmax(acts[-1])
    B = len(X)
    loss = float(-logp[np.arange(B), y].mean())
    delta = np.exp(logp)
    delta[np.arange(B), y] -= 1.0
    delta /= B
    grads: list[np.ndarray] = [None] * len(m.weights)
    for k in range(len(m.weights) - 1, -1, -1):
        grads[k] = acts[k].T @ delta
        if k > 0:
            delta = (delta @ m.weights[k].T) * (inputs[k] > 0)
    return loss, grads


def sgd_step(m: MlpModel, X: np.ndarray, y: np.ndarray, lr: float) -> tuple[MlpModel, float]:
    """One SGD step on the mean batch cross-entropy."""
    loss, grads = loss_and_gradients(m, X, y)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
        raise TrainingError(
            f"non-finite loss/gradient on a batch of {len(X)} samples "
            f"(loss={loss}, max |w|={max(float(np.abs(w).max()) for w in m.weights):.3g})"
        )
    return MlpModel([w - lr * g for w, g in zip(m.weights, grads)]), loss


def accuracy(m: MlpModel, X: np.ndarray, y: np.ndarray, chunk: int = 4096) -> float:
    """Fraction of samples whose arg-max logit equals the label (ties -> lowest class)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) == 0:
        return float("nan")
    hits = 0
    for start in range(0, len(X), chunk):
        logits = _forward(m, X[start:start + chunk])[1][-1]
        hits += int(np.sum(np.argmax(logits, axis=1) == y[start:start + chunk]))
    return hits / len(X)


def layer_activity(m: MlpModel, X: np.ndarray, layer: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    h = _relu(X)
    for k in range(layer):
        h = h @ m.weights[k]
        if k < len(m.weights) - 1:
            h = _relu(h)
    return h


@dataclass
class SyncReport:
    """Pairwise activity distances of one layer over a sample set.

    ``Lambda[i, j]`` is the mean of ``|h_i - h_j|``; ``xi[i, j]`` is the
    absolute mean of ``h_i - h_j``. ``order`` lists nodes by mean activity.
    """

    layer: int
    Lambda: np.ndarray
    xi: np.ndarray
    mean_activity: np.ndarray
    sample_set_id: str = "S"

    @property
    def order(self) -> np.ndarray:
        return np.argsort(self.mean_activity, kind="stable")


def sync_matrices(
    m: MlpModel, S: np.ndarray, layer: int, sample_set_id: str = "S", chunk: int = 256
) -> SyncReport:
    if layer not in m.hidden_layers:
        raise MlpContractError(f"layer {layer} is not hidden (hidden layers: {list(m.hidden_layers)})")
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[None, :]
    if len(S) == 0:
        raise MlpContractError("sample set S is empty")
    d = m.layer_sizes[layer]
    lam = np.zeros((d, d))
    total = np.zeros(d)
    for start in range(0, len(S), chunk):
        H = layer_activity(m, S[start:start + chunk], layer)
        lam += np.abs(H[:, :, None] - H[:, None, :]).sum(axis=0)
        total += H.sum(axis=0)
    lam /= len(S)
    mean = total / len(S)
    xi = np.abs(mean[:, None] - mean[None, :])
    return SyncReport(layer, lam, xi, mean, sample_set_id)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins so the result does not depend on call order
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class ClusterPartition:
    """Clusters of one hidden layer, numbered by their smallest member."""

    layer: int
    assignment: np.ndarray
    mean_activity: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def cluster_count(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.cluster_count)

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == c) for c in range(self.cluster_count)]

    @property
    def trivial(self) -> bool:
        return self.cluster_count == self.assignment.size


def detect_clusters(report: SyncReport, epsilon: float, criterion: str = "lambda") -> ClusterPartition:
    """Single-linkage clusters of node pairs closer than ``epsilon``.

    ``criterion`` picks the distance: ``"lambda"`` (mean absolute distance)
    or ``"xi"`` (absolute mean distance).
    """
    if epsilon < 0:
        raise MlpContractError("epsilon must be non-negative")
    D = {"lambda": report.Lambda, "xi": report.xi}.get(criterion)
    if D is None:
        raise MlpContractError(f"unknown criterion {criterion!r}")
    n = D.shape[0]
    uf = UnionFind(n)
    for i, j in np.argwhere(np.triu(D < epsilon, k=1)):
        uf.union(int(i), int(j))
    roots = [uf.find(i) for i in range(n)]
    ids: dict[int, int] = {}
    assignment = np.array([ids.setdefault(r, len(ids)) for r in roots], dtype=int)
    sizes = np.bincount(assignment, minlength=len(ids))
    cmean = np.bincount(assignment, weights=report.mean_activity, minlength=len(ids)) / np.maximum(sizes, 1)
    return ClusterPartition(report.layer, assignment, cmean)


def collapse(m: MlpModel, layer: int, p: ClusterPartition) -> MlpModel:
    """Merge each cluster of a hidden layer into one node.

    Incoming weights are averaged over the members, outgoing weights summed.
    """
    if layer not in m.hidden_layers:
        raise MlpContractError(f"cannot collapse layer {layer}: only hidden layers {list(m.hidden_layers)}")
    if p.assignment.size != m.layer_sizes[layer]:
        raise MlpContractError(
            f"partition covers {p.assignment.size} nodes, layer {layer} has {m.layer_sizes[layer]}"
        )
    if p.trivial:
        return m.copy()
    W_in, W_out = m.weights[layer - 1], m.weights[layer]
    groups = p.members()
    new_in = np.stack([W_in[:, g].mean(axis=1) for g in groups], axis=1)
    new_out = np.stack([W_out[g, :].sum(axis=0) for g in groups], axis=0)
    ws = [w.copy() for w in m.weights]
    ws[layer - 1], ws[layer] = new_in, new_out
    return MlpModel(ws)


def zero_activity_fraction(report: SyncReport) -> float:
    """Share of the layer's nodes that stay exactly silent on every sample."""
    return float(np.mean(report.mean_activity == 0.0))


@dataclass
class FbgdConfig:
    epsilon: float = 5e-2
    period_T: int = 5
    learning_rate: float = 0.1
    batch_size: int = 32
    rng_seed: int = 0
    criterion: str = "lambda"

    def __post_init__(self):
        if self.epsilon < 0:
            raise MlpContractError("epsilon must be >= 0")
        if self.period_T < 1:
            raise MlpContractError("period_T must be >= 1")
        if self.batch_size < 1 or self.learning_rate < 0:
            raise MlpContractError("batch_size must be >= 1 and learning_rate >= 0")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    sizes: list[int]


@dataclass
class TrainResult:
    model: MlpModel
    trajectory: list[EpochRecord]
    diagnostics: list[str] = field(default_factory=list)
    zero_fractions: list[tuple[int, int, float]] = field(default_factory=list)


def _epoch(m: MlpModel, X, y, cfg: FbgdConfig, rng: np.random.Generator) -> tuple[MlpModel, float]:
    order = rng.permutation(len(X))
    losses = []
    for start in range(0, len(X), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        m, loss = sgd_step(m, X[idx], y[idx], cfg.learning_rate)
        losses.append(loss)
    return m, float(np.mean(losses))


def train_sgd(
    m: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    cfg: FbgdConfig,
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainResult:
    """Plain mini-batch SGD with the same batch order as :func:`fbgd_train`."""
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    ex, ey = eval_set if eval_set is not None else (X, y)
    rng = np.random.default_rng(cfg.rng_seed)
    traj = []
    for epoch in range(1, epochs + 1):
        m, loss = _epoch(m, X, y, cfg, rng)
        traj.append(EpochRecord(epoch, loss, accuracy(m, ex, ey), m.layer_sizes[1:-1]))
    return TrainResult(m, traj)


def fbgd_train(
    m: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    cfg: FbgdConfig,
    eval_set: tuple[np.ndarray, np.ndarray] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Fibration-Gradient Descent.

    After every ``period_T`` training epochs each hidden layer (shallowest
    first) is scanned for synchronized nodes over the training set and its
    clusters are collapsed. The final hidden layer is never shrunk below the
    output width; when that would happen the layer is frozen at its current
    size and a saturation diagnostic is recorded.
    """
    X, y = np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    if len(X) != len(y) or len(X) == 0:
        raise MlpContractError("dataset must be non-empty with one label per sample")
    ex, ey = eval_set if eval_set is not None else (X, y)
    rng = np.random.default_rng(cfg.rng_seed)
    result = TrainResult(m, [])
    saturated: set[int] = set()
    last_hidden = len(m.weights) - 1
    for epoch in range(1, epochs + 1):
        m, loss = _epoch(m, X, y, cfg, rng)
        if epoch % cfg.period_T == 0:
            for layer in m.hidden_layers:
                if layer in saturated:
                    continue
                report = sync_matrices(m, X, layer, sample_set_id="train")
                frac = zero_activity_fraction(report)
                result.zero_fractions.append((epoch, layer, frac))
                log.info("epoch %d layer %d: %.1f%% silent nodes", epoch, layer, 100 * frac)
                part = detect_clusters(report, cfg.epsilon, cfg.criterion)
                if part.trivial:
                    continue
                if layer == last_hidden and part.cluster_count < m.layer_sizes[-1]:
                    saturated.add(layer)
                    msg = (f"epoch {epoch}: layer {layer} would shrink to {part.cluster_count} "
                           f"< {m.layer_sizes[-1]} output nodes; collapsing stopped for this layer")
                    result.diagnostics.append(msg)
                    log.warning(msg)
                    continue
                m = collapse(m, layer, part)
        rec = EpochRecord(epoch, loss, accuracy(m, ex, ey), m.layer_sizes[1:-1])
        result.trajectory.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    result.model = m
    return result
