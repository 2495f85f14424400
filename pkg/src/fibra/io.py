"""File formats: graph documents, edge lists, IDX images and MLP checkpoints."""

from __future__ import annotations

import gzip
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fibration import BaseGraph, Coloring
from .graph import DirectedMultigraph, Edge, GraphValidationError, build_graph
from .mlp import MlpModel

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CHECKPOINT_FORMAT = "fibra-mlp-checkpoint"
CHECKPOINT_VERSION = 1

_DOC_KEYS = {"directed", "nodes", "edges", "format", "version", "name"}
_NODE_KEYS = {"id", "label", "features"}
_EDGE_KEYS = {"src", "dst", "type", "weight"}


class GraphFormatError(ValueError):
    """A graph file could not be parsed. ``line``/``offset`` locate the problem."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class IdxFormatError(ValueError):
    pass


@dataclass
class LoadedGraph:
    graph: DirectedMultigraph
    id_map: dict[int, int]
    """Original node id -> dense id. Identity when ids were already dense."""


def _open_text(path: Path) -> str:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw.decode("utf-8")


def graph_from_document(doc: dict, strict: bool = True) -> LoadedGraph:
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    if strict and set(doc) - _DOC_KEYS:
        raise GraphFormatError(f"unknown keys {sorted(set(doc) - _DOC_KEYS)}")
    directed = bool(doc.get("directed", True))
    nodes = doc.get("nodes")
    edges = doc.get("edges", [])
    if nodes is None:
        ids = sorted({int(e[k]) for e in edges for k in ("src", "dst")})
        nodes = [{"id": i} for i in ids]
    id_map: dict[int, int] = {}
    labels, features = [], []
    for i, node in enumerate(nodes):
        if strict and set(node) - _NODE_KEYS:
            raise GraphFormatError(f"node {i}: unknown keys {sorted(set(node) - _NODE_KEYS)}")
        nid = int(node["id"])
        if nid in id_map:
            raise GraphFormatError(f"node {i}: duplicate id {nid}")
        id_map[nid] = len(id_map)
        labels.append(node.get("label"))
        features.append(node.get("features"))
    records = []
    for i, e in enumerate(edges):
        if strict and set(e) - _EDGE_KEYS:
            raise GraphFormatError(f"edge {i}: unknown keys {sorted(set(e) - _EDGE_KEYS)}")
        try:
            src, dst = id_map[int(e["src"])], id_map[int(e["dst"])]
        except KeyError as exc:
            raise GraphFormatError(f"edge {i}: unknown node or missing field {exc}") from None
        records.append(Edge(src, dst, int(e.get("type", 0)), float(e.get("weight", 1.0))))
    if any(f is not None for f in features):
        if any(f is None for f in features):
            raise GraphFormatError("either all nodes or none carry features")
        feats = np.asarray(features, dtype=float)
    else:
        feats = None
    if list(id_map) != list(range(len(id_map))):
        log.info("node ids densified: %d ids remapped", sum(k != v for k, v in id_map.items()))
    g = build_graph(
        len(id_map),
        records,
        labels=labels if any(lab is not None for lab in labels) else None,
        features=feats,
        directed=directed,
    )
    return LoadedGraph(g, id_map)


def parse_edge_list(text: str, directed: bool = True) -> DirectedMultigraph:
    """``src dst [type] [weight]`` per line; ``#`` starts a comment."""
    records = []
    n = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if not 2 <= len(parts) <= 4:
            raise GraphFormatError(f"expected 'src dst [type] [weight]', got {body!r}", line=lineno)
        try:
            src, dst = int(parts[0]), int(parts[1])
            etype = int(parts[2]) if len(parts) > 2 else 0
            weight = float(parts[3]) if len(parts) > 3 else 1.0
        except ValueError:
            raise GraphFormatError(f"non-numeric field in {body!r}", line=lineno) from None
        if src < 0 or dst < 0:
            raise GraphFormatError("node ids must be non-negative", line=lineno)
        records.append(Edge(src, dst, etype, weight))
        n = max(n, src + 1, dst + 1)
    return build_graph(n, records, directed=directed)


def load_graph_document(path, strict: bool = True) -> LoadedGraph:
    path = Path(path)
    text = _open_text(path)
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"invalid JSON: {exc.msg}", line=exc.lineno, offset=exc.pos) from None
        try:
            return graph_from_document(doc, strict)
        except GraphValidationError as exc:
            raise GraphFormatError(str(exc)) from None
    g = parse_edge_list(text)
    return LoadedGraph(g, {i: i for i in range(g.node_count)})


def load_graph(path, strict: bool = True) -> DirectedMultigraph:
    """Read a graph from a JSON document or a whitespace edge list (optionally gzipped)."""
    return load_graph_document(path, strict).graph


def graph_to_document(g: DirectedMultigraph) -> dict:
    """Serialize ``g``. Undirected graphs list each edge once."""
    nodes = []
    for u in range(g.node_count):
        node: dict = {"id": u}
        if g.labels is not None and g.labels[u] is not None:
            node["label"] = g.labels[u]
        if g.features is not None:
            node["features"] = [float(v) for v in g.features[u]]
        nodes.append(node)
    edges = []
    if g.directed:
        kept = g.edges
    else:
        kept = [e for e in g.edges if e.src <= e.dst]
        # each non-loop edge was stored twice; keep one copy per stored pair
        kept = sorted(kept)
    for e in kept:
        rec: dict = {"src": e.src, "dst": e.dst}
        if e.type != 0:
            rec["type"] = e.type
        if e.weight != 1.0:
            rec["weight"] = e.weight
        edges.append(rec)
    return {"directed": g.directed, "nodes": nodes, "edges": edges}


def save_graph(g: DirectedMultigraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_document(g), indent=1) + "\n")


def base_to_document(g: DirectedMultigraph, b: BaseGraph) -> dict:
    doc = graph_to_document(b.base)
    doc["fiber_map"] = list(b.fiber_map)
    doc["fiber_members"] = [list(m) for m in b.fiber_members]
    doc["compression_factor"] = b.base.node_count / g.node_count
    return doc


def coloring_to_document(c: Coloring) -> dict:
    return {"class_count": c.class_count, "assignment": list(c.assignment),
            "classes": c.classes()}


@dataclass
class IdxDataset:
    images: np.ndarray
    """``(N, 28, 28)`` uint8 pixels."""
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def flat(self) -> np.ndarray:
        """Pixels scaled to ``[0, 1]`` and flattened to ``(N, 784)``."""
        return self.images.reshape(len(self.images), -1).astype(float) / 255.0


def _read_idx(path: Path, magic: int, limit: int | None) -> np.ndarray:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise IdxFormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = found & 0xFF
    header = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = dims[0]
    item = int(np.prod(dims[1:])) if ndim > 1 else 1
    take = count if limit is None else min(count, limit)
    needed = header + take * item
    if len(raw) < needed:
        raise IdxFormatError(f"{path}: header promises {count} items but the file is truncated")
    data = np.frombuffer(raw, dtype=np.uint8, count=take * item, offset=header)
    return data.reshape((take,) + tuple(dims[1:])), count


def load_idx(images_path, labels_path, limit: int | None = None) -> IdxDataset:
    """Read an MNIST-style image/label IDX pair (plain or gzipped)."""
    images, n_img = _read_idx(Path(images_path), IDX_IMAGES_MAGIC, limit)
    labels, n_lab = _read_idx(Path(labels_path), IDX_LABELS_MAGIC, limit)
    if n_img != n_lab:
        raise IdxFormatError(f"{n_img} images but {n_lab} labels")
    if limit is not None and limit > n_img:
        log.warning("limit %d exceeds the %d samples in %s; using all", limit, n_img, images_path)
    if labels.size and labels.max() > 9:
        raise IdxFormatError(f"label {int(labels.max())} outside [0, 9]")
    return IdxDataset(images.copy(), labels.astype(np.int64))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">I", IDX_IMAGES_MAGIC))
        fh.write(struct.pack(">3I", *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def save_checkpoint(m: MlpModel, path, seed: int | None = None, epoch: int | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": m.layer_sizes,
        "seed": seed,
        "epoch": epoch,
        "weights": [w.tolist() for w in m.weights],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> tuple[MlpModel, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} MLP checkpoint")
    m = MlpModel([np.asarray(w, dtype=float) for w in doc["weights"]])
    if m.layer_sizes != doc["layer_sizes"]:
        raise ValueError(f"{path}: layer_sizes disagree with the stored weights")
    return m, {"seed": doc.get("seed"), "epoch": doc.get("epoch")}
