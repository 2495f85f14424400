"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Each test records a PASS/FAIL line (see ``conftest.record``) before asserting.
Criterion 2 needs MNIST training images in IDX format; it looks in
``$FIBRA_MNIST_DIR`` and then in ``data/mnist`` at the repository root
(``scripts/build_mnist_idx.py`` creates that directory).
"""

import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from fibra import example_path, gnn
from fibra.fibration import compression_factor, input_tree_partition, minimal_balanced_coloring, minimal_base
from fibra.generate import fiber_planted, random_digraph
from fibra.graph import build_graph
from fibra.io import load_graph, load_idx
from fibra.isotest import fibration_test, multigraph_isomorphic, wl_test
from fibra.mlp import FbgdConfig, MlpModel, fbgd_train, loss_and_gradients, train_sgd

import oracles
from conftest import record

REPO = Path(__file__).resolve().parents[1]


def mnist_dir() -> Path | None:
    for cand in (os.environ.get("FIBRA_MNIST_DIR"), REPO / "data" / "mnist"):
        if cand and (Path(cand) / "train-images-idx3-ubyte").exists():
            return Path(cand)
    return None


# 1 ----------------------------------------------------------------------------


def test_criterion_1_tricyclooctane():
    t0 = time.perf_counter()
    g = load_graph(example_path())
    b = minimal_base(g)
    cf = compression_factor(g, b)
    elapsed = time.perf_counter() - t0
    ok = b.base.node_count == 4 and cf == 0.2 and elapsed < 1.0
    record(1, ok, f"fibers={b.base.node_count} compression={cf:.3f} time={elapsed:.3f}s")
    assert ok


# 2 ----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_2_fbgd_mnist():
    root = mnist_dir()
    if root is None:
        record(2, False, "no MNIST IDX files found (set FIBRA_MNIST_DIR or run scripts/build_mnist_idx.py)")
        pytest.fail("MNIST training data not available")
    data = load_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte", limit=10_000)
    X, y = data.flat(), data.labels
    sizes = [784, 128, 64, 10]
    cfg = FbgdConfig(epsilon=5e-2, period_T=5, rng_seed=0)
    t0 = time.perf_counter()
    base = train_sgd(MlpModel.init(sizes, seed=0), X, y, 30, cfg)
    fb = fbgd_train(MlpModel.init(sizes, seed=0), X, y, 30, cfg)
    elapsed = time.perf_counter() - t0
    final = fb.model.layer_sizes
    ratios = [sizes[k] / final[k] for k in (1, 2)]
    acc_b, acc_f = base.trajectory[-1].accuracy, fb.trajectory[-1].accuracy
    gap = 100 * (acc_b - acc_f)
    silent = [f"{f:.2f}" for e, _, f in fb.zero_fractions if e == 30]
    ok = min(ratios) >= 2.0 and gap <= 3.0 and elapsed < 600
    record(2, ok, f"n={len(y)} hidden {sizes[1:3]} -> {final[1:3]} (x{ratios[0]:.2f}, x{ratios[1]:.2f}) "
                  f"acc fbgd={acc_f:.4f} sgd={acc_b:.4f} gap={gap:.2f}pt silent={silent} time={elapsed:.0f}s")
    assert min(ratios) >= 2.0, f"hidden layers compressed only x{min(ratios):.2f}"
    assert gap <= 3.0
    assert elapsed < 600


# 3 ----------------------------------------------------------------------------


def test_criterion_3_zero_epsilon_limit():
    root = mnist_dir()
    if root is not None:
        data = load_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte", limit=2000)
        X, y, sizes, source = data.flat(), data.labels, [784, 128, 64, 10], "mnist[:2000]"
    else:
        rng = np.random.default_rng(0)
        X, y, sizes, source = rng.uniform(size=(1000, 20)), rng.integers(10, size=1000), [20, 32, 16, 10], "synthetic"
    mismatches = 0
    for seed in range(3):
        cfg = FbgdConfig(epsilon=0.0, period_T=2, rng_seed=seed)
        init = MlpModel.init(sizes, seed=seed)
        fb, sgd = fbgd_train(init, X, y, 10, cfg), train_sgd(init, X, y, 10, cfg)
        same = all(np.array_equal(a, b) for a, b in zip(fb.model.weights, sgd.model.weights))
        same &= [(r.loss, r.accuracy, r.sizes) for r in fb.trajectory] == \
                [(r.loss, r.accuracy, r.sizes) for r in sgd.trajectory]
        mismatches += not same
    ok = mismatches == 0
    record(3, ok, f"{source}, 3 seeds x 10 epochs, bitwise mismatches={mismatches}")
    assert ok


# 4 ----------------------------------------------------------------------------


def _equivalence_graphs(count=200):
    rng = np.random.default_rng(4)
    for i in range(count):
        types = int(rng.integers(1, 4))
        if i % 4 == 3:
            n = int(rng.integers(2, 31))
            yield random_digraph(n, float(rng.uniform(0.05, 0.3)), seed=i, edge_types=types,
                                 self_loops=bool(i % 2))
        else:
            yield fiber_planted(int(rng.integers(1, 8)), 4, seed=i, edge_types=types)[0]


def test_criterion_4_reduced_form_equivalence():
    rng = np.random.default_rng(44)
    t0 = time.perf_counter()
    worst_layer = worst_readout = 0.0
    sizes = []
    for g in _equivalence_graphs():
        assert g.node_count <= 30 and len(g.edge_types) <= 3
        b = minimal_base(g)
        sizes.append((g.node_count, b.base.node_count))
        d_in = int(rng.integers(1, 5))
        stack = gnn.random_stack(rng, d_in, g.edge_types or (0,), depth=int(rng.integers(1, 6)),
                                 width=int(rng.integers(1, 6)), readout_mode=("sum", "mean")[int(rng.integers(2))])
        rep = gnn.reduced_form_equivalence(g, b, stack, rng.normal(size=(b.base.node_count, d_in)))
        worst_layer = max(worst_layer, max(rep.layer_deviation))
        worst_readout = max(worst_readout, rep.readout_deviation)
    elapsed = time.perf_counter() - t0
    compressed = sum(nb < n for n, nb in sizes)
    ok = worst_layer <= 1e-9 and worst_readout <= 1e-9 and elapsed < 60
    record(4, ok, f"200 graphs ({compressed} with non-trivial fibers) max layer dev={worst_layer:.2e} "
                  f"readout dev={worst_readout:.2e} time={elapsed:.1f}s")
    assert ok


# 5 ----------------------------------------------------------------------------


def _small_digraphs(count=500):
    rng = np.random.default_rng(5)
    for i in range(count):
        if i % 2:
            yield fiber_planted(int(rng.integers(1, 5)), 3, seed=i, edge_types=int(rng.integers(1, 3)),
                                density=float(rng.uniform(0.2, 0.6)))[0]
        else:
            yield random_digraph(int(rng.integers(1, 13)), float(rng.uniform(0.05, 0.35)), seed=i,
                                 edge_types=int(rng.integers(1, 3)), self_loops=bool(rng.integers(2)))


def test_criterion_5_coarsest_balanced_oracle():
    t0 = time.perf_counter()
    bad_oracle = bad_tree = nontrivial = 0
    for g in _small_digraphs():
        assert g.node_count <= 12
        c = minimal_balanced_coloring(g)
        nontrivial += c.class_count < g.node_count
        bad_oracle += c.partition() != oracles.coarsest_balanced_partition(g)
        bad_tree += not c.same_partition(input_tree_partition(g, depth=g.node_count))
    elapsed = time.perf_counter() - t0
    ok = bad_oracle == 0 and bad_tree == 0 and elapsed < 120
    record(5, ok, f"500 digraphs ({nontrivial} with non-trivial fibers) oracle mismatches={bad_oracle} "
                  f"input-tree mismatches={bad_tree} time={elapsed:.1f}s")
    assert ok


# 6 ----------------------------------------------------------------------------


def test_criterion_6_planted_recovery():
    failures = []
    for seed in range(100):
        g, planted = fiber_planted(2 + seed % 6, 1 + seed % 4, seed=seed, edge_types=1 + seed % 3)
        if not minimal_balanced_coloring(g).same_partition(planted):
            failures.append(seed)
    ok = not failures
    record(6, ok, f"100 seeds, failures={failures}")
    assert ok


# 7 ----------------------------------------------------------------------------


def test_criterion_7_test_soundness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    directed = [g for n in range(1, 5) for g in oracles.all_digraphs(n)]
    undirected = [g for n in range(1, 5) for g in oracles.all_digraphs(n, symmetric=True)]
    pairs = list(itertools.combinations_with_replacement(directed, 2))
    pairs += list(itertools.combinations_with_replacement(undirected, 2))
    pairs += [(g, g.relabel(list(rng.permutation(g.node_count)))) for g in directed + undirected]
    exhaustive = len(pairs)
    for i in range(1000):
        n1 = int(rng.integers(1, 9))
        undirected_pair = i % 2 == 0
        g1 = random_digraph(n1, float(rng.uniform(0.1, 0.5)), seed=2 * i, directed=not undirected_pair,
                            edge_types=1 + int(i % 3 == 1), self_loops=bool(i % 5 == 0))
        if i % 4 < 2:
            g2 = g1.relabel(list(rng.permutation(n1)))
        else:
            g2 = random_digraph(n1 if i % 8 < 6 else int(rng.integers(1, 9)), float(rng.uniform(0.1, 0.5)),
                                seed=2 * i + 1, directed=not undirected_pair,
                                edge_types=1 + int(i % 3 == 1), self_loops=bool(i % 5 == 0))
        pairs.append((g1, g2))
    unsound = dominance = negatives = 0
    for g1, g2 in pairs:
        fib, wl = fibration_test(g1, g2), wl_test(g1, g2)
        if fib.non_isomorphic or wl.non_isomorphic:
            negatives += 1
            if oracles.brute_isomorphic(g1, g2):
                unsound += 1
        if not g1.directed and not g2.directed and fib.non_isomorphic and not wl.non_isomorphic:
            dominance += 1
    elapsed = time.perf_counter() - t0
    ok = unsound == 0 and dominance == 0
    record(7, ok, f"{exhaustive} exhaustive + 1000 random pairs, {negatives} negative verdicts, "
                  f"unsound={unsound} undirected fib>wl={dominance} time={elapsed:.0f}s")
    assert ok


# 8 ----------------------------------------------------------------------------


def _gradient_instance(i, rng):
    """Largest relative error between analytic and central-difference gradients."""
    acts = ("relu", "sigmoid", "identity")
    kind = ("MLP", "GC", "GEC")[i % 3]
    if kind == "MLP":
        sizes = [int(s) for s in rng.integers(2, 7, size=int(rng.integers(2, 5)))]
        m = MlpModel.init(sizes, seed=i)
        X = rng.normal(size=(5, sizes[0]))
        y = rng.integers(sizes[-1], size=5)
        _, grads = loss_and_gradients(m, X, y)
        return kind, max(oracles.max_relative_error(
            grads[k], oracles.numeric_gradient(lambda: loss_and_gradients(m, X, y)[0], W))
            for k, W in enumerate(m.weights))
    n = int(rng.integers(2, 7))
    g = random_digraph(n, 0.4, seed=i, edge_types=2, self_loops=True)
    d_in, d_out = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    layer = gnn.random_layer(kind, d_in, d_out, (0, 1), rng, activation=acts[i % 3])
    H = rng.normal(size=(n, d_in))
    G = rng.normal(size=(n, d_out))
    fwd = gnn.gc_forward if kind == "GC" else gnn.gec_forward
    back = gnn.gc_backward if kind == "GC" else gnn.gec_backward

    def f():
        return float(np.sum(G * fwd(g, H, layer)))

    grads = back(g, H, layer, G)
    params = {"W": layer.W} if kind == "GC" else {"theta": layer.theta}
    errs = [oracles.max_relative_error(grads["H"], oracles.numeric_gradient(f, H))]
    errs += [oracles.max_relative_error(grads[k], oracles.numeric_gradient(f, v)) for k, v in params.items()]
    if kind == "GEC":
        errs += [oracles.max_relative_error(grads["edge_weights"][t], oracles.numeric_gradient(f, Wt))
                 for t, Wt in layer.edge_weights.items()]
    return kind, max(errs)


def test_criterion_8_gradient_correctness():
    rng = np.random.default_rng(8)
    worst = {}
    for i in range(50):
        kind, err = _gradient_instance(i, rng)
        worst[kind] = max(worst.get(kind, 0.0), err)
    ok = max(worst.values()) <= 1e-5
    record(8, ok, "50 instances, max relative error " + " ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


# 9 ----------------------------------------------------------------------------


def test_criterion_9_base_idempotence():
    rng = np.random.default_rng(9)
    failures = shrunk = 0
    for i in range(500):
        if i % 2:
            g = fiber_planted(int(rng.integers(1, 9)), 4, seed=i, edge_types=int(rng.integers(1, 4)))[0]
        else:
            g = random_digraph(int(rng.integers(1, 25)), float(rng.uniform(0.05, 0.3)), seed=i,
                               edge_types=int(rng.integers(1, 4)), self_loops=bool(i % 4))
        if i % 5 == 0:
            labels = [("a", "b")[int(x)] for x in rng.integers(2, size=g.node_count)]
            g = build_graph(g.node_count, g.edges, labels=labels)
        b = minimal_base(g).base
        shrunk += b.node_count < g.node_count
        failures += not multigraph_isomorphic(minimal_base(b).base, b)
    ok = failures == 0
    record(9, ok, f"500 graphs ({shrunk} with non-trivial fibers), non-isomorphic re-bases={failures}")
    assert ok
