"""Convert the 10k MNIST digits bundled in the npm ``mnist`` package to IDX files.

The package ships each digit class as ``src/digits/<k>.json`` holding a flat
list of 784-pixel rows scaled to [0, 1]. Pixels are mapped back to bytes with
``round(v * 255)`` and samples are shuffled with a fixed seed so that any
prefix is class-balanced.

    npm pack mnist            # produces mnist-1.1.0.tgz
    python scripts/build_mnist_idx.py mnist-1.1.0.tgz data/mnist
"""

from __future__ import annotations

import argparse
import json
import tarfile
from pathlib import Path

import numpy as np

from fibra.io import write_idx


def read_digits(tarball: Path) -> tuple[np.ndarray, np.ndarray]:
    images, labels = [], []
    with tarfile.open(tarball) as tf:
        for k in range(10):
            doc = json.load(tf.extractfile(f"package/src/digits/{k}.json"))
            rows = np.asarray(doc["data"], dtype=float).reshape(-1, 784)
            images.append(np.rint(rows * 255).astype(np.uint8))
            labels.append(np.full(len(rows), k, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("tarball")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    X, y = read_digits(Path(args.tarball))
    order = np.random.default_rng(args.seed).permutation(len(y))
    X, y = X[order], y[order]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(X.reshape(-1, 28, 28), y, out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte")
    print(f"wrote {len(y)} samples to {out}")


if __name__ == "__main__":
    main()
