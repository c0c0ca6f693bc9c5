"""Rebuild data/mnist from the digits bundled in the npm ``mnist`` package.

The package (``npm pack mnist@1.1.0``) ships 10,000 MNIST digits as JSON
arrays of intensities in [0, 1] (exact multiples of 1/255 up to float
rounding). They are quantised back to uint8, shuffled with a fixed seed and
split 8,000 / 2,000 into IDX train / test files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python scripts/build_mnist_subset.py package/src/digits data/mnist
"""

import argparse
import json
from pathlib import Path

import numpy as np

from spikecost.datasets import write_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=2022)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"])
        raw = raw.reshape(-1, 28, 28)
        images.append(np.rint(raw * 255.0).astype(np.uint8))
        labels.append(np.full(len(raw), digit, dtype=np.uint8))
    x = np.concatenate(images)
    y = np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(x))
    x, y = x[order], y[order]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n_test = args.test
    write_idx(args.out_dir / "train-images-idx3-ubyte.gz", x[n_test:])
    write_idx(args.out_dir / "train-labels-idx1-ubyte.gz", y[n_test:])
    write_idx(args.out_dir / "t10k-images-idx3-ubyte.gz", x[:n_test])
    write_idx(args.out_dir / "t10k-labels-idx1-ubyte.gz", y[:n_test])
    print(f"wrote {len(x) - n_test} train / {n_test} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
