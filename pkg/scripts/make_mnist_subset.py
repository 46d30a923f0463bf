#!/usr/bin/env python3
"""Write the 5000-digit MNIST sample bundled with mlxtend as IDX files.

The sample holds 500 images per class.  A seeded stratified split keeps
400 per class for training and 100 for testing, then shuffles each split.

    pip install --no-deps mlxtend
    python scripts/make_mnist_subset.py data/mnist
"""

import argparse
import gzip
from pathlib import Path

import numpy as np

from axmul.nn.idx import TEST_IMAGES, TEST_LABELS, TRAIN_IMAGES, TRAIN_LABELS, write_idx_images, write_idx_labels


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--csv", type=Path, help="path to mnist_5k.csv.gz (default: the installed mlxtend copy)")
    parser.add_argument("--test-per-class", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    csv = args.csv
    if csv is None:
        import mlxtend.data.mnist as m
        csv = Path(m.DATA_PATH)
    table = np.loadtxt(gzip.open(csv, "rt"), delimiter=",", dtype=np.int64)
    pixels = table[:, :784].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, 784].astype(np.uint8)

    rng = np.random.default_rng(args.seed)
    train, test = [], []
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(labels == digit))
        test.extend(idx[:args.test_per_class])
        train.extend(idx[args.test_per_class:])
    train = rng.permutation(train)
    test = rng.permutation(test)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx_images(pixels[train], args.out_dir / (TRAIN_IMAGES + ".gz"))
    write_idx_labels(labels[train], args.out_dir / (TRAIN_LABELS + ".gz"))
    write_idx_images(pixels[test], args.out_dir / (TEST_IMAGES + ".gz"))
    write_idx_labels(labels[test], args.out_dir / (TEST_LABELS + ".gz"))
    print(f"wrote {len(train)} training and {len(test)} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
