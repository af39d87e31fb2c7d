#!/usr/bin/env python3
"""Build IDX-format MNIST files from the digits bundled in the npm `mnist` package.

The npm package (https://github.com/cazala/mnist) ships 10,000 MNIST digits as
JSON arrays of pixel intensities divided by 255 and rounded to three decimals.
Rounding back to the nearest byte recovers the original 8-bit pixels.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

Writes train-{images-idx3,labels-idx1}-ubyte (9,000 examples) and
t10k-{images-idx3,labels-idx1}-ubyte (1,000 examples) after a seeded shuffle.
"""
import json
import random
import struct
import sys
from pathlib import Path

ROWS = COLS = 28
TEST_COUNT = 1000
SEED = 20190611


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), ROWS, COLS))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    examples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % (ROWS * COLS) == 0
        for k in range(len(flat) // (ROWS * COLS)):
            px = flat[k * ROWS * COLS:(k + 1) * ROWS * COLS]
            img = [min(255, max(0, round(v * 255))) for v in px]
            examples.append((img, digit))
    random.Random(SEED).shuffle(examples)
    test, train = examples[:TEST_COUNT], examples[TEST_COUNT:]
    write_images(dst / "train-images-idx3-ubyte", [e[0] for e in train])
    write_labels(dst / "train-labels-idx1-ubyte", [e[1] for e in train])
    write_images(dst / "t10k-images-idx3-ubyte", [e[0] for e in test])
    write_labels(dst / "t10k-labels-idx1-ubyte", [e[1] for e in test])
    print(f"train={len(train)} test={len(test)} -> {dst}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
