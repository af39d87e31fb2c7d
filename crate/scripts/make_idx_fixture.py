"""Writes a 2-image, 3x2 IDX pair used by the data-io integration tests.

Follows the published IDX layout directly with struct.pack so the Rust
reader is checked against bytes it did not produce.
"""
import pathlib
import struct

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures"

IMAGES = [
    [0, 255, 128, 1, 64, 200],
    [17, 34, 51, 68, 85, 102],
]
LABELS = [7, 2]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rows, cols = 3, 2
    with open(OUT / "pair-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(IMAGES), rows, cols))
        for img in IMAGES:
            f.write(bytes(img))
    with open(OUT / "pair-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(LABELS)))
        f.write(bytes(LABELS))


if __name__ == "__main__":
    main()
