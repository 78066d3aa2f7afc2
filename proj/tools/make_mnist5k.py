#!/usr/bin/env python3
"""Convert the 5000-digit MNIST sample shipped with mlxtend into IDX files.

The sample holds 500 digits per class. The first 400 of each class (in file
order) become the train partition, the remaining 100 the test partition.

    pip download --no-deps -d /tmp/wheels mlxtend
    python3 tools/make_mnist5k.py /tmp/wheels/mlxtend-*.whl data/mnist5k
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def write_idx(prefix: Path, images: np.ndarray, labels: np.ndarray) -> None:
    n = images.shape[0]
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    pixels, labels = table[:, :-1].astype(np.uint8), table[:, -1].astype(int)
    train, test = [], []
    for k in range(10):
        idx = np.flatnonzero(labels == k)
        train.extend(idx[:400])
        test.extend(idx[400:])
    train, test = np.sort(train), np.sort(test)
    write_idx(out / "train", pixels[train], labels[train])
    write_idx(out / "test", pixels[test], labels[test])


if __name__ == "__main__":
    main()
