#!/usr/bin/env python3
"""Build data/mnist-10k.tar.gz from the digit JSON files of the `mnist` npm package.

The package ships 10,000 MNIST digits as arrays of 784 floats in [0, 1].
They are shuffled with a fixed seed and written as IDX files:
8000 train and 2000 t10k.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist-10k.tar.gz
"""
import io
import json
import random
import struct
import sys
import tarfile
from pathlib import Path


def idx_images(images):
    head = struct.pack(">IIII", 0x803, len(images), 28, 28)
    return head + bytes(p for img in images for p in img)


def idx_labels(labels):
    return struct.pack(">II", 0x801, len(labels)) + bytes(labels)


def main(src, out, n_train=8000, seed=20240607):
    samples = []
    for digit in range(10):
        data = json.loads((Path(src) / f"{digit}.json").read_text())["data"]
        for i in range(0, len(data), 784):
            pix = [min(255, max(0, round(v * 255))) for v in data[i:i + 784]]
            samples.append((pix, digit))
    random.Random(seed).shuffle(samples)
    parts = {"train": samples[:n_train], "t10k": samples[n_train:]}

    with tarfile.open(out, "w:gz") as tar:
        for name, rows in parts.items():
            files = {
                f"mnist/{name}-images-idx3-ubyte": idx_images([r[0] for r in rows]),
                f"mnist/{name}-labels-idx1-ubyte": idx_labels([r[1] for r in rows]),
            }
            for path, blob in files.items():
                info = tarfile.TarInfo(path)
                info.size = len(blob)
                info.mtime = 0
                tar.addfile(info, io.BytesIO(blob))
    print(f"{len(samples)} digits -> {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
