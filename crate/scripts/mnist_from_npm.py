#!/usr/bin/env python3
"""Rebuild data/mnist/*.gz from the digits bundled in the `mnist` npm package.

The npm package (MIT, github.com/cazala/mnist) ships 10,010 MNIST digits as
JSON arrays of intensities rounded to three decimals; multiplying by 255 and
rounding recovers the original bytes exactly.  The last 100 digits of each
class become the test split, the rest the training split.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import struct
import sys
from pathlib import Path

TEST_PER_CLASS = 100


def write_gz(path, payload):
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(payload)


def idx_images(images):
    header = struct.pack(">IIII", 0x00000803, len(images), 28, 28)
    return header + b"".join(bytes(img) for img in images)


def idx_labels(labels):
    return struct.pack(">II", 0x00000801, len(labels)) + bytes(labels)


def main(src, dst):
    src, dst = Path(src), Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": ([], []), "t10k": ([], [])}
    per_class = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        imgs = [
            [int(round(v * 255)) for v in flat[i : i + 784]]
            for i in range(0, len(flat), 784)
        ]
        per_class.append(imgs)
    # interleave classes so that a prefix of the file is class-balanced
    for split, lo, hi in (("train", 0, -TEST_PER_CLASS), ("t10k", -TEST_PER_CLASS, None)):
        chunks = [imgs[lo:hi] for imgs in per_class]
        longest = max(len(c) for c in chunks)
        for i in range(longest):
            for digit, chunk in enumerate(chunks):
                if i < len(chunk):
                    splits[split][0].append(chunk[i])
                    splits[split][1].append(digit)
    for split, (images, labels) in splits.items():
        write_gz(dst / f"{split}-images-idx3-ubyte.gz", idx_images(images))
        write_gz(dst / f"{split}-labels-idx1-ubyte.gz", idx_labels(labels))
        print(split, len(images))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
