#!/usr/bin/env python3
# Copyright (c) 2026, The palora-cpp Authors
# SPDX-License-Identifier: Apache-2.0
"""Convert the digits bundled with the npm `mnist` package into IDX files.

The package ships 10000 MNIST digits as JSON arrays of 784 floats in [0, 1]
(one file per class). This writes gzip-compressed IDX image/label files that
the `palora` loader reads directly.

    python3 tools/make_mnist_idx.py --out data/mnist            # runs `npm pack mnist`
    python3 tools/make_mnist_idx.py --package path/to/package --out data/mnist
"""
import argparse
import gzip
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile


def load_digits(package_dir):
    images, labels = [], []
    for digit in range(10):
        with open(package_dir / "src" / "digits" / f"{digit}.json") as fh:
            flat = json.load(fh)["data"]
        count = len(flat) // 784
        for k in range(count):
            pixels = flat[k * 784:(k + 1) * 784]
            images.append(bytes(min(255, max(0, round(v * 255))) for v in pixels))
            labels.append(digit)
    return images, labels


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + payload)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--package", type=pathlib.Path, help="unpacked npm package directory")
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data/mnist"))
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        package = args.package
        if package is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True)
            with tarfile.open(next(pathlib.Path(tmp).glob("mnist-*.tgz"))) as tar:
                tar.extractall(tmp)
            package = pathlib.Path(tmp) / "package"
        images, labels = load_digits(package)

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "images-idx3-ubyte.gz", 0x00000803, (len(images), 28, 28), b"".join(images))
    write_idx(args.out / "labels-idx1-ubyte.gz", 0x00000801, (len(labels),), bytes(labels))
    print(f"wrote {len(images)} digits to {args.out}")


if __name__ == "__main__":
    main()
