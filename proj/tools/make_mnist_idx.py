#!/usr/bin/env python3
"""Build data/mnist10k-images-idx3-ubyte.gz from the npm `mnist` package.

The package (v1.1.0, MIT) ships 10,000 MNIST digits as per-class JSON files
with pixel values in [0, 1]. They are shuffled with a fixed seed so classes
are interleaved, quantized to uint8 and written as a gzipped IDX3 file. The
gzip mtime is zero; the header still records the output file name.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_idx.py package data/mnist10k-images-idx3-ubyte.gz
"""

import argparse
import gzip
import json
import pathlib
import struct

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("package", type=pathlib.Path, help="unpacked npm package directory")
    ap.add_argument("output", type=pathlib.Path)
    ap.add_argument("--seed", type=int, default=20191018)
    args = ap.parse_args()

    imgs = []
    for d in range(10):
        with open(args.package / "src" / "digits" / f"{d}.json") as f:
            imgs.append(np.asarray(json.load(f)["data"], dtype=np.float64).reshape(-1, 784))
    x = np.concatenate(imgs)
    x = x[np.random.default_rng(args.seed).permutation(len(x))]
    b = np.clip(np.rint(x * 255), 0, 255).astype(np.uint8)

    args.output.parent.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(args.output, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(b), 28, 28))
        f.write(b.tobytes())
    print(f"{args.output}: {len(b)} images, mean {b.mean() / 255:.4f}")


if __name__ == "__main__":
    main()
