#!/usr/bin/env python3
"""Convert the digits shipped in the npm ``mnist`` package (10,000 real MNIST
images as per-class JSON) into gzipped IDX files.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_from_npm.py package data/mnist

Images are interleaved with a fixed seed and split 8,000 train / 2,000 test.
"""

import argparse
import gzip
import json
import random
import struct
from pathlib import Path

SIDE = 28
TRAIN = 8000


def load(package: Path):
    samples = []
    for label in range(10):
        flat = json.loads((package / "src" / "digits" / f"{label}.json").read_text())["data"]
        for k in range(len(flat) // (SIDE * SIDE)):
            chunk = flat[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            pixels = bytes(min(255, max(0, round(v * 255))) for v in chunk)
            samples.append((pixels, label))
    return samples


def write(path: Path, magic: int, dims, payload: bytes):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=20240501)
    args = ap.parse_args()

    samples = load(args.package)
    random.Random(args.seed).shuffle(samples)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", samples[:TRAIN]), ("t10k", samples[TRAIN:])):
        write(args.out / f"{name}-images-idx3-ubyte.gz", 0x803, (len(part), SIDE, SIDE),
              b"".join(p for p, _ in part))
        write(args.out / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(part),),
              bytes(l for _, l in part))
        print(f"{name}: {len(part)} images")


if __name__ == "__main__":
    main()
