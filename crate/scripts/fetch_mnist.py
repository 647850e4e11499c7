#!/usr/bin/env python3
"""Build MNIST IDX files from the 10,000-digit subset in the `mnist` npm package.

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (8,000 digits) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (2,000 digits) into the output
directory. Classes are interleaved so both splits stay balanced. Skip this if
you already have the original IDX files; point the config at them instead.
"""

import argparse
import json
import pathlib
import struct
import subprocess
import tarfile
import tempfile

PACKAGE = "mnist@1.1.0"
SIDE = 28
TRAIN = 8000


def write_idx(out, images, labels, prefix):
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/mnist", type=pathlib.Path)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", PACKAGE], cwd=tmp, check=True, capture_output=True)
        tarball = next(pathlib.Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(tarball) as tar:
            tar.extractall(tmp, filter="data")
        per_class = []
        for digit in range(10):
            raw = json.loads((pathlib.Path(tmp) / "package/src/digits" / f"{digit}.json").read_text())["data"]
            pixels = [min(255, max(0, round(v * 255))) for v in raw]
            count = len(pixels) // (SIDE * SIDE)
            per_class.append([pixels[i * SIDE * SIDE:(i + 1) * SIDE * SIDE] for i in range(count)])

    images, labels = [], []
    for j in range(max(len(c) for c in per_class)):
        for digit, samples in enumerate(per_class):
            if j < len(samples):
                images.append(samples[j])
                labels.append(digit)

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out, images[:TRAIN], labels[:TRAIN], "train")
    write_idx(args.out, images[TRAIN:], labels[TRAIN:], "t10k")
    print(f"wrote {TRAIN} training and {len(images) - TRAIN} test digits to {args.out}")


if __name__ == "__main__":
    main()
