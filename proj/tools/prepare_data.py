#!/usr/bin/env python3
"""Fetch MNIST and CIFAR-10 from npm packages and write the on-disk layout
the transinv loaders expect:

    <out>/mnist/{train-images,train-labels,t10k-images,t10k-labels}
    <out>/cifar10/data_batch_{1..5}.bin, <out>/cifar10/test_batch.bin

MNIST ships as the original IDX files (mnist-data). CIFAR-10 ships as PNG
sprites, one 10000-row image per batch with a 32x32 RGB image per row, plus
JSON label lists (tfjs-cifar10); rows are rewritten as 3073-byte records.
The PNGs are lossless, so the records match the official binary batches.
"""

import argparse
import json
import shutil
import subprocess
import tarfile
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

MNIST_PACKAGE = "mnist-data@1.2.6"
CIFAR_PACKAGE = "tfjs-cifar10@1.1.1"
MNIST_FILES = {
    "train-images-idx3-ubyte": "train-images",
    "train-labels-idx1-ubyte": "train-labels",
    "t10k-images-idx3-ubyte": "t10k-images",
    "t10k-labels-idx1-ubyte": "t10k-labels",
}


def npm_pack(spec: str, dest: Path) -> Path:
    out = subprocess.run(["npm", "pack", spec], cwd=dest, check=True, capture_output=True, text=True)
    return dest / out.stdout.strip().splitlines()[-1]


def unpack(tgz: Path, dest: Path) -> Path:
    with tarfile.open(tgz) as tar:
        tar.extractall(dest, filter="data")
    return dest / "package"


def write_mnist(package: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for src, dst in MNIST_FILES.items():
        shutil.copyfile(package / "data" / src, out / dst)


def sprite_to_records(png: Path, labels: list[int], out: Path) -> None:
    pixels = np.asarray(Image.open(png).convert("RGB"))
    if pixels.shape != (len(labels), 1024, 3):
        raise ValueError(f"{png}: unexpected sprite shape {pixels.shape}")
    planes = pixels.transpose(0, 2, 1).reshape(len(labels), 3072)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], planes], axis=1)
    records.tofile(out)


def write_cifar(package: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    train = json.loads((package / "train_lables.json").read_text())
    test = json.loads((package / "test_lables.json").read_text())
    for i in range(5):
        sprite_to_records(package / f"data_batch_{i + 1}.png", train[i * 10000:(i + 1) * 10000],
                          out / f"data_batch_{i + 1}.bin")
    sprite_to_records(package / "test_batch.png", test, out / "test_batch.bin")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, required=True, help="data directory to populate")
    parser.add_argument("--mnist-tgz", type=Path, help="use this package tarball instead of npm pack")
    parser.add_argument("--cifar-tgz", type=Path, help="use this package tarball instead of npm pack")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for name, spec, tgz, write in (("mnist", MNIST_PACKAGE, args.mnist_tgz, write_mnist),
                                       ("cifar10", CIFAR_PACKAGE, args.cifar_tgz, write_cifar)):
            work = tmp / name
            work.mkdir()
            package = unpack(tgz or npm_pack(spec, work), work)
            write(package, args.out / name)
            print(f"{name}: written to {args.out / name}")


if __name__ == "__main__":
    main()
