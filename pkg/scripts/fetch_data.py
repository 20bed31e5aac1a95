"""Populate a dataset root with MNIST (IDX) and CIFAR-10 (binary batches).

Both come from npm registry tarballs:

* ``mnist-data@1.2.6`` ships the four original IDX files.
* ``tfjs-cifar10@1.1.1`` ships each batch as a 1024 x 10000 RGB PNG (one
  image per row, pixels interleaved) plus JSON label lists. Rows are
  rearranged to channel planes and written in the original binary layout
  (label byte, then 1024 R, 1024 G, 1024 B bytes).

Usage: ``python scripts/fetch_data.py [ROOT]`` (default ``$SNN_DATA_DIR`` or
``./data``). ``--tarballs DIR`` reads the packages from a local directory
instead of the registry. Needs Pillow for the PNG decoding. Writes ``manifest.json``
(sha256 per file) into each dataset directory.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import tarfile
import urllib.request
from pathlib import Path

import numpy as np
from PIL import Image

REGISTRY = os.environ.get("NPM_REGISTRY", "https://registry.npmjs.org")
MNIST_PKG = ("mnist-data", "1.2.6")
CIFAR_PKG = ("tfjs-cifar10", "1.1.1")
CIFAR_BATCHES = [f"data_batch_{i}" for i in range(1, 6)] + ["test_batch"]
Image.MAX_IMAGE_PIXELS = None


def fetch_tarball(name: str, version: str, local: Path | None = None) -> tarfile.TarFile:
    filename = f"{name}-{version}.tgz"
    if local is not None and (local / filename).exists():
        return tarfile.open(local / filename, mode="r:gz")
    url = f"{REGISTRY}/{name}/-/{filename}"
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=600) as resp:
        return tarfile.open(fileobj=io.BytesIO(resp.read()), mode="r:gz")


def member(tar: tarfile.TarFile, path: str) -> bytes:
    fh = tar.extractfile(f"package/{path}")
    if fh is None:
        raise FileNotFoundError(path)
    return fh.read()


def write(path: Path, data: bytes, manifest: dict[str, str]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    manifest[path.name] = hashlib.sha256(data).hexdigest()


def png_to_cifar_batch(png: bytes, labels: list[int]) -> bytes:
    pixels = np.asarray(Image.open(io.BytesIO(png)).convert("RGB"))  # (images, 1024, 3)
    n = pixels.shape[0]
    if n != len(labels):
        raise ValueError(f"{n} images but {len(labels)} labels")
    planes = pixels.transpose(0, 2, 1).reshape(n, 3072)
    rows = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], planes], axis=1)
    return rows.tobytes()


def fetch_mnist(root: Path, local: Path | None = None) -> None:
    out = root / "mnist"
    out.mkdir(parents=True, exist_ok=True)
    tar = fetch_tarball(*MNIST_PKG, local)
    manifest: dict[str, str] = {}
    for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                 "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
        write(out / name, member(tar, f"data/{name}"), manifest)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def fetch_cifar10(root: Path, local: Path | None = None) -> None:
    out = root / "cifar-10-batches-bin"
    out.mkdir(parents=True, exist_ok=True)
    tar = fetch_tarball(*CIFAR_PKG, local)
    train_labels = json.loads(member(tar, "train_lables.json"))
    test_labels = json.loads(member(tar, "test_lables.json"))
    manifest: dict[str, str] = {}
    for i, batch in enumerate(CIFAR_BATCHES):
        labels = test_labels if batch == "test_batch" else train_labels[i * 10000 : (i + 1) * 10000]
        print(f"converting {batch}")
        write(out / f"{batch}.bin", png_to_cifar_batch(member(tar, f"{batch}.png"), labels), manifest)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("root", nargs="?", default=os.environ.get("SNN_DATA_DIR", "data"))
    parser.add_argument("--only", choices=("mnist", "cifar10"))
    parser.add_argument("--tarballs", type=Path, help="directory of already downloaded .tgz packages")
    args = parser.parse_args()
    root = Path(args.root)
    if args.only in (None, "mnist"):
        fetch_mnist(root, args.tarballs)
    if args.only in (None, "cifar10"):
        fetch_cifar10(root, args.tarballs)
    print(f"datasets in {root}")


if __name__ == "__main__":
    main()
