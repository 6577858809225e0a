"""Datasets: MNIST (IDX files or a bundled 5000-sample subset), a synthetic
Gaussian mixture, label-skewed partitioning and the federator's root set."""

from __future__ import annotations

import gzip
import importlib.util
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DATA_ENV = "ITSECAGG_DATA"

IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


@dataclass
class Dataset:
    """Features in rows.  ``images`` keeps the raw pixels (scaled to [0, 1])
    when the features were derived from images, so triggers can be stamped
    before featurizing again."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    images: np.ndarray | None = None
    pool: int = 1
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.X) != len(self.y):
            raise ValueError("features and labels differ in length")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return replace(
            self, X=self.X[idx], y=self.y[idx], images=None if self.images is None else self.images[idx]
        )

    def with_labels(self, y: np.ndarray) -> "Dataset":
        return replace(self, y=np.asarray(y, dtype=np.int64))

    def featurize(self, images: np.ndarray) -> np.ndarray:
        """Features of raw images under this dataset's pooling and scaling."""
        X = pool_images(images, self.pool)
        if self.shift is not None:
            X = (X - self.shift) / self.scale
        return X

    def with_images(self, images: np.ndarray) -> "Dataset":
        return replace(self, images=images, X=self.featurize(images))


def standardize(train: Dataset, *others: Dataset) -> list[Dataset]:
    """Per-feature standardization fitted on ``train`` and applied to all."""
    shift = train.X.mean(axis=0)
    scale = train.X.std(axis=0) + 1e-6
    return [replace(ds, X=(ds.X - shift) / scale, shift=shift, scale=scale) for ds in (train, *others)]


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path: str | Path) -> np.ndarray:
    path = Path(path)
    with _open(path) as fh:
        zero, dtype, ndim = struct.unpack(">HBB", fh.read(4))
        if zero != 0 or dtype not in _DTYPES:
            raise ValueError(f"{path} is not an IDX file")
        shape = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype=_DTYPES[dtype])
    return data.reshape(shape)


def write_idx(path: str | Path, arr: np.ndarray) -> None:
    path = Path(path)
    arr = np.asarray(arr)
    code = {np.dtype("uint8"): 0x08, np.dtype("int8"): 0x09, np.dtype("int32"): 0x0C, np.dtype("float64"): 0x0E}
    dtype = code[arr.dtype]
    head = struct.pack(">HBB", 0, dtype, arr.ndim) + struct.pack(">" + "I" * arr.ndim, *arr.shape)
    body = arr.astype(_DTYPES[dtype]).tobytes()
    with (gzip.open(path, "wb") if path.suffix == ".gz" else open(path, "wb")) as fh:
        fh.write(head + body)


def _find(directory: Path, stem: str) -> Path | None:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        if (directory / name).exists():
            return directory / name
    return None


def _bundled_csv() -> Path | None:
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or spec.origin is None:
        return None
    path = Path(spec.origin).parent / "data" / "data" / "mnist_5k.csv.gz"
    return path if path.exists() else None


def pool_images(images: np.ndarray, pool: int) -> np.ndarray:
    """Mean-pool square images by ``pool`` and flatten."""
    n, h, w = images.shape
    if pool == 1:
        return images.reshape(n, h * w)
    if h % pool or w % pool:
        raise ValueError(f"pool {pool} does not divide image size {h}x{w}")
    return images.reshape(n, h // pool, pool, w // pool, pool).mean(axis=(2, 4)).reshape(n, -1)


def load_mnist(
    data_dir: str | Path | None = None,
    n_train: int = 4000,
    n_test: int = 1000,
    pool: int = 1,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """MNIST train/test subsets.

    Looks for IDX files in ``data_dir`` or ``$ITSECAGG_DATA``.  Without them
    it falls back to the 5000-sample CSV that ships with ``mlxtend``, shuffled
    and split into train and test.
    """
    rng = np.random.default_rng(seed)
    data_dir = data_dir or os.environ.get(DATA_ENV)
    parts = {}
    if data_dir is not None:
        d = Path(data_dir)
        for split, (img, lab) in IDX_FILES.items():
            ip, lp = _find(d, img), _find(d, lab)
            if ip is not None and lp is not None:
                parts[split] = (read_idx(ip).astype(np.float64) / 255.0, read_idx(lp).astype(np.int64))
    if "train" in parts and "test" in parts:
        (xtr, ytr), (xte, yte) = parts["train"], parts["test"]
        tr = rng.permutation(len(ytr))[:n_train]
        te = rng.permutation(len(yte))[:n_test]
        xtr, ytr, xte, yte = xtr[tr], ytr[tr], xte[te], yte[te]
    else:
        csv = _bundled_csv()
        if csv is None:
            raise FileNotFoundError(
                f"no MNIST IDX files found; set ${DATA_ENV} or install the 'mnist' extra"
            )
        raw = np.loadtxt(gzip.open(csv, "rt"), delimiter=",")
        if n_train + n_test > len(raw):
            raise ValueError(f"bundled subset has only {len(raw)} samples")
        perm = rng.permutation(len(raw))
        imgs = raw[perm, :-1].reshape(-1, 28, 28) / 255.0
        labels = raw[perm, -1].astype(np.int64)
        xtr, ytr = imgs[:n_train], labels[:n_train]
        xte, yte = imgs[n_train : n_train + n_test], labels[n_train : n_train + n_test]
    train = Dataset(pool_images(xtr, pool), ytr, 10, xtr, pool)
    test = Dataset(pool_images(xte, pool), yte, 10, xte, pool)
    return train, test


def synthetic_mixture(
    n_train: int = 2000, n_test: int = 500, dim: int = 20, num_classes: int = 4, sep: float = 2.5, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Isotropic Gaussian classes with random means at distance ~``sep``."""
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, dim))
    means *= sep / np.linalg.norm(means, axis=1, keepdims=True)

    def draw(m: int) -> Dataset:
        y = rng.integers(0, num_classes, size=m)
        X = means[y] + rng.normal(size=(m, dim))
        return Dataset(X, y, num_classes)

    return draw(n_train), draw(n_test)


# ---------------------------------------------------------------------------
# partitioning
# ---------------------------------------------------------------------------


def partition(ds: Dataset, n: int, gamma: float, rng: np.random.Generator, groups: int = 10) -> list[Dataset]:
    """Label-skewed split: a sample with label ``l`` goes to group ``l mod
    groups`` with probability ``gamma`` and to each other group with
    probability ``(1 - gamma) / (groups - 1)``; clients are assigned to groups
    round-robin and receive a uniform share of their group's samples."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    groups = min(groups, n)
    members = [[c for c in range(n) if c % groups == gidx] for gidx in range(groups)]
    owner = np.empty(len(ds), dtype=int)
    for s, label in enumerate(ds.y):
        home = int(label) % groups
        if groups == 1:
            grp = 0
        else:
            probs = np.full(groups, (1 - gamma) / (groups - 1))
            probs[home] = gamma
            grp = rng.choice(groups, p=probs)
        owner[s] = members[grp][rng.integers(len(members[grp]))]
    return [ds.subset(np.flatnonzero(owner == c)) for c in range(n)]


def split_root(ds: Dataset, size: int, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Draw the federator's root set uniformly; return (root, remainder)."""
    perm = rng.permutation(len(ds))
    return ds.subset(perm[:size]), ds.subset(perm[size:])
