"""Dataset loading and binary encoding.

Continuous features are binarised per dimension: a 1-D k-means is fitted on
the training split and each value becomes the one-hot code of its nearest
center. Boolean features can pass through as a single bit.
"""

from __future__ import annotations

import csv
import gzip
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError

UCI_NAMES = ("iris", "wine", "zoo")


# -- k-means ------------------------------------------------------------------


def _lloyd(values: np.ndarray, centers: np.ndarray, max_iter: int) -> np.ndarray:
    assign = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(len(centers)):
            members = values[assign == j]
            if members.size:
                centers[j] = members.mean()
            else:
                # reseed an empty cluster at the point farthest from its center
                dist = np.abs(values - centers[assign])
                centers[j] = values[np.argmax(dist)]
    return np.sort(centers)


def sse(values, centers) -> float:
    values = np.asarray(values, dtype=float)
    d = np.min(np.abs(values[:, None] - np.asarray(centers)[None, :]), axis=1)
    return float(np.sum(d**2))


def kmeans_1d(values: Sequence[float], k: int, rng: np.random.Generator,
              max_iter: int = 100, restarts: int = 10) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` runs by SSE."""
    values = np.asarray(values, dtype=float)
    if k < 1 or len(values) < k:
        raise ContractError(f"need at least k={k} points, got {len(values)}")
    if k == 1:
        return np.array([values.mean()])
    best, best_sse = None, np.inf
    for _ in range(restarts):
        centers = [values[rng.integers(len(values))]]
        for _ in range(k - 1):
            d2 = np.min((values[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
            total = d2.sum()
            if total <= 0:
                centers.append(values[rng.integers(len(values))])
            else:
                centers.append(values[rng.choice(len(values), p=d2 / total)])
        c = _lloyd(values, np.array(centers, dtype=float), max_iter)
        s = sse(values, c)
        if s < best_sse:
            best, best_sse = c, s
    return best


# -- encoding -----------------------------------------------------------------


@dataclass
class FeatureEncoder:
    """Per-column binarisation: ``ks[i] == 0`` passes the (0/1) value through as one bit."""

    columns: list[str]
    ks: list[int]
    centers: list[list[float]] = field(default_factory=list)

    @property
    def width(self) -> int:
        return sum(1 if k == 0 else k for k in self.ks)

    def fit(self, X: np.ndarray, rng: np.random.Generator) -> "FeatureEncoder":
        X = np.asarray(X, dtype=float)
        self.centers = [
            [] if k == 0 else kmeans_1d(X[:, i], k, rng).tolist() for i, k in enumerate(self.ks)
        ]
        return self

    def encode_row(self, row: Sequence[float]) -> list[int]:
        if not self.centers:
            raise ContractError("encoder has not been fitted")
        bits: list[int] = []
        for v, k, c in zip(row, self.ks, self.centers):
            if k == 0:
                bits.append(int(v > 0))
            else:
                onehot = [0] * k
                # argmin returns the first minimum: ties go to the lower center
                onehot[int(np.argmin(np.abs(np.asarray(c) - v)))] = 1
                bits.extend(onehot)
        return bits

    def encode(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.encode_row(r) for r in np.asarray(X, dtype=float)], dtype=np.int8)

    def to_json(self) -> dict:
        return {"columns": self.columns, "ks": self.ks, "centers": self.centers}

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureEncoder":
        return cls(list(doc["columns"]), list(doc["ks"]), [list(c) for c in doc["centers"]])


def encode(sample: Sequence[float], centers: Sequence[Sequence[float]]) -> list[int]:
    """One-hot of the nearest center per dimension, concatenated."""
    enc = FeatureEncoder([str(i) for i in range(len(centers))], [len(c) for c in centers],
                         [list(c) for c in centers])
    return enc.encode_row(sample)


def one_hot(labels: Sequence[int], n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes), dtype=np.int8)
    out[np.arange(len(labels)), np.asarray(labels, dtype=int)] = 1
    return out


@dataclass
class RawSplit:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    features: list[str]
    classes: list[str]


@dataclass
class EncodedDataset:
    X: np.ndarray
    Y: np.ndarray
    split: str
    encoder: dict = field(default_factory=dict)
    classes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int8)
        self.Y = np.asarray(self.Y, dtype=np.int8)
        if len(self.X) != len(self.Y):
            raise ContractError("feature and target row counts differ")
        if self.Y.shape[1] > 1 and not np.all(self.Y.sum(axis=1) == 1):
            raise ContractError("targets must be one-hot")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.Y, axis=1) if self.Y.shape[1] > 1 else self.Y[:, 0].astype(int)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X.astype(float), self.Y.astype(float)

    def to_json(self) -> dict:
        return {
            "split": self.split,
            "classes": self.classes,
            "encoder": self.encoder,
            "X": ["".join(map(str, r)) for r in self.X.tolist()],
            "Y": ["".join(map(str, r)) for r in self.Y.tolist()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EncodedDataset":
        X = [[int(c) for c in s] for s in doc["X"]]
        Y = [[int(c) for c in s] for s in doc["Y"]]
        return cls(np.array(X), np.array(Y), doc["split"], doc.get("encoder", {}),
                   doc.get("classes", []))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.X.shape[1])]
                       + [f"y{j}" for j in range(self.Y.shape[1])])
            for xr, yr in zip(self.X.tolist(), self.Y.tolist()):
                w.writerow(xr + yr)


def encode_split(raw: RawSplit, ks: Sequence[int], rng: np.random.Generator,
                 columns: Sequence[str] | None = None):
    """Fit the encoder on the training rows only and encode both splits."""
    columns = list(columns) if columns is not None else list(raw.features)
    if len(ks) != len(columns):
        raise ContractError(f"{len(ks)} cluster counts for {len(columns)} columns")
    idx = [raw.features.index(c) for c in columns]
    enc = FeatureEncoder(columns, list(ks)).fit(raw.X_train[:, idx], rng)
    n = len(raw.classes)
    spec = enc.to_json()
    train = EncodedDataset(enc.encode(raw.X_train[:, idx]), one_hot(raw.y_train, n), "train",
                           spec, list(raw.classes))
    test = EncodedDataset(enc.encode(raw.X_test[:, idx]), one_hot(raw.y_test, n), "test",
                          spec, list(raw.classes))
    return train, test


# -- UCI tables -----------------------------------------------------------------


def read_table(path) -> tuple[list[str], np.ndarray, list[str]]:
    """Numeric feature columns plus a trailing ``class`` column; a ``name`` column is dropped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    keep = [i for i, h in enumerate(header) if h not in ("name", "class")]
    ci = header.index("class")
    X = np.array([[float(r[i]) for i in keep] for r in body])
    return [header[i] for i in keep], X, [r[ci] for r in body]


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("qperceptron") / "data" / f"{name}.csv"))


def stratified_split(y: np.ndarray, train_fraction: float, rng: np.random.Generator):
    train_idx, test_idx = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        n_train = int(round(train_fraction * len(idx)))
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    train_idx = np.array(train_idx)
    test_idx = np.array(test_idx)
    rng.shuffle(train_idx)
    rng.shuffle(test_idx)
    return train_idx, test_idx


def load_uci(name: str, train_fraction: float = 0.8, rng: np.random.Generator | None = None,
             path=None) -> RawSplit:
    """Shuffled, stratified train/test split of a bundled (or given) UCI table."""
    if path is None:
        if name not in UCI_NAMES:
            raise ContractError(f"unknown dataset {name!r}; bundled: {UCI_NAMES}")
        path = bundled_path(name)
    if not 0 < train_fraction < 1:
        raise ContractError("train fraction must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    features, X, labels = read_table(path)
    classes = sorted(set(labels))
    y = np.array([classes.index(lab) for lab in labels])
    tr, te = stratified_split(y, train_fraction, rng)
    return RawSplit(X[tr], y[tr], X[te], y[te], features, classes)


# -- bars and stripes -------------------------------------------------------------


def bars_and_stripes(n: int):
    """Positives: blank, full, and every single full row or single full column (row-major bits)."""
    if n < 2:
        raise ContractError("side must be >= 2")
    pos = {tuple([0] * n * n), tuple([1] * n * n)}
    for r in range(n):
        img = np.zeros((n, n), dtype=int)
        img[r, :] = 1
        pos.add(tuple(img.ravel()))
        pos.add(tuple(img.T.ravel()))
    positives = sorted(pos)
    neg = []
    for i in range(1 << (n * n)):
        bits = tuple((i >> (n * n - 1 - j)) & 1 for j in range(n * n))
        if bits not in pos:
            neg.append(bits)
    return [list(p) for p in positives], [list(p) for p in neg]


def bars_and_stripes_dataset(n: int = 3) -> EncodedDataset:
    """All 2**(n*n) patterns with a single 0/1 target (1 for bars-and-stripes)."""
    pos, neg = bars_and_stripes(n)
    X = np.array(pos + neg, dtype=np.int8)
    Y = np.array([[1]] * len(pos) + [[0]] * len(neg), dtype=np.int8)
    return EncodedDataset(X, Y, "all", {"kind": "bars_and_stripes", "n": n}, ["other", "bas"])


def one_dot_dataset(side: int = 2) -> EncodedDataset:
    """All patterns on a side x side grid, target 1 iff exactly one pixel is set."""
    m = side * side
    X = np.array([[(i >> j) & 1 for j in range(m)] for i in range(1 << m)], dtype=np.int8)
    Y = (X.sum(axis=1) == 1).astype(np.int8)[:, None]
    return EncodedDataset(X, Y, "all", {"kind": "one_dot", "side": side}, ["other", "one_dot"])


# -- MNIST ------------------------------------------------------------------------------


def read_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed) into an array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        data = fh.read()
    zero, dtype_code, ndim = struct.unpack(">HBB", data[:4])
    if zero != 0 or dtype_code != 0x08:
        raise ContractError(f"{path}: unsupported IDX header")
    dims = struct.unpack(">" + "I" * ndim, data[4:4 + 4 * ndim])
    return np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, 0x08, array.ndim) + struct.pack(">" + "I" * array.ndim,
                                                                       *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def pool_binarize(images: np.ndarray, cells: int = 5, crop: int = 25) -> np.ndarray:
    """Mean-pool the central ``crop`` x ``crop`` window into ``cells`` x ``cells`` blocks,
    then threshold each image at its own pooled mean."""
    images = np.asarray(images, dtype=float)
    h, w = images.shape[1:]
    top, left = (h - crop) // 2, (w - crop) // 2
    win = images[:, top:top + crop, left:left + crop]
    b = crop // cells
    pooled = win.reshape(len(images), cells, b, cells, b).mean(axis=(2, 4)).reshape(len(images), -1)
    mean = pooled.mean(axis=1, keepdims=True)
    return (pooled > mean).astype(np.int8)


def mnist_prepare(images: np.ndarray, labels: np.ndarray, classes: Sequence[int] = (0, 1, 2, 3, 4),
                  train: int = 4500, test: int = 500,
                  rng: np.random.Generator | None = None):
    """Random class-filtered subset, 5x5 pooled and binarised to 25 bits per image."""
    rng = rng if rng is not None else np.random.default_rng(0)
    classes = list(classes)
    keep = np.flatnonzero(np.isin(labels, classes))
    if len(keep) < train + test:
        raise ContractError(
            f"only {len(keep)} images of classes {classes}; {train + test} requested"
        )
    pick = rng.permutation(keep)[: train + test]
    bits = pool_binarize(images[pick])
    y = np.array([classes.index(int(v)) for v in labels[pick]])
    Y = one_hot(y, len(classes))
    spec = {"kind": "mnist", "classes": classes, "cells": 5, "crop": 25}
    names = [str(c) for c in classes]
    return (EncodedDataset(bits[:train], Y[:train], "train", spec, names),
            EncodedDataset(bits[train:], Y[train:], "test", spec, names))


def load_mnist(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if len(images) != len(labels):
        raise ContractError("image and label counts differ")
    return images, labels


def save_encoded(path, datasets: Sequence[EncodedDataset]) -> None:
    Path(path).write_text(json.dumps([d.to_json() for d in datasets]))


def load_encoded(path) -> list[EncodedDataset]:
    return [EncodedDataset.from_json(d) for d in json.loads(Path(path).read_text())]
