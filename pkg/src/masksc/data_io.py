"""Dataset loading, synthetic data, preprocessing and artifact files.

File formats handled here:

* IDX (big-endian MNIST container, ubyte payload)
* numeric CSV, one sample per row
* MSCZ: ``b"MSCZ"``, u32 version, u64 N, then N*N float64, all little-endian,
  row-major
* binary PGM (P5) heatmaps
"""

from __future__ import annotations

import csv
import dataclasses
import os
import struct

import numpy as np

from .core import as_data_matrix, relabel
from .errors import FormatError, InvalidInputError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MSCZ_MAGIC = b"MSCZ"
MSCZ_VERSION = 1
_MSCZ_HEADER = struct.Struct("<4sIQ")


@dataclasses.dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    truth: np.ndarray
    name: str
    K: int
    # generator bases, kept only for synthetic data
    bases: tuple | None = dataclasses.field(default=None, repr=False, compare=False)

    def __post_init__(self):
        X = as_data_matrix(self.X)
        truth = np.asarray(self.truth, dtype=np.int64)
        if truth.shape != (X.shape[1],):
            raise InvalidInputError(f"{truth.size} labels for {X.shape[1]} samples")
        if truth.min() != 0 or truth.max() != self.K - 1 or np.unique(truth).size != self.K:
            raise InvalidInputError(f"labels must cover exactly [0, {self.K})")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "truth", truth)

    @property
    def n(self) -> int:
        return self.X.shape[1]


def _from_labels(X, raw_labels, name) -> Dataset:
    labels, uniq = relabel(raw_labels)
    return Dataset(X=X, truth=labels, name=name, K=int(uniq.size))


# --- IDX -------------------------------------------------------------------

def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Read an unsigned-byte IDX file into an array of its declared shape."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header at byte offset {len(raw)}")
    magic = struct.unpack(">I", raw[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at byte offset 0, "
                          f"expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise FormatError(f"{path}: unsupported IDX element type in magic 0x{magic:08x} at byte offset 0")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise FormatError(f"{path}: truncated dimension header at byte offset {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    if len(raw) < head + size:
        raise FormatError(f"{path}: truncated payload at byte offset {len(raw)}, "
                          f"expected {head + size} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=head).reshape(dims)


def write_idx(path, array) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = (0x08 << 8) | array.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">I{array.ndim}I", magic, *array.shape))
        fh.write(array.tobytes())


def load_idx(images_path, labels_path, subsample: int | None = None, seed: int = 0,
             name: str = "mnist") -> Dataset:
    """Images as ``[0, 1]`` pixel columns, optionally a seeded random subset."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    n = images.shape[0]
    X = images.reshape(n, -1).T.astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if subsample is not None:
        if not 2 <= subsample <= n:
            raise InvalidInputError(f"subsample={subsample} outside [2, {n}]")
        idx = np.sort(np.random.default_rng(seed).choice(n, size=subsample, replace=False))
        X, y = X[:, idx], y[idx]
    return _from_labels(X, y, name)


# --- CSV -------------------------------------------------------------------

def load_csv(path, label_column: int = -1, name: str | None = None) -> Dataset:
    """One sample per row; ``label_column`` may be negative."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise FormatError(f"{path}: row {i} needs a label and at least one feature")
            elif len(row) != width:
                raise FormatError(f"{path}: row {i} has {len(row)} cells, expected {width}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise FormatError(f"{path}: non-numeric cell in row {i}") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    data = np.asarray(rows)
    col = label_column % width
    y = data[:, col]
    X = np.delete(data, col, axis=1).T
    if not np.all(y == np.round(y)):
        raise FormatError(f"{path}: label column {label_column} is not integral")
    return _from_labels(X, y.astype(np.int64), name or os.path.splitext(os.path.basename(path))[0])


def save_csv(path, dataset: Dataset) -> None:
    """Write features then the label per row; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for x, y in zip(dataset.X.T, dataset.truth):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


# --- synthetic -------------------------------------------------------------

def generate_synthetic_subspaces(K: int, r: int, d: int, n_per: int, sigma: float = 0.0,
                                 seed: int = 0, shuffle: bool = False) -> Dataset:
    """Points from ``K`` independent ``r``-dimensional subspaces of ``R^d``.

    Each basis is the orthonormalized span of a Gaussian ``d x r`` draw; the
    draw is repeated until the ``K`` bases together have rank ``K r``.
    Columns are unit-normalized after adding noise.
    """
    if K < 1 or r < 1 or n_per < 1:
        raise InvalidInputError("K, r and n_per must be positive")
    if K * r > d:
        raise InvalidInputError(f"K*r={K * r} exceeds ambient dimension d={d}")
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    while True:
        bases = [np.linalg.qr(rng.standard_normal((d, r)))[0] for _ in range(K)]
        if np.linalg.matrix_rank(np.hstack(bases)) == K * r:
            break
    cols, labels = [], []
    for k, B in enumerate(bases):
        pts = B @ rng.standard_normal((r, n_per)) + sigma * rng.standard_normal((d, n_per))
        cols.append(pts)
        labels.extend([k] * n_per)
    X = normalize_columns(np.hstack(cols))
    y = np.asarray(labels, dtype=np.int64)
    if shuffle:
        perm = rng.permutation(X.shape[1])
        X, y = X[:, perm], y[perm]
    return Dataset(X=X, truth=y, name="synthetic", K=K, bases=tuple(bases))


# --- preprocessing ---------------------------------------------------------

def normalize_columns(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def pca_reduce(X, n_components: int) -> np.ndarray:
    """Project centered columns onto the leading principal directions."""
    X = np.asarray(X, dtype=np.float64)
    if not 1 <= n_components <= min(X.shape):
        raise InvalidInputError(f"n_components={n_components} out of range for {X.shape}")
    Xc = X - X.mean(axis=1, keepdims=True)
    U, _, _ = np.linalg.svd(Xc, full_matrices=False)
    return U[:, :n_components].T @ Xc


def preprocess(dataset: Dataset, normalize: bool = True, pca: int | None = None) -> Dataset:
    X = dataset.X
    if pca:
        X = pca_reduce(X, pca)
    if normalize:
        X = normalize_columns(X)
    return dataclasses.replace(dataset, X=X)


# --- affinity files --------------------------------------------------------

def save_affinity(Z, path) -> None:
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise InvalidInputError(f"affinity must be square, got {Z.shape}")
    if Z.shape[0] == 0:
        raise InvalidInputError("refusing to save an empty affinity")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("affinity has non-finite entries")
    with open(path, "wb") as fh:
        fh.write(_MSCZ_HEADER.pack(MSCZ_MAGIC, MSCZ_VERSION, Z.shape[0]))
        fh.write(np.ascontiguousarray(Z, dtype="<f8").tobytes())


def load_affinity(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _MSCZ_HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, n = _MSCZ_HEADER.unpack_from(raw)
    if magic != MSCZ_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MSCZ_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _MSCZ_HEADER.size + 8 * n * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_MSCZ_HEADER.size).reshape(n, n).astype(np.float64)


def render_heatmap(Z, path, order=None) -> None:
    """Grayscale P5 image of ``|Z|`` scaled by its 99th percentile.

    With ``order`` (a label vector) rows and columns are grouped by label.
    """
    A = np.abs(np.asarray(Z, dtype=np.float64))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"heatmap needs a square matrix, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("heatmap input has non-finite entries")
    if order is not None:
        perm = np.argsort(np.asarray(order), kind="stable")
        A = A[np.ix_(perm, perm)]
    hi = np.percentile(A, 99) if A.size else 0.0
    if hi <= 0:
        hi = A.max(initial=0.0)
    pixels = np.zeros(A.shape, dtype=np.uint8) if hi <= 0 else \
        np.round(np.clip(A / hi, 0.0, 1.0) * 255).astype(np.uint8)
    n = A.shape[0]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
