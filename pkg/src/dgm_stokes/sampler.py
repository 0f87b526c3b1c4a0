"""Random collocation datasets on the unit cube and minibatch streams over them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# dataset sizes from the experiment tables
DATASETS_2D = {1: 1000, 2: 2000, 3: 4000, 4: 8000}
DATASETS_3D = {1: 1200, 2: 2400, 3: 4800, 4: 9600}


def dataset_size(dim: int, k: int) -> int:
    table = DATASETS_2D if dim == 2 else DATASETS_3D
    return table[k]


@dataclass
class Dataset:
    interior: np.ndarray  # (n_interior, d)
    boundary: np.ndarray  # (n_boundary, d)
    seed: int | None = None

    @property
    def dim(self) -> int:
        return self.interior.shape[1]

    @property
    def counts(self) -> tuple[int, int]:
        return len(self.interior), len(self.boundary)

    @property
    def total(self) -> int:
        return len(self.interior) + len(self.boundary)

    def to_csv(self, path) -> None:
        names = [f"x{i + 1}" for i in range(self.dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["region"])
            for region, pts in (("interior", self.interior), ("boundary", self.boundary)):
                for p in pts:
                    w.writerow([repr(float(v)) for v in p] + [region])

    @classmethod
    def from_csv(cls, path, seed: int | None = None) -> "Dataset":
        interior, boundary = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 1
            for row in reader:
                pt = [float(v) for v in row[:d]]
                if row[d] == "interior":
                    interior.append(pt)
                elif row[d] == "boundary":
                    boundary.append(pt)
                else:
                    raise ValueError(f"{path}: unknown region tag {row[d]!r}")
        return cls(np.array(interior).reshape(-1, d), np.array(boundary).reshape(-1, d), seed)


def _open_unit(rng: np.random.Generator, shape) -> np.ndarray:
    # strictly inside (0, 1): keeps face samples off edges and corners
    u = rng.random(shape)
    return np.clip(u, np.finfo(float).eps, 1.0 - np.finfo(float).eps)


def sample_interior(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    return _open_unit(rng, (n, dim))


def sample_boundary(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Uniform on the cube surface: all 2d faces have unit area, so pick one uniformly."""
    pts = _open_unit(rng, (n, dim))
    face = rng.integers(0, 2 * dim, size=n)
    axis = face // 2
    pts[np.arange(n), axis] = (face % 2).astype(float)
    return pts


def sample_dataset(dim: int, total: int, boundary_fraction: float = 0.2,
                   seed: int = 0) -> Dataset:
    if total < 2:
        raise ValueError(f"total must be >= 2, got {total}")
    if not 0 < boundary_fraction < 1:
        raise ValueError(f"boundary_fraction must be in (0, 1), got {boundary_fraction}")
    n_b = min(math.ceil(boundary_fraction * total), total - 1)
    rng = np.random.default_rng(seed)
    interior = sample_interior(rng, total - n_b, dim)
    boundary = sample_boundary(rng, n_b, dim)
    return Dataset(interior, boundary, seed)


class BatchStream:
    """Minibatches drawn without replacement within an epoch.

    Interior and boundary sets are shuffled independently; a new epoch starts
    (with a fresh permutation from the same stream) when the current one
    cannot supply a full batch.
    """

    def __init__(self, dataset: Dataset, interior_batch: int | None, boundary_batch: int | None,
                 seed: int = 0):
        n_i, n_b = dataset.counts
        if n_i == 0 or n_b == 0:
            raise ValueError("dataset has an empty interior or boundary set")
        self.dataset = dataset
        self.sizes = (min(interior_batch or n_i, n_i), min(boundary_batch or n_b, n_b))
        self.rng = np.random.default_rng(seed)
        self._perm = [None, None]
        self._pos = [0, 0]
        self.epoch = [0, 0]

    def _take(self, which: int, n: int) -> np.ndarray:
        size = self.sizes[which]
        if self._perm[which] is None or self._pos[which] + size > n:
            self._perm[which] = self.rng.permutation(n)
            self._pos[which] = 0
            self.epoch[which] += 1
        idx = self._perm[which][self._pos[which]:self._pos[which] + size]
        self._pos[which] += size
        return idx

    def next_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Row indices into the interior and boundary sets for the next batch."""
        n_i, n_b = self.dataset.counts
        return self._take(0, n_i), self._take(1, n_b)

    def next(self) -> tuple[np.ndarray, np.ndarray]:
        ii, ib = self.next_indices()
        return self.dataset.interior[ii], self.dataset.boundary[ib]

    def state(self) -> dict:
        return self.rng.bit_generator.state


class FreshStream:
    """New uniform points on every call instead of iterating a fixed dataset."""

    def __init__(self, dim: int, interior_batch: int, boundary_batch: int, seed: int = 0):
        self.dim = dim
        self.sizes = (interior_batch, boundary_batch)
        self.rng = np.random.default_rng(seed)

    def next(self) -> tuple[np.ndarray, np.ndarray]:
        return (sample_interior(self.rng, self.sizes[0], self.dim),
                sample_boundary(self.rng, self.sizes[1], self.dim))

    def state(self) -> dict:
        return self.rng.bit_generator.state


def next_batch(dataset: Dataset, batch_size, stream: BatchStream | None = None,
               seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One (interior, boundary) batch. ``batch_size`` is an int or an (interior, boundary) pair."""
    if stream is None:
        sizes = batch_size if isinstance(batch_size, tuple) else (batch_size, batch_size)
        stream = BatchStream(dataset, *sizes, seed=seed)
    return stream.next()


def write_dataset(dataset: Dataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_csv(path)
    return path
