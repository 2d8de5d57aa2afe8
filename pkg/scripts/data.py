#!/usr/bin/env python3

import csv
import logging
import math
from pathlib import Path

import numpy as np

from models import Batch, Dataset, DatasetKind, SplitTag


# (scale, angular frequency) of x = scale·√t·cos(freq·√t·π)
SPIRALS = {
    DatasetKind.SPIRAL4: (2.0, 8.0),
    DatasetKind.SPIRAL2: (1.0, 4.0),
}

DEFAULT_SIGMA = {
    DatasetKind.SPIRAL4: 0.02,
    DatasetKind.SPIRAL2: 0.05,
}


def spiral_curve(t, label: int, kind: DatasetKind = DatasetKind.SPIRAL2) -> np.ndarray:
    scale, freq = SPIRALS[kind]
    root = np.sqrt(np.asarray(t, dtype=float))
    angle = freq * root * np.pi + (np.pi if label == 1 else 0.0)
    return np.column_stack([scale * root * np.cos(angle), scale * root * np.sin(angle)])


def _spiral(kind: DatasetKind, counts: tuple[int, int], sigma: float,
            rng: np.random.Generator, split: SplitTag) -> Dataset:
    if min(counts) < 0 or sum(counts) < 1:
        raise ValueError(f"invalid class sizes {counts}")
    if sigma < 0:
        raise ValueError(f"noise level must be non-negative, got {sigma}")
    parts, labels = [], []
    for label, n in enumerate(counts):
        t = rng.uniform(0.0, 1.0, size=n)
        parts.append(spiral_curve(t, label, kind))
        labels.append(np.full(n, label, dtype=int))
    points = np.vstack(parts)
    points = points + sigma * rng.standard_normal(points.shape)
    return Dataset(points=points, labels=np.concatenate(labels), split=split)


def spiral4(n_per_class: int, sigma: float = 0.02, rng: np.random.Generator = None,
            split: SplitTag = SplitTag.TRAIN) -> Dataset:
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be at least 1, got {n_per_class}")
    rng = rng if rng is not None else np.random.default_rng()
    return _spiral(DatasetKind.SPIRAL4, (n_per_class, n_per_class), sigma, rng, split)


def spiral2(n_per_class: int, sigma: float = 0.05, rng: np.random.Generator = None,
            split: SplitTag = SplitTag.TRAIN) -> Dataset:
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be at least 1, got {n_per_class}")
    rng = rng if rng is not None else np.random.default_rng()
    return _spiral(DatasetKind.SPIRAL2, (n_per_class, n_per_class), sigma, rng, split)


def make_dataset(kind: DatasetKind, n_points: int, sigma: float,
                 rng: np.random.Generator, split: SplitTag) -> Dataset:
    counts = (n_points - n_points // 2, n_points // 2)
    return _spiral(kind, counts, sigma, rng, split)


def minibatch_size(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ValueError(f"batch fraction must lie in (0, 1], got {fraction}")
    # 0.02 · 100 is 2.0000000000000004 in binary
    return max(1, math.ceil(fraction * n - 1e-9))


def minibatch(dataset: Dataset, fraction: float, rng: np.random.Generator) -> Batch:
    k = minibatch_size(dataset.size, fraction)
    idx = rng.choice(dataset.size, size=k, replace=False)
    return Batch(dataset.points[idx], dataset.labels[idx])


def write_dataset_csv(dataset: Dataset, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x", "y", "label"])
        for (x, y), label in zip(dataset.points, dataset.labels):
            writer.writerow([f"{x:.17g}", f"{y:.17g}", int(label)])
    logging.info(f"Wrote {dataset.size} {dataset.split.value} points to {path}")
