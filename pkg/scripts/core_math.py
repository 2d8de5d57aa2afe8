#!/usr/bin/env python3

from dataclasses import dataclass

import numpy as np

from models import Matrix


# Sub-stream offsets under the master seed. Changing τ or the test size
# must not shift minibatch order or training data.
STREAM_OFFSETS = {
    "init": 0,
    "batch": 1,
    "noise": 2,
    "train_data": 3,
    "test_data": 4,
}


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape[0]}×{a.shape[1]} by {b.shape[0]}×{b.shape[1]}")
    return a @ b


def frobenius_norm(a: Matrix) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float)))


def standard_normal_matrix(rng: np.random.Generator, rows: int, cols: int) -> Matrix:
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}×{cols}")
    return rng.standard_normal((rows, cols))


def make_rng(seed: int, offset: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(seed, spawn_key=(offset,))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class SeedStreams:
    seed: int
    init: np.random.Generator
    batch: np.random.Generator
    noise: np.random.Generator
    train_data: np.random.Generator
    test_data: np.random.Generator


def make_streams(seed: int) -> SeedStreams:
    return SeedStreams(
        seed=seed,
        **{name: make_rng(seed, offset) for name, offset in STREAM_OFFSETS.items()},
    )
