#!/usr/bin/env python3

import logging
from collections import defaultdict
from typing import Optional

import numpy as np
from scipy.special import softmax

from models import (
    Axis,
    CurvatureStats,
    Dataset,
    Grid,
    LossKind,
    MlpModel,
    Polyline,
)
from nn import forward, loss


MIN_CONTOUR_POINTS = 10

# Corners: 0=(i,j) 1=(i+1,j) 2=(i+1,j+1) 3=(i,j+1); edges: 0 bottom, 1 right, 2 top, 3 left.
EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
CORNER_EDGES = ((0, 3), (0, 1), (1, 2), (2, 3))


def evaluate(model: MlpModel, dataset: Dataset, kind: LossKind = LossKind.BCE) -> tuple[float, float]:
    """Mean loss and accuracy; binary predictions use p ≥ 0.5 → class 1."""
    batch = dataset.as_batch()
    output = forward(model, batch.inputs)
    if kind == LossKind.BCE:
        predicted = (output[:, 0] >= 0.5).astype(int)
    else:
        predicted = np.argmax(output, axis=1)
    accuracy = float(np.mean(predicted == batch.labels.astype(int)))
    return loss(model, batch, kind), accuracy


def scalar_prediction(model: MlpModel, points: np.ndarray) -> np.ndarray:
    output = forward(model, points)
    if output.shape[1] == 1:
        return output[:, 0]
    return softmax(output, axis=1)[:, 1]


def prediction_grid(model: MlpModel, extent, n: int) -> Grid:
    if n < 2:
        raise ValueError(f"grid resolution must be at least 2, got {n}")
    grid = Grid(extent=tuple(float(e) for e in extent), values=np.zeros((n, n)))
    xx, yy = np.meshgrid(grid.xs, grid.ys)
    points = np.column_stack([xx.ravel(), yy.ravel()])
    grid.values = scalar_prediction(model, points).reshape(n, n)
    return grid


def _lerp(p0, p1, v0, v1, level):
    t = (level - v0) / (v1 - v0)
    t = min(max(t, 0.0), 1.0)
    return p0 + t * (p1 - p0)


def _cell_segments(case: int, centre_high: bool) -> list[tuple[int, int]]:
    bits = [(case >> k) & 1 for k in range(4)]
    crossed = [e for e, (a, b) in enumerate(EDGE_CORNERS) if bits[a] != bits[b]]
    if len(crossed) == 2:
        return [tuple(crossed)]
    # saddle: cut off the corners that disagree with the cell centre
    return [CORNER_EDGES[c] for c in range(4) if bits[c] != int(centre_high)]


def _chain(adjacency: dict) -> list[tuple[list, bool]]:
    visited = set()
    chains = []

    def walk(start):
        path = [start]
        visited.add(start)
        prev, current = None, start
        while True:
            nxt = [e for e in adjacency[current] if e != prev and e not in visited]
            if not nxt:
                closed = len(path) > 2 and start in adjacency[current] and prev is not None
                return path, closed
            prev, current = current, nxt[0]
            path.append(current)
            visited.add(current)

    for edge, nbrs in adjacency.items():
        if len(nbrs) == 1 and edge not in visited:
            chains.append(walk(edge))
    for edge in adjacency:
        if edge not in visited:
            chains.append(walk(edge))
    return chains


def marching_squares(grid: Grid, level: float = 0.5) -> list[Polyline]:
    v = grid.values
    xs, ys = grid.xs, grid.ys
    high = v >= level
    case = (high[:-1, :-1].astype(int)
            | high[:-1, 1:].astype(int) << 1
            | high[1:, 1:].astype(int) << 2
            | high[1:, :-1].astype(int) << 3)

    adjacency = defaultdict(list)
    points = {}

    def edge_point(j, i, e):
        # edge ids are shared by neighbouring cells
        (ca, cb) = EDGE_CORNERS[e]
        offsets = ((0, 0), (0, 1), (1, 1), (1, 0))  # (dj, di) per corner
        (ja, ia), (jb, ib) = [(j + offsets[c][0], i + offsets[c][1]) for c in (ca, cb)]
        key = (ja, ia, jb, ib)
        if key not in points:
            pa = np.array([xs[ia], ys[ja]])
            pb = np.array([xs[ib], ys[jb]])
            points[key] = _lerp(pa, pb, v[ja, ia], v[jb, ib], level)
        return key

    for j, i in zip(*np.nonzero((case != 0) & (case != 15))):
        c = int(case[j, i])
        centre_high = bool(np.mean(v[j:j + 2, i:i + 2]) >= level)
        for e0, e1 in _cell_segments(c, centre_high):
            a, b = edge_point(j, i, e0), edge_point(j, i, e1)
            adjacency[a].append(b)
            adjacency[b].append(a)

    polylines = []
    for path, closed in _chain(adjacency):
        pts = [points[k] for k in path]
        kept = [pts[0]]
        for p in pts[1:]:
            if not np.array_equal(p, kept[-1]):
                kept.append(p)
        if closed and len(kept) > 1 and np.array_equal(kept[0], kept[-1]):
            kept.pop()
        polylines.append(Polyline(points=np.array(kept), closed=closed))
    logging.debug(f"Marching squares found {len(polylines)} contour(s) at level {level}")
    return polylines


def _central(values: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        return (np.roll(values, -1) - np.roll(values, 1)) / 2.0
    return np.gradient(values, edge_order=2)


def curvature_values(polyline: Polyline) -> np.ndarray:
    """|x″y′ − x′y″|/(x′² + y′²)^{3/2} with the point index as parameter."""
    if len(polyline) < 5:
        raise ValueError(f"curvature needs at least 5 points, got {len(polyline)}")
    x, y = polyline.points[:, 0], polyline.points[:, 1]
    dx, dy = _central(x, polyline.closed), _central(y, polyline.closed)
    ddx, ddy = _central(dx, polyline.closed), _central(dy, polyline.closed)
    if not polyline.closed:
        dx, dy, ddx, ddy = dx[1:-1], dy[1:-1], ddx[1:-1], ddy[1:-1]

    speed2 = dx ** 2 + dy ** 2
    scale = max(float(np.ptp(x)), float(np.ptp(y)), 1.0)
    degenerate = speed2 <= (np.finfo(float).eps * scale) ** 2
    if np.any(degenerate):
        logging.warning(f"Skipping {int(np.count_nonzero(degenerate))} degenerate contour point(s)")
    ok = ~degenerate
    return np.abs(ddx[ok] * dy[ok] - dx[ok] * ddy[ok]) / speed2[ok] ** 1.5


def polyline_curvature(polyline: Polyline) -> CurvatureStats:
    kappa = curvature_values(polyline)
    if kappa.size == 0:
        return CurvatureStats(mean=0.0, std=0.0, max=0.0, n_points=0)
    return CurvatureStats(
        mean=float(np.mean(kappa)),
        std=float(np.std(kappa)),
        max=float(np.max(kappa)),
        n_points=int(kappa.size),
    )


def longest_contour(polylines: list[Polyline]) -> Optional[Polyline]:
    candidates = [p for p in polylines if len(p) >= MIN_CONTOUR_POINTS]
    if not candidates:
        return None
    return max(candidates, key=len)


def boundary_curvature(grid: Grid, level: float = 0.5) -> tuple[Optional[Polyline], Optional[CurvatureStats]]:
    contour = longest_contour(marching_squares(grid, level))
    if contour is None:
        logging.warning("No decision boundary long enough for curvature statistics")
        return None, None
    return contour, polyline_curvature(contour)


def cross_section_coordinates(extent, n: int, axis: Axis) -> np.ndarray:
    lo, hi = (extent[0], extent[1]) if axis == Axis.HORIZONTAL else (extent[2], extent[3])
    return np.linspace(lo, hi, n)


def cross_section_gradients(model: MlpModel, axis: Axis, n: int,
                            extent=(-2.0, 2.0, -2.0, 2.0)) -> np.ndarray:
    """d(prediction)/d(coordinate) along y = 0 (horizontal) or x = 0 (vertical)."""
    if n < 3:
        raise ValueError(f"cross-section needs at least 3 points, got {n}")
    coords = cross_section_coordinates(extent, n, axis)
    zeros = np.zeros(n)
    points = np.column_stack([coords, zeros] if axis == Axis.HORIZONTAL else [zeros, coords])
    return np.gradient(scalar_prediction(model, points), coords, edge_order=2)


def max_abs_weight(model: MlpModel, layer: int = -1) -> float:
    if not -model.depth <= layer < model.depth:
        raise ValueError(f"layer index {layer} out of range for a {model.depth}-layer model")
    return float(np.max(np.abs(model.layers[layer].weight)))
