#!/usr/bin/env python3

import logging

import numpy as np

from core_math import frobenius_norm, matmul
from models import CircleGroup, CotangentPair, Matrix, OrthGroup, SphereGroup


class ConstraintError(Exception):
    pass


class NoProjectionError(ConstraintError):
    pass


class ProjectionDivergedError(ConstraintError):
    pass


def to_tall(weight: Matrix) -> Matrix:
    """Q = W when d_out ≥ d_in, else Wᵀ."""
    return weight if weight.shape[0] >= weight.shape[1] else weight.T


def from_tall(q: Matrix, weight_shape: tuple[int, int]) -> Matrix:
    return q if weight_shape[0] >= weight_shape[1] else q.T


def circle_residual(group: CircleGroup) -> np.ndarray:
    return group.theta ** 2 + group.xi ** 2 - group.radii ** 2


def circle_project_orthogonal(theta_bar, xi_bar, r):
    theta_bar = np.asarray(theta_bar, dtype=float)
    xi_bar = np.asarray(xi_bar, dtype=float)
    at_origin = (theta_bar == 0) & (xi_bar == 0)
    if np.any(at_origin):
        logging.warning(
            f"Circle projection hit the origin at {int(np.count_nonzero(at_origin))} "
            f"coordinate(s); using (r, 0)"
        )
    alpha = np.arctan2(xi_bar, theta_bar)
    return r * np.cos(alpha), r * np.sin(alpha)


def circle_project_oblique(theta_n, xi_n, theta_bar, xi_bar, r):
    """Project q̄ along ∇g(q_n) = 2 q_n, taking the root nearer q_n.

    Solves |q̄ − 2λ q_n|² = r² for λ.
    """
    theta_n = np.asarray(theta_n, dtype=float)
    xi_n = np.asarray(xi_n, dtype=float)
    theta_bar = np.asarray(theta_bar, dtype=float)
    xi_bar = np.asarray(xi_bar, dtype=float)
    r2 = np.broadcast_to(np.asarray(r, dtype=float) ** 2, theta_bar.shape)

    b = theta_bar * theta_n + xi_bar * xi_n
    c = theta_bar ** 2 + xi_bar ** 2 - r2
    disc = b ** 2 - r2 * c
    if np.any(disc < 0):
        raise NoProjectionError(
            f"no real projection for {int(np.count_nonzero(disc < 0))} coordinate(s); "
            f"reduce the step size"
        )
    root = np.sqrt(disc)
    candidates = []
    for lam in ((b - root) / (2 * r2), (b + root) / (2 * r2)):
        theta = theta_bar - 2 * lam * theta_n
        xi = xi_bar - 2 * lam * xi_n
        candidates.append((theta, xi, (theta - theta_n) ** 2 + (xi - xi_n) ** 2))
    (t0, x0, d0), (t1, x1, d1) = candidates
    nearer_first = d0 <= d1
    return np.where(nearer_first, t0, t1), np.where(nearer_first, x0, x1)


def circle_cotangent_project(theta, xi, p_c_bar, p_xi_bar, r):
    r2 = np.asarray(r, dtype=float) ** 2
    normal = (theta * p_c_bar + xi * p_xi_bar) / r2
    return p_c_bar - theta * normal, p_xi_bar - xi * normal


def circle_a_step(pair: CotangentPair, h: float) -> CotangentPair:
    group = pair.position
    p_c, p_xi = pair.momentum
    theta, xi = group.theta, group.xi
    omega = (xi * p_c - theta * p_xi) / group.radii ** 2
    cos_t = np.cos(omega * h)
    sin_t = np.sin(omega * h)
    theta_new = cos_t * theta + sin_t * xi
    xi_new = -sin_t * theta + cos_t * xi
    return CotangentPair(
        position=CircleGroup(theta_new, xi_new, group.radii),
        momentum=(omega * xi_new, -omega * theta_new),
    )


def circle_cotangency(theta, xi, p_c, p_xi) -> np.ndarray:
    return theta * p_c + xi * p_xi


def clamp_to_radius(theta, radii) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    return np.clip(theta, -radii, radii)


def slack_init(theta, radii) -> np.ndarray:
    radii = np.broadcast_to(np.asarray(radii, dtype=float), np.shape(theta))
    clamped = clamp_to_radius(theta, radii)
    return np.sqrt(np.maximum(radii ** 2 - clamped ** 2, 0.0))


def sphere_project(row, xi, r):
    row = np.asarray(row, dtype=float)
    norm = np.sqrt(np.sum(row ** 2) + xi ** 2)
    if norm == 0:
        logging.warning("Sphere projection of a zero vector; using r·e₁")
        out = np.zeros_like(row)
        out[0] = r
        return out, 0.0
    scale = r / norm
    return row * scale, float(xi * scale)


def sphere_project_rows(rows: Matrix, xi: np.ndarray, radii) -> tuple[Matrix, np.ndarray]:
    radii = np.broadcast_to(np.asarray(radii, dtype=float), xi.shape)
    new_rows = np.empty_like(rows)
    new_xi = np.empty_like(xi)
    for i in range(rows.shape[0]):
        new_rows[i], new_xi[i] = sphere_project(rows[i], xi[i], radii[i])
    return new_rows, new_xi


def sphere_residual(group: SphereGroup) -> np.ndarray:
    return np.sum(group.rows ** 2, axis=1) + group.xi ** 2 - group.radii ** 2


def sphere_slack_init(rows: Matrix, radii) -> tuple[Matrix, np.ndarray]:
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (rows.shape[0],))
    norms = np.linalg.norm(rows, axis=1)
    scale = np.where(norms > radii, radii / np.where(norms > 0, norms, 1.0), 1.0)
    rows = rows * scale[:, None]
    xi = np.sqrt(np.maximum(radii ** 2 - np.sum(rows ** 2, axis=1), 0.0))
    return rows, xi


def orth_residual(group: OrthGroup) -> float:
    q = group.Q
    return frobenius_norm(matmul(q.T, q) - np.eye(q.shape[1]))


def orth_quasi_newton_project(q_n: Matrix, q0: Matrix, K: int = 5, tol: float = 1e-8) -> Matrix:
    """Iterate Q ← Q − ½ Q_n (QᵀQ − I) until ‖QᵀQ − I‖_F ≤ tol or K iterations."""
    eye = np.eye(q0.shape[1])
    q = q0
    residual = frobenius_norm(q.T @ q - eye)
    increases = 0
    for k in range(K):
        if residual <= tol:
            break
        lam = q.T @ q - eye
        q = q - 0.5 * (q_n @ lam)
        new_residual = frobenius_norm(q.T @ q - eye)
        increases = increases + 1 if new_residual > residual else 0
        if increases >= 3:
            raise ProjectionDivergedError(
                f"quasi-Newton residual grew for 3 iterations (now {new_residual:.3e}); "
                f"reduce the step size"
            )
        residual = new_residual
    logging.debug(f"quasi-Newton projection stopped at residual {residual:.3e}")
    return q


def orth_cotangent_project(q: Matrix, p_bar: Matrix) -> Matrix:
    return p_bar - 0.5 * (q @ (p_bar.T @ q + q.T @ p_bar))


def orth_cotangency(q: Matrix, p: Matrix) -> float:
    return frobenius_norm(p.T @ q + q.T @ p)
