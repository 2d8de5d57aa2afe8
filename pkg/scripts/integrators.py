#!/usr/bin/env python3

import math
from typing import Callable, Optional

import numpy as np

from constraints import (
    circle_a_step,
    circle_cotangency,
    circle_cotangent_project,
    circle_project_oblique,
    circle_project_orthogonal,
    circle_residual,
    clamp_to_radius,
    from_tall,
    orth_cotangency,
    orth_cotangent_project,
    orth_quasi_newton_project,
    orth_residual,
    slack_init,
    sphere_project_rows,
    sphere_residual,
    sphere_slack_init,
    to_tall,
)
from models import (
    CircleGroup,
    CircleProjection,
    ConstraintKind,
    CotangentPair,
    Gradients,
    Hyper,
    LayerConstraint,
    MlpModel,
    OptimizerConfig,
    OrthGroup,
    SphereGroup,
    TrajectoryState,
)


GradProvider = Callable[[MlpModel], tuple[float, Gradients]]

SPLIT_LETTERS = frozenset("ABO")


class SplitError(ValueError):
    pass


def _noise(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape)


def _descend(theta: np.ndarray, g: np.ndarray, h: float, wd: float) -> np.ndarray:
    return theta - h * (g + wd * theta)


def _check_kinds(state: TrajectoryState, allowed: set[ConstraintKind], method: str) -> None:
    for i, lc in enumerate(state.constraints):
        if lc.kind != ConstraintKind.NONE and lc.kind not in allowed:
            raise ValueError(f"{method} cannot handle a {lc.kind.value} constraint on layer {i}")


def sgd_step(state: TrajectoryState, grads: Gradients, hyper: Hyper) -> TrajectoryState:
    for i, layer in enumerate(state.model.layers):
        layer.weight = _descend(layer.weight, grads.weights[i], hyper.h, hyper.weight_decay)
        layer.bias = _descend(layer.bias, grads.biases[i], hyper.h, hyper.weight_decay)
    state.step += 1
    return state


def sgd_momentum_step(state: TrajectoryState, grads: Gradients, hyper: Hyper) -> TrajectoryState:
    """buf ← μ·buf + g, θ ← θ − h·buf; the buffer starts at the first gradient."""
    wd, mu = hyper.weight_decay, hyper.momentum
    first = state.buffers is None
    if first:
        state.buffers = []
    for i, layer in enumerate(state.model.layers):
        g_w = grads.weights[i] + wd * layer.weight
        g_b = grads.biases[i] + wd * layer.bias
        if first:
            buf_w, buf_b = g_w, g_b
            state.buffers.append((buf_w, buf_b))
        else:
            buf_w, buf_b = state.buffers[i]
            buf_w = mu * buf_w + g_w
            buf_b = mu * buf_b + g_b
            state.buffers[i] = (buf_w, buf_b)
        layer.weight = layer.weight - hyper.h * buf_w
        layer.bias = layer.bias - hyper.h * buf_b
    state.step += 1
    return state


def _langevin_update(theta, g, hyper: Hyper, rng, scale: float) -> np.ndarray:
    theta = _descend(theta, g, hyper.h, hyper.weight_decay)
    if hyper.tau > 0:
        theta = theta + scale * _noise(rng, theta.shape)
    return theta


def sgld_step(state: TrajectoryState, grads: Gradients, hyper: Hyper,
              rng: np.random.Generator) -> TrajectoryState:
    scale = math.sqrt(2.0 * hyper.tau * hyper.h)
    for i, layer in enumerate(state.model.layers):
        layer.weight = _langevin_update(layer.weight, grads.weights[i], hyper, rng, scale)
        layer.bias = _langevin_update(layer.bias, grads.biases[i], hyper, rng, scale)
    state.step += 1
    return state


def _overdamped_step(state: TrajectoryState, grads: Gradients, hyper: Hyper,
                     rng: np.random.Generator) -> TrajectoryState:
    h, tau = hyper.h, hyper.tau
    scale = math.sqrt(2.0 * tau * h)
    for i, layer in enumerate(state.model.layers):
        lc = state.constraints[i]
        if lc.kind == ConstraintKind.NONE:
            layer.weight = _langevin_update(layer.weight, grads.weights[i], hyper, rng, scale)
            layer.bias = _langevin_update(layer.bias, grads.biases[i], hyper, rng, scale)
            continue

        if lc.kind == ConstraintKind.CIRCLE:
            theta_bar = layer.weight - h * grads.weights[i]
            if tau > 0:
                theta_bar = theta_bar + scale * _noise(rng, theta_bar.shape)
            layer.bias = _langevin_update(layer.bias, grads.biases[i], hyper, rng, scale)
            xi_bar = lc.xi
            if tau > 0:
                xi_bar = xi_bar + scale * _noise(rng, xi_bar.shape)
            if hyper.circle_projection == CircleProjection.OBLIQUE:
                layer.weight, lc.xi = circle_project_oblique(
                    layer.weight, lc.xi, theta_bar, xi_bar, lc.radius
                )
            else:
                layer.weight, lc.xi = circle_project_orthogonal(theta_bar, xi_bar, lc.radius)

        elif lc.kind == ConstraintKind.ORTH:
            q = to_tall(layer.weight)
            q0 = q - h * to_tall(grads.weights[i])
            if tau > 0:
                q0 = q0 + scale * to_tall(_noise(rng, layer.weight.shape))
            layer.bias = _langevin_update(layer.bias, grads.biases[i], hyper, rng, scale)
            q_new = orth_quasi_newton_project(q, q0, hyper.K, hyper.tol)
            layer.weight = from_tall(q_new, layer.weight.shape).copy()

        elif lc.kind == ConstraintKind.SPHERE:
            if tau > 0:
                raise ValueError("sphere constraints do not support additive noise (tau must be 0)")
            rows = layer.weight - h * grads.weights[i]
            layer.bias = _langevin_update(layer.bias, grads.biases[i], hyper, rng, scale)
            layer.weight, lc.xi = sphere_project_rows(rows, lc.xi, lc.radius)

    state.step += 1
    return state


def ccolod_step(state: TrajectoryState, grads: Gradients, hyper: Hyper,
                rng: np.random.Generator) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.CIRCLE}, "c-colod")
    return _overdamped_step(state, grads, hyper, rng)


def ocolod_step(state: TrajectoryState, grads: Gradients, hyper: Hyper,
                rng: np.random.Generator) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.ORTH}, "o-colod")
    return _overdamped_step(state, grads, hyper, rng)


def scolod_step(state: TrajectoryState, grads: Gradients, hyper: Hyper,
                rng: np.random.Generator) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.SPHERE}, "s-colod")
    return _overdamped_step(state, grads, hyper, rng)


def _a_step(state: TrajectoryState, hyper: Hyper) -> TrajectoryState:
    h = hyper.h
    for i, layer in enumerate(state.model.layers):
        lc = state.constraints[i]
        p_w = state.p_weights[i]
        layer.bias = layer.bias + h * state.p_biases[i]

        if lc.kind == ConstraintKind.CIRCLE:
            pair = CotangentPair(CircleGroup(layer.weight, lc.xi, lc.radius), (p_w, lc.p_xi))
            moved = circle_a_step(pair, h)
            layer.weight, lc.xi = moved.position.theta, moved.position.xi
            state.p_weights[i], lc.p_xi = moved.momentum
        elif lc.kind == ConstraintKind.ORTH:
            q, p = to_tall(layer.weight), to_tall(p_w)
            q0 = q + h * p
            q1 = orth_quasi_newton_project(q, q0, hyper.K, hyper.tol)
            p_bar = p + (q1 - q0) / h
            p_new = orth_cotangent_project(q1, p_bar)
            layer.weight = from_tall(q1, layer.weight.shape).copy()
            state.p_weights[i] = from_tall(p_new, layer.weight.shape).copy()
        else:
            layer.weight = layer.weight + h * p_w
    return state


def _b_step(state: TrajectoryState, grads: Gradients, hyper: Hyper) -> TrajectoryState:
    h, wd = hyper.h, hyper.weight_decay
    for i, layer in enumerate(state.model.layers):
        lc = state.constraints[i]
        state.p_biases[i] = state.p_biases[i] - h * (grads.biases[i] + wd * layer.bias)

        if lc.kind == ConstraintKind.CIRCLE:
            # the slack carries no potential: ∇_ξ V = 0
            p_c_bar = state.p_weights[i] - h * grads.weights[i]
            state.p_weights[i], lc.p_xi = circle_cotangent_project(
                layer.weight, lc.xi, p_c_bar, lc.p_xi, lc.radius
            )
        elif lc.kind == ConstraintKind.ORTH:
            q = to_tall(layer.weight)
            p_bar = to_tall(state.p_weights[i]) - h * to_tall(grads.weights[i])
            state.p_weights[i] = from_tall(orth_cotangent_project(q, p_bar), layer.weight.shape).copy()
        else:
            state.p_weights[i] = state.p_weights[i] - h * (grads.weights[i] + wd * layer.weight)
    return state


def _ou(p: np.ndarray, c: float, s: float, tau: float, rng) -> np.ndarray:
    p = c * p
    if tau > 0:
        p = p + s * _noise(rng, p.shape)
    return p


def _o_step(state: TrajectoryState, hyper: Hyper, rng: np.random.Generator) -> TrajectoryState:
    c = hyper.friction
    s = math.sqrt(hyper.tau * (1.0 - c * c))
    for i, layer in enumerate(state.model.layers):
        lc = state.constraints[i]
        p_w = _ou(state.p_weights[i], c, s, hyper.tau, rng)
        state.p_biases[i] = _ou(state.p_biases[i], c, s, hyper.tau, rng)

        if lc.kind == ConstraintKind.CIRCLE:
            p_xi = _ou(lc.p_xi, c, s, hyper.tau, rng)
            state.p_weights[i], lc.p_xi = circle_cotangent_project(
                layer.weight, lc.xi, p_w, p_xi, lc.radius
            )
        elif lc.kind == ConstraintKind.ORTH:
            q = to_tall(layer.weight)
            state.p_weights[i] = from_tall(orth_cotangent_project(q, to_tall(p_w)), layer.weight.shape).copy()
        else:
            state.p_weights[i] = p_w
    return state


def langevin_a_step(state: TrajectoryState, hyper: Hyper) -> TrajectoryState:
    _check_kinds(state, set(), "unconstrained Langevin")
    return _a_step(state, hyper)


def langevin_b_step(state: TrajectoryState, grads: Gradients, hyper: Hyper) -> TrajectoryState:
    _check_kinds(state, set(), "unconstrained Langevin")
    return _b_step(state, grads, hyper)


def langevin_o_step(state: TrajectoryState, hyper: Hyper, rng: np.random.Generator) -> TrajectoryState:
    _check_kinds(state, set(), "unconstrained Langevin")
    return _o_step(state, hyper, rng)


def ccolud_a_step(state: TrajectoryState, hyper: Hyper) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.CIRCLE}, "c-colud")
    return _a_step(state, hyper)


def ccolud_b_step(state: TrajectoryState, grads: Gradients, hyper: Hyper) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.CIRCLE}, "c-colud")
    return _b_step(state, grads, hyper)


def ccolud_o_step(state: TrajectoryState, hyper: Hyper, rng: np.random.Generator) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.CIRCLE}, "c-colud")
    return _o_step(state, hyper, rng)


def ocolud_a_step(state: TrajectoryState, hyper: Hyper) -> TrajectoryState:
    """RATTLE drift: Q + hP, project, recover P from the displacement, project P."""
    _check_kinds(state, {ConstraintKind.ORTH}, "o-colud")
    return _a_step(state, hyper)


def ocolud_b_step(state: TrajectoryState, grads: Gradients, hyper: Hyper) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.ORTH}, "o-colud")
    return _b_step(state, grads, hyper)


def ocolud_o_step(state: TrajectoryState, hyper: Hyper, rng: np.random.Generator) -> TrajectoryState:
    _check_kinds(state, {ConstraintKind.ORTH}, "o-colud")
    return _o_step(state, hyper, rng)


def validate_split(letters: str) -> None:
    unknown = sorted(set(letters) - SPLIT_LETTERS)
    if unknown:
        raise SplitError(f"unknown splitting letter(s) {', '.join(unknown)} in '{letters}'")


def compose_split(letters: str, state: TrajectoryState, grad_provider: GradProvider,
                  hyper: Hyper, rng: np.random.Generator) -> TrajectoryState:
    validate_split(letters)
    if not letters:
        return state
    for letter in letters:
        if letter == "A":
            _a_step(state, hyper)
        elif letter == "B":
            state.last_loss, grads = grad_provider(state.model)
            _b_step(state, grads, hyper)
        else:
            _o_step(state, hyper, rng)
    state.step += 1
    return state


def _radius_for(radii: list[float], layer: int) -> float:
    return float(radii[0] if len(radii) == 1 else radii[layer])


def init_trajectory(model: MlpModel, optimizer: OptimizerConfig, constrained_layers,
                    grad_provider: Optional[GradProvider] = None) -> TrajectoryState:
    """Attach slacks and momenta to an initialised model.

    Circle layers are clamped to their radius before the slack is set.
    Underdamped momenta start from the full-batch gradient in buffer form,
    p₀ = −h·Π(∇L(θ₀)), when a gradient provider is given, else at zero.
    """
    kind = optimizer.name.constraint
    selected = set(constrained_layers) if kind != ConstraintKind.NONE else set()
    constraints = []
    for i, layer in enumerate(model.layers):
        if i not in selected:
            constraints.append(LayerConstraint())
            continue
        if kind == ConstraintKind.CIRCLE:
            r = _radius_for(optimizer.radii, i)
            layer.weight = clamp_to_radius(layer.weight, r)
            constraints.append(LayerConstraint(kind, r, xi=slack_init(layer.weight, r)))
        elif kind == ConstraintKind.SPHERE:
            r = _radius_for(optimizer.radii, i)
            layer.weight, xi = sphere_slack_init(layer.weight, r)
            constraints.append(LayerConstraint(kind, r, xi=xi))
        else:
            residual = orth_residual(OrthGroup(to_tall(layer.weight)))
            if residual > max(optimizer.tol, 1e-8):
                raise ValueError(
                    f"layer {i} is not orthogonal (residual {residual:.3e}); "
                    f"initialise it with init_orthogonal"
                )
            constraints.append(LayerConstraint(kind))

    state = TrajectoryState(model=model, constraints=constraints)
    if not optimizer.name.underdamped:
        return state

    state.p_weights = [np.zeros_like(layer.weight) for layer in model.layers]
    state.p_biases = [np.zeros_like(layer.bias) for layer in model.layers]
    for lc in constraints:
        if lc.kind == ConstraintKind.CIRCLE:
            lc.p_xi = np.zeros_like(lc.xi)
    if grad_provider is not None:
        state.last_loss, grads = grad_provider(model)
        # a B-step from zero momentum yields exactly −h·Π(∇L)
        _b_step(state, grads, optimizer.hyper())
    return state


def constraint_residuals(state: TrajectoryState) -> tuple[float, float]:
    position, cotangency = 0.0, 0.0
    for i, layer in enumerate(state.model.layers):
        lc = state.constraints[i]
        if lc.kind == ConstraintKind.CIRCLE:
            group = CircleGroup(layer.weight, lc.xi, lc.radius)
            position = max(position, float(np.max(np.abs(circle_residual(group)))))
            if state.underdamped:
                cot = circle_cotangency(layer.weight, lc.xi, state.p_weights[i], lc.p_xi)
                cotangency = max(cotangency, float(np.max(np.abs(cot))))
        elif lc.kind == ConstraintKind.SPHERE:
            group = SphereGroup(layer.weight, lc.xi, lc.radius)
            position = max(position, float(np.max(np.abs(sphere_residual(group)))))
        elif lc.kind == ConstraintKind.ORTH:
            q = to_tall(layer.weight)
            position = max(position, orth_residual(OrthGroup(q)))
            if state.underdamped:
                cotangency = max(cotangency, orth_cotangency(q, to_tall(state.p_weights[i])))
    return position, cotangency
