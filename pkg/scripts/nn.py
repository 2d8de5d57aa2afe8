#!/usr/bin/env python3

import logging
from typing import Optional

import numpy as np
from scipy.special import expit, log_softmax, softmax

from constraints import from_tall, to_tall
from core_math import standard_normal_matrix
from models import (
    Activation,
    Batch,
    Gradients,
    GradcheckReport,
    Layer,
    LossKind,
    Matrix,
    MlpModel,
)


BCE_EPS = 1e-12


def build_model(widths: list[int], activation: Activation = Activation.RELU,
                loss: LossKind = LossKind.BCE) -> MlpModel:
    if len(widths) < 2:
        raise ValueError(f"need at least input and output widths, got {widths}")
    head = Activation.SIGMOID if loss == LossKind.BCE else Activation.IDENTITY
    layers = []
    for i, (d_in, d_out) in enumerate(zip(widths[:-1], widths[1:])):
        act = head if i == len(widths) - 2 else activation
        layers.append(Layer(np.zeros((d_out, d_in)), np.zeros(d_out), act))
    return MlpModel(layers)


def _activate(a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation == Activation.RELU:
        return np.maximum(a, 0.0)
    if activation == Activation.SIGMOID:
        return expit(a)
    return a


def _derivative(a: np.ndarray, z: np.ndarray, activation: Activation) -> np.ndarray:
    # ReLU'(0) is taken as 0.
    if activation == Activation.RELU:
        return (a > 0).astype(float)
    if activation == Activation.SIGMOID:
        return z * (1.0 - z)
    return np.ones_like(a)


def _forward_cache(model: MlpModel, inputs: Matrix) -> tuple[list[Matrix], list[Matrix]]:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise ValueError(
            f"inputs of shape {inputs.shape} do not match model input dimension {model.input_dim}"
        )
    pre, post = [], [inputs]
    for layer in model.layers:
        a = post[-1] @ layer.weight.T + layer.bias
        pre.append(a)
        post.append(_activate(a, layer.activation))
    return pre, post


def forward(model: MlpModel, inputs: Matrix) -> Matrix:
    return _forward_cache(model, inputs)[1][-1]


def _check_head(model: MlpModel, kind: LossKind) -> None:
    head = model.layers[-1].activation
    if kind == LossKind.BCE and (head != Activation.SIGMOID or model.output_dim != 1):
        raise ValueError("BCE loss needs a single sigmoid output")
    if kind == LossKind.CROSS_ENTROPY and head != Activation.IDENTITY:
        raise ValueError("cross-entropy loss needs an identity (logit) head")


def _loss_from_output(output: Matrix, labels: np.ndarray, kind: LossKind) -> float:
    if kind == LossKind.BCE:
        p = np.clip(output[:, 0], BCE_EPS, 1.0 - BCE_EPS)
        y = labels.astype(float)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    logp = log_softmax(output, axis=1)
    return float(-np.mean(logp[np.arange(output.shape[0]), labels.astype(int)]))


def loss(model: MlpModel, batch: Batch, kind: LossKind = LossKind.BCE) -> float:
    _check_head(model, kind)
    return _loss_from_output(forward(model, batch.inputs), batch.labels, kind)


def backprop(model: MlpModel, batch: Batch,
             kind: LossKind = LossKind.BCE) -> tuple[float, Gradients]:
    _check_head(model, kind)
    pre, post = _forward_cache(model, batch.inputs)
    output = post[-1]
    value = _loss_from_output(output, batch.labels, kind)
    n = batch.size

    # sigmoid+BCE and softmax+CE share the form (prediction − target)/N
    if kind == LossKind.BCE:
        delta = (output[:, 0] - batch.labels.astype(float))[:, None] / n
    else:
        delta = softmax(output, axis=1)
        delta[np.arange(n), batch.labels.astype(int)] -= 1.0
        delta /= n

    grads = Gradients.zeros_like(model)
    for i in range(model.depth - 1, -1, -1):
        grads.weights[i] = delta.T @ post[i]
        grads.biases[i] = delta.sum(axis=0)
        if i > 0:
            below = model.layers[i - 1]
            delta = (delta @ model.layers[i].weight) * _derivative(pre[i - 1], post[i], below.activation)
    return value, grads


def input_gradient(model: MlpModel, x) -> np.ndarray:
    """∇ₓp(x) as the product F^L W^L ⋯ F¹ W¹ of layer Jacobians."""
    if model.output_dim != 1:
        raise ValueError("input gradient is defined for scalar-output models only")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.input_dim:
        raise ValueError(f"point has dimension {x.shape[0]}, model expects {model.input_dim}")
    jac = np.eye(model.input_dim)
    h = x
    for layer in model.layers:
        a = layer.weight @ h + layer.bias
        z = _activate(a, layer.activation)
        jac = _derivative(a, z, layer.activation)[:, None] * (layer.weight @ jac)
        h = z
    return jac[0]


def init_standard(rng: np.random.Generator, model: MlpModel) -> MlpModel:
    for layer in model.layers:
        bound = 1.0 / np.sqrt(layer.fan_in)
        layer.weight = rng.uniform(-bound, bound, size=layer.weight.shape)
        layer.bias = rng.uniform(-bound, bound, size=layer.bias.shape)
    return model


def init_orthogonal(rng: np.random.Generator, model: MlpModel, layer_set) -> MlpModel:
    for i in sorted(set(layer_set)):
        if not 0 <= i < model.depth:
            raise ValueError(f"layer index {i} out of range for a {model.depth}-layer model")
        layer = model.layers[i]
        rows, cols = max(layer.weight.shape), min(layer.weight.shape)
        q, r = np.linalg.qr(standard_normal_matrix(rng, rows, cols))
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        layer.weight = from_tall(q * signs, layer.weight.shape).copy()
    return model


def interior_layers(model: MlpModel) -> list[int]:
    return list(range(1, model.depth - 1))


def orthogonality_penalty(model: MlpModel, layers, strength: float) -> tuple[float, Gradients]:
    """λ Σ ‖QᵀQ − I‖²_F over the given layers, with gradient 4λ Q(QᵀQ − I)."""
    grads = Gradients.zeros_like(model)
    value = 0.0
    for i in layers:
        weight = model.layers[i].weight
        q = to_tall(weight)
        lam = q.T @ q - np.eye(q.shape[1])
        value += strength * float(np.sum(lam ** 2))
        grads.weights[i] = from_tall(4.0 * strength * (q @ lam), weight.shape)
    return value, grads


def add_gradients(a: Gradients, b: Gradients) -> Gradients:
    return Gradients(
        weights=[x + y for x, y in zip(a.weights, b.weights)],
        biases=[x + y for x, y in zip(a.biases, b.biases)],
    )


def _activation_pattern(model: MlpModel, inputs: Matrix) -> list[np.ndarray]:
    pre, _ = _forward_cache(model, inputs)
    return [a > 0 for a, layer in zip(pre, model.layers) if layer.activation == Activation.RELU]


def _same_pattern(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def relative_error(analytic: float, numeric: float, floor: float = 1e-4) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(model: MlpModel, batch: Batch, kind: LossKind = LossKind.BCE,
                            eps: float = 1e-6, grads: Optional[Gradients] = None,
                            threshold: float = 1e-4) -> GradcheckReport:
    if grads is None:
        _, grads = backprop(model, batch, kind)
    base_pattern = _activation_pattern(model, batch.inputs)
    worst, checked, skipped = 0.0, 0, 0

    for i, layer in enumerate(model.layers):
        for param, grad in ((layer.weight, grads.weights[i]), (layer.bias, grads.biases[i])):
            for idx in np.ndindex(param.shape):
                original = param[idx]
                param[idx] = original + eps
                plus = loss(model, batch, kind)
                plus_pattern = _activation_pattern(model, batch.inputs)
                param[idx] = original - eps
                minus = loss(model, batch, kind)
                minus_pattern = _activation_pattern(model, batch.inputs)
                param[idx] = original

                if not (_same_pattern(base_pattern, plus_pattern)
                        and _same_pattern(base_pattern, minus_pattern)):
                    skipped += 1
                    continue
                numeric = (plus - minus) / (2 * eps)
                worst = max(worst, relative_error(float(grad[idx]), numeric))
                checked += 1

    logging.debug(f"Gradient check: {checked} entries checked, {skipped} skipped at ReLU kinks")
    return GradcheckReport(max_rel_error=worst, checked=checked, skipped=skipped, threshold=threshold)
