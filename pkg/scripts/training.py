#!/usr/bin/env python3

import logging
import math
import time
from typing import Callable, Optional

import numpy as np

from constraints import ConstraintError, NoProjectionError, ProjectionDivergedError
from core_math import SeedStreams, make_streams
from data import make_dataset, minibatch, minibatch_size
from integrators import (
    GradProvider,
    ccolod_step,
    compose_split,
    constraint_residuals,
    init_trajectory,
    ocolod_step,
    scolod_step,
    sgd_momentum_step,
    sgd_step,
    sgld_step,
)
from metrics import evaluate, max_abs_weight
from models import (
    Batch,
    ConstraintKind,
    Dataset,
    InitKind,
    LossKind,
    MetricsRecord,
    MlpModel,
    OptimizerConfig,
    OptimizerName,
    RunConfig,
    SeedResult,
    SplitTag,
    TrajectoryState,
    Variant,
)
from nn import (
    add_gradients,
    backprop,
    build_model,
    init_orthogonal,
    init_standard,
    interior_layers,
    orthogonality_penalty,
)


class NonFiniteLossError(ArithmeticError):
    pass


FAILURE_REASONS = {
    NoProjectionError: "no-projection",
    ProjectionDivergedError: "projection-diverged",
    NonFiniteLossError: "non-finite-loss",
}

STEPPERS = {
    OptimizerName.SGD: lambda state, grads, hyper, rng: sgd_step(state, grads, hyper),
    OptimizerName.SGD_M: lambda state, grads, hyper, rng: sgd_momentum_step(state, grads, hyper),
    OptimizerName.SGLD: sgld_step,
    OptimizerName.C_COLOD: ccolod_step,
    OptimizerName.O_COLOD: ocolod_step,
    OptimizerName.S_COLOD: scolod_step,
}


def constrained_layer_set(model: MlpModel, optimizer: OptimizerConfig) -> list[int]:
    if optimizer.constrained_layers is not None:
        return [i for i in optimizer.constrained_layers if i < model.depth]
    kind = optimizer.name.constraint
    if kind == ConstraintKind.NONE:
        return []
    if kind == ConstraintKind.ORTH:
        return interior_layers(model)
    return list(range(model.depth))


def orthogonal_layer_set(model: MlpModel, optimizer: OptimizerConfig) -> list[int]:
    if optimizer.constrained_layers is not None:
        return [i for i in optimizer.constrained_layers if i < model.depth]
    return interior_layers(model)


def make_datasets(config: RunConfig, streams: SeedStreams) -> tuple[Dataset, Dataset]:
    data = config.data
    train = make_dataset(data.dataset, data.n_train, data.noise, streams.train_data, SplitTag.TRAIN)
    test = make_dataset(data.dataset, data.n_test, data.noise, streams.test_data, SplitTag.TEST)
    return train, test


def make_grad_provider(next_batch: Callable[[], Batch], kind: LossKind,
                       penalty_layers: list[int], strength: float) -> GradProvider:
    def provider(model: MlpModel):
        value, grads = backprop(model, next_batch(), kind)
        if strength > 0 and penalty_layers:
            penalty, penalty_grads = orthogonality_penalty(model, penalty_layers, strength)
            value += penalty
            grads = add_gradients(grads, penalty_grads)
        return value, grads
    return provider


def initial_model(config: RunConfig, optimizer: OptimizerConfig, streams: SeedStreams,
                  hidden: Optional[list[int]] = None) -> MlpModel:
    widths = config.model.widths() if hidden is None else [2] + list(hidden) + [config.model.widths()[-1]]
    model = build_model(widths, config.model.activation, config.model.loss)
    init_standard(streams.init, model)
    init = optimizer.init or config.model.init
    if optimizer.name.constraint == ConstraintKind.ORTH:
        init_orthogonal(streams.init, model, constrained_layer_set(model, optimizer))
    elif init == InitKind.ORTHOGONAL:
        init_orthogonal(streams.init, model, orthogonal_layer_set(model, optimizer))
    return model


def take_step(state: TrajectoryState, optimizer: OptimizerConfig, provider: GradProvider,
              hyper, rng: np.random.Generator) -> TrajectoryState:
    if optimizer.name.underdamped:
        compose_split(hyper.split, state, provider, hyper, rng)
    else:
        state.last_loss, grads = provider(state.model)
        STEPPERS[optimizer.name](state, grads, hyper, rng)
    if state.last_loss is not None and not math.isfinite(state.last_loss):
        raise NonFiniteLossError(f"minibatch loss became {state.last_loss} at step {state.step}")
    return state


def _record(state: TrajectoryState, seed: int, epoch: int, train: Dataset, test: Dataset,
            kind: LossKind, wall_ms: float) -> MetricsRecord:
    train_loss, _ = evaluate(state.model, train, kind)
    test_loss, test_acc = evaluate(state.model, test, kind)
    if not math.isfinite(train_loss):
        raise NonFiniteLossError(f"training loss became {train_loss} at epoch {epoch}")
    position, cotangency = constraint_residuals(state)
    return MetricsRecord(
        seed=seed,
        epoch=epoch,
        train_loss=train_loss,
        test_loss=test_loss,
        test_acc=test_acc,
        max_residual=max(position, cotangency),
        max_abs_weight=max_abs_weight(state.model, -1),
        wall_ms=wall_ms,
    )


def train_seed(config: RunConfig, variant: Variant, seed: int,
               hidden: Optional[list[int]] = None) -> SeedResult:
    optimizer = variant.optimizer
    hyper = optimizer.hyper()
    kind = config.model.loss
    streams = make_streams(seed)
    train, test = make_datasets(config, streams)
    result = SeedResult(variant=variant.label, seed=seed, depth=len(hidden) if hidden is not None else None)
    started = time.perf_counter()

    def elapsed_ms() -> float:
        return (time.perf_counter() - started) * 1000.0 if config.record_wall_time else 0.0

    epoch = 0
    try:
        model = initial_model(config, optimizer, streams, hidden)
        layers = constrained_layer_set(model, optimizer)
        penalty_layers = orthogonal_layer_set(model, optimizer)
        strength = optimizer.orth_penalty if optimizer.name.constraint == ConstraintKind.NONE else 0.0

        full_batch = make_grad_provider(train.as_batch, kind, penalty_layers, strength)
        provider = make_grad_provider(
            lambda: minibatch(train, config.data.batch_fraction, streams.batch),
            kind, penalty_layers, strength,
        )
        state = init_trajectory(model, optimizer, layers,
                                full_batch if optimizer.name.underdamped else None)

        steps_per_epoch = math.ceil(train.size / minibatch_size(train.size, config.data.batch_fraction))
        result.records.append(_record(state, seed, 0, train, test, kind, elapsed_ms()))
        for epoch in range(1, config.epochs + 1):
            for _ in range(steps_per_epoch):
                take_step(state, optimizer, provider, hyper, streams.noise)
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                result.records.append(_record(state, seed, epoch, train, test, kind, elapsed_ms()))
        result.model = state.model
    except (ConstraintError, NonFiniteLossError) as e:
        reason = FAILURE_REASONS.get(type(e), "constraint-error")
        logging.warning(f"[{variant.label}] seed {seed} failed at epoch {epoch}: {e}")
        result.error = reason
        result.records.append(MetricsRecord(
            seed=seed, epoch=epoch,
            train_loss=float("nan"), test_loss=float("nan"), test_acc=float("nan"),
            max_residual=float("nan"), max_abs_weight=float("nan"),
            wall_ms=elapsed_ms(), status=f"failed:{reason}",
        ))

    result.wall_seconds = time.perf_counter() - started
    final = result.final
    if result.success and final is not None:
        logging.info(
            f"[{variant.label}] seed {seed}: test acc {final.test_acc:.4f}, "
            f"test loss {final.test_loss:.4f} after {config.epochs} epochs"
        )
    return result
