#!/usr/bin/env python3

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


# Dense float64 array. Weights are stored d_out × d_in.
Matrix = np.ndarray


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"
    SIGMOID = "sigmoid"

class LossKind(str, Enum):
    BCE = "bce"
    CROSS_ENTROPY = "cross-entropy"

class ConstraintKind(str, Enum):
    NONE = "none"
    CIRCLE = "circle"
    SPHERE = "sphere"
    ORTH = "orth"

class OptimizerName(str, Enum):
    SGD = "sgd"
    SGD_M = "sgd-m"
    SGLD = "sgld"
    C_COLOD = "c-colod"
    O_COLOD = "o-colod"
    S_COLOD = "s-colod"
    C_COLUD = "c-colud"
    O_COLUD = "o-colud"

    @property
    def constraint(self) -> ConstraintKind:
        if self in (OptimizerName.C_COLOD, OptimizerName.C_COLUD):
            return ConstraintKind.CIRCLE
        if self in (OptimizerName.O_COLOD, OptimizerName.O_COLUD):
            return ConstraintKind.ORTH
        if self == OptimizerName.S_COLOD:
            return ConstraintKind.SPHERE
        return ConstraintKind.NONE

    @property
    def underdamped(self) -> bool:
        return self in (OptimizerName.C_COLUD, OptimizerName.O_COLUD)

class InitKind(str, Enum):
    STANDARD = "standard"
    ORTHOGONAL = "orthogonal"

class CircleProjection(str, Enum):
    ORTHOGONAL = "orthogonal"
    OBLIQUE = "oblique"

class ExperimentKind(str, Enum):
    TRAIN = "train"
    CURVATURE_STUDY = "curvature-study"
    ORTHO_DEPTH_STUDY = "ortho-depth-study"
    SAMPLE_VERIFY = "sample-verify"
    GRADCHECK = "gradcheck"

class DatasetKind(str, Enum):
    SPIRAL2 = "spiral2"
    SPIRAL4 = "spiral4"

class SplitTag(str, Enum):
    TRAIN = "train"
    TEST = "test"

class Axis(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass
class Layer:
    weight: Matrix
    bias: np.ndarray
    activation: Activation = Activation.RELU

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpModel:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.weight.ndim != 2:
                raise ValueError(f"layer {i}: weight must be 2-D, got shape {layer.weight.shape}")
            if layer.bias.shape != (layer.fan_out,):
                raise ValueError(
                    f"layer {i}: bias shape {layer.bias.shape} does not match {layer.fan_out} outputs"
                )
            if i > 0 and layer.fan_in != self.layers[i - 1].fan_out:
                raise ValueError(
                    f"layer {i}: expects {layer.fan_in} inputs, previous layer emits "
                    f"{self.layers[i - 1].fan_out}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [layer.fan_out for layer in self.layers]

    def copy(self) -> MlpModel:
        return MlpModel([
            Layer(layer.weight.copy(), layer.bias.copy(), layer.activation)
            for layer in self.layers
        ])


@dataclass
class Batch:
    inputs: Matrix
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError(f"batch inputs must be N×d with N ≥ 1, got {self.inputs.shape}")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise ValueError(
                f"{self.labels.shape[0]} labels for {self.inputs.shape[0]} inputs"
            )

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class Gradients:
    weights: list[Matrix]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, model: MlpModel) -> Gradients:
        return cls(
            weights=[np.zeros_like(layer.weight) for layer in model.layers],
            biases=[np.zeros_like(layer.bias) for layer in model.layers],
        )


@dataclass
class CircleGroup:
    """Constrained parameters θᶜ with slacks ξ on θᶜᵢ² + ξᵢ² = rᵢ²."""
    theta: np.ndarray
    xi: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.radii = np.broadcast_to(np.asarray(self.radii, dtype=float), self.theta.shape)
        if self.xi.shape != self.theta.shape:
            raise ValueError(f"slack shape {self.xi.shape} does not match {self.theta.shape}")


@dataclass
class SphereGroup:
    """Weight rows θ^{c,i} with one slack per row on ‖θ^{c,i}‖² + ξᵢ² = rᵢ²."""
    rows: Matrix
    xi: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.radii = np.broadcast_to(np.asarray(self.radii, dtype=float), self.xi.shape)


@dataclass
class OrthGroup:
    """Tall view Q (rows ≥ cols) of a weight matrix with QᵀQ = Iₛ."""
    Q: Matrix
    K: int = 5
    tol: float = 1e-8

    @property
    def s(self) -> int:
        return self.Q.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.s * (self.s + 1) // 2


@dataclass
class CotangentPair:
    position: CircleGroup | OrthGroup
    # (pᶜ, pξ) for a circle group, P for an orth group
    momentum: tuple[np.ndarray, np.ndarray] | Matrix


@dataclass
class Hyper:
    h: float
    gamma: float = 0.0
    tau: float = 0.0
    momentum: float = 0.0
    weight_decay: float = 0.0
    split: str = "ABO"
    K: int = 5
    tol: float = 1e-8
    circle_projection: CircleProjection = CircleProjection.ORTHOGONAL

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step size must be positive, got {self.h}")
        if self.gamma < 0 or self.tau < 0:
            raise ValueError("gamma and tau must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    @property
    def friction(self) -> float:
        return math.exp(-self.gamma * self.h)


@dataclass
class LayerConstraint:
    kind: ConstraintKind = ConstraintKind.NONE
    radius: float = 0.0
    xi: Optional[np.ndarray] = None
    p_xi: Optional[np.ndarray] = None

    @property
    def constrained(self) -> bool:
        return self.kind != ConstraintKind.NONE


@dataclass
class TrajectoryState:
    model: MlpModel
    constraints: list[LayerConstraint]
    p_weights: Optional[list[Matrix]] = None
    p_biases: Optional[list[np.ndarray]] = None
    buffers: Optional[list[tuple[Matrix, np.ndarray]]] = None
    step: int = 0
    last_loss: Optional[float] = None

    @property
    def underdamped(self) -> bool:
        return self.p_weights is not None


@dataclass
class Dataset:
    points: Matrix
    labels: np.ndarray
    split: SplitTag = SplitTag.TRAIN

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def as_batch(self) -> Batch:
        return Batch(self.points, self.labels)


@dataclass
class Grid:
    extent: tuple[float, float, float, float]
    values: Matrix

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def xs(self) -> np.ndarray:
        xmin, xmax = self.extent[0], self.extent[1]
        step = (xmax - xmin) / self.values.shape[1]
        return xmin + (np.arange(self.values.shape[1]) + 0.5) * step

    @property
    def ys(self) -> np.ndarray:
        ymin, ymax = self.extent[2], self.extent[3]
        step = (ymax - ymin) / self.values.shape[0]
        return ymin + (np.arange(self.values.shape[0]) + 0.5) * step


@dataclass
class Polyline:
    points: Matrix
    closed: bool = False

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class CurvatureStats:
    mean: float
    std: float
    max: float
    n_points: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "max": self.max, "n_points": self.n_points}


@dataclass
class AngleHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def density(self) -> np.ndarray:
        return self.probabilities / np.diff(self.edges)


@dataclass
class MetricsRecord:
    seed: int
    epoch: int
    train_loss: float
    test_loss: float
    test_acc: float
    max_residual: float = 0.0
    max_abs_weight: float = 0.0
    wall_ms: float = 0.0
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "test_loss": self.test_loss,
            "test_acc": self.test_acc,
            "max_residual": self.max_residual,
            "max_abs_weight": self.max_abs_weight,
            "wall_ms": self.wall_ms,
            "status": self.status,
        }


@dataclass
class SeedResult:
    variant: str
    seed: int
    records: list[MetricsRecord] = field(default_factory=list)
    model: Optional[MlpModel] = None
    error: Optional[str] = None
    wall_seconds: float = 0.0
    depth: Optional[int] = None

    @property
    def success(self) -> bool:
        return self.error is None

    @property
    def status(self) -> str:
        return "ok" if self.error is None else f"failed:{self.error}"

    @property
    def final(self) -> Optional[MetricsRecord]:
        ok = [r for r in self.records if r.ok]
        return ok[-1] if ok else None


@dataclass
class DataConfig:
    dataset: DatasetKind = DatasetKind.SPIRAL2
    n_train: int = 100
    n_test: int = 2000
    sigma: Optional[float] = None
    batch_fraction: float = 0.02
    export: bool = False

    @property
    def noise(self) -> float:
        if self.sigma is not None:
            return self.sigma
        return 0.05 if self.dataset == DatasetKind.SPIRAL2 else 0.02


@dataclass
class ModelConfig:
    hidden: list[int] = field(default_factory=lambda: [500])
    activation: Activation = Activation.RELU
    loss: LossKind = LossKind.BCE
    init: InitKind = InitKind.STANDARD

    def widths(self, input_dim: int = 2) -> list[int]:
        out = 1 if self.loss == LossKind.BCE else 2
        return [input_dim] + list(self.hidden) + [out]


@dataclass
class OptimizerConfig:
    name: OptimizerName = OptimizerName.SGD
    h: float = 0.05
    gamma: float = 1.0
    tau: float = 0.0
    momentum: float = 0.0
    weight_decay: float = 0.0
    radii: list[float] = field(default_factory=list)
    constrained_layers: Optional[list[int]] = None
    K: int = 5
    tol: float = 1e-8
    split: str = "ABO"
    circle_projection: CircleProjection = CircleProjection.ORTHOGONAL
    orth_penalty: float = 0.0
    init: Optional[InitKind] = None

    def hyper(self) -> Hyper:
        return Hyper(
            h=self.h,
            gamma=self.gamma,
            tau=self.tau,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            split=self.split,
            K=self.K,
            tol=self.tol,
            circle_projection=self.circle_projection,
        )


@dataclass
class Variant:
    label: str
    optimizer: OptimizerConfig


@dataclass
class StudyConfig:
    depths: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8])
    width: int = 100
    grid_resolution: int = 400
    grid_extent: list[float] = field(default_factory=lambda: [-2.0, 2.0, -2.0, 2.0])
    level: float = 0.5
    cross_section_points: int = 401


@dataclass
class SamplerConfig:
    beta: float = 1.0
    radius: float = 1.0
    h: float = 0.01
    steps: int = 6000
    burn_in: Optional[int] = None
    chains: int = 200
    bins: int = 32
    slope: float = 1.0
    l1_threshold: float = 0.02
    uniform_sigmas: float = 4.0
    ergodic_sigmas: float = 3.0
    clt_t0: int = 2000
    clt_chains: int = 400
    clt_tolerance: float = 0.5
    orth_rows: int = 8
    orth_cols: int = 4
    orth_steps: int = 100_000
    orth_h: float = 0.05
    orth_gamma: float = 1.0
    orth_tau: float = 1e-4
    orth_threshold: float = 1e-7

    @property
    def burn(self) -> int:
        return self.burn_in if self.burn_in is not None else self.steps // 10


@dataclass
class GradcheckConfig:
    widths: list[int] = field(default_factory=lambda: [2, 8, 8, 1])
    activation: Activation = Activation.RELU
    batch: int = 16
    trials: int = 50
    eps: float = 1e-6
    threshold: float = 1e-4
    zero_weights: bool = False
    corrupt: bool = False


@dataclass
class GradcheckReport:
    max_rel_error: float
    checked: int
    skipped: int
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.threshold

    def to_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "checked": self.checked,
            "skipped": self.skipped,
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass
class RunConfig:
    experiment: ExperimentKind = ExperimentKind.TRAIN
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "results"
    threads: int = 1
    epochs: int = 1000
    eval_every: int = 100
    record_wall_time: bool = False
    export_grid: bool = False
    export_gradients: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    variants: list[Variant] = field(default_factory=list)
    study: StudyConfig = field(default_factory=StudyConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    source: Optional[str] = None
