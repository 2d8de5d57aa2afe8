#!/usr/bin/env python3

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from core_math import standard_normal_matrix
from integrators import ccolod_step, compose_split, constraint_residuals
from models import (
    Activation,
    AngleHistogram,
    ConstraintKind,
    Gradients,
    Hyper,
    Layer,
    LayerConstraint,
    MlpModel,
    SamplerConfig,
    TrajectoryState,
)
from nn import init_orthogonal


QUADRATURE_NODES = 10_000

Observable = Callable[[np.ndarray], np.ndarray]


@dataclass
class ErgodicResult:
    running: np.ndarray          # chains × recorded steps
    final: float
    standard_error: float
    autocorrelation_time: float


@dataclass
class CltResult:
    variance_t0: float
    variance_4t0: float

    @property
    def ratio(self) -> float:
        return self.variance_4t0 / self.variance_t0


@dataclass
class DriftSeries:
    steps: np.ndarray
    position: np.ndarray
    cotangency: np.ndarray

    @property
    def slope(self) -> float:
        if self.steps.size < 2:
            return 0.0
        return float(np.polyfit(self.steps, self.position, 1)[0])


def _circle_state(r: float, rng: np.random.Generator, chains: int) -> TrajectoryState:
    # one 1 × chains circle layer: every weight entry is an independent chain
    start = rng.uniform(-np.pi, np.pi, size=(1, chains))
    model = MlpModel([Layer(r * np.cos(start), np.zeros(1), Activation.IDENTITY)])
    return TrajectoryState(
        model=model,
        constraints=[LayerConstraint(ConstraintKind.CIRCLE, r, xi=r * np.sin(start))],
    )


def _circle_chains(beta: float, r: float, h: float, steps: int, burn_in: int,
                   rng: np.random.Generator, chains: int, slope: float):
    """Yield post-burn-in angles of c-CoLod chains on V = slope·q₁, one array per step."""
    if not (beta > 0 and r > 0 and h > 0):
        raise ValueError("beta, r and h must be positive")
    if steps <= burn_in:
        raise ValueError(f"steps ({steps}) must exceed burn-in ({burn_in})")
    state = _circle_state(r, rng, chains)
    grads = Gradients([np.full((1, chains), float(slope))], [np.zeros(1)])
    hyper = Hyper(h=h, tau=1.0 / beta)
    for step in range(steps):
        ccolod_step(state, grads, hyper, rng)
        if step >= burn_in:
            yield np.arctan2(state.constraints[0].xi[0], state.model.layers[0].weight[0])


def sample_circle_potential(beta: float, r: float, h: float, steps: int, burn_in: int,
                            rng: np.random.Generator, bins: int = 32, chains: int = 1,
                            slope: float = 1.0) -> AngleHistogram:
    """Histogram of post-burn-in angles under V = slope·q₁ at temperature 1/β."""
    edges = np.linspace(-np.pi, np.pi, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    for alpha in _circle_chains(beta, r, h, steps, burn_in, rng, chains, slope):
        idx = np.clip(((alpha + np.pi) / (2 * np.pi) * bins).astype(int), 0, bins - 1)
        counts += np.bincount(idx, minlength=bins)
    return AngleHistogram(edges=edges, counts=counts, total=int(counts.sum()))


def _density(alpha: np.ndarray, beta: float, r: float, slope: float) -> np.ndarray:
    return np.exp(-beta * slope * r * np.cos(alpha))


def target_bin_probabilities(edges: np.ndarray, beta: float, r: float,
                             slope: float = 1.0, nodes: int = QUADRATURE_NODES) -> np.ndarray:
    """Bin masses of exp(−β·slope·r cos α), normalised by Simpson quadrature."""
    grid = np.linspace(-np.pi, np.pi, nodes + 1)
    z = simpson(_density(grid, beta, r, slope), x=grid)
    per_bin = max(2, nodes // (len(edges) - 1))
    probs = []
    for a, b in zip(edges[:-1], edges[1:]):
        x = np.linspace(a, b, per_bin + 1)
        probs.append(simpson(_density(x, beta, r, slope), x=x))
    return np.array(probs) / z


def histogram_l1(histogram: AngleHistogram, beta: float, r: float, slope: float = 1.0) -> float:
    target = target_bin_probabilities(histogram.edges, beta, r, slope)
    return float(np.sum(np.abs(histogram.probabilities - target)))


def uniformity_deviation(histogram: AngleHistogram) -> tuple[float, float]:
    bins = histogram.counts.size
    p = 1.0 / bins
    deviation = float(np.max(np.abs(histogram.probabilities - p)))
    sigma = math.sqrt(p * (1 - p) / histogram.total)
    return deviation, sigma


def quadrature_expectation(observable: Observable, beta: float, r: float,
                           slope: float = 1.0, nodes: int = QUADRATURE_NODES) -> float:
    grid = np.linspace(-np.pi, np.pi, nodes + 1)
    weights = _density(grid, beta, r, slope)
    return float(simpson(observable(grid) * weights, x=grid) / simpson(weights, x=grid))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = x.size
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    centred = x - x.mean()
    spectrum = np.fft.rfft(centred, n=size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n]
    return acov / n


def integrated_autocorrelation_time(series: np.ndarray) -> float:
    """τ = −1 + 2 Σ (ρ_{2k} + ρ_{2k+1}), truncated at the first non-positive pair."""
    series = np.asarray(series, dtype=float)
    acov = _autocovariance(series)
    if acov[0] <= 0:
        return 1.0
    rho = acov / acov[0]
    tau = -1.0
    for k in range(0, rho.size - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return max(tau, 1.0)


def ergodic_average(observable: Observable, config: SamplerConfig,
                    rng: np.random.Generator, chains: int = None) -> ErgodicResult:
    chains = chains or config.chains
    n_records = config.steps - config.burn
    running = np.empty((chains, n_records))
    values = np.empty((chains, n_records))
    mean = np.zeros(chains)
    for k, alpha in enumerate(_circle_chains(config.beta, config.radius, config.h, config.steps,
                                             config.burn, rng, chains, config.slope)):
        phi = observable(alpha)
        values[:, k] = phi
        mean = mean + (phi - mean) / (k + 1)
        running[:, k] = mean

    tau = float(np.mean([integrated_autocorrelation_time(v) for v in values]))
    variance = float(np.var(values))
    standard_error = math.sqrt(variance * tau / values.size)
    return ErgodicResult(
        running=running,
        final=float(np.mean(running[:, -1])),
        standard_error=standard_error,
        autocorrelation_time=tau,
    )


def clt_scaling(observable: Observable, config: SamplerConfig, rng: np.random.Generator) -> CltResult:
    """Across-chain variance of √T·⟨φ⟩_T at T₀ and 4T₀ (recorded steps)."""
    t0 = config.clt_t0
    run = replace(config, steps=config.burn + 4 * t0, burn_in=config.burn)
    result = ergodic_average(observable, run, rng, chains=config.clt_chains)
    avg_t0 = result.running[:, t0 - 1]
    avg_4t0 = result.running[:, 4 * t0 - 1]
    return CltResult(
        variance_t0=float(np.var(math.sqrt(t0) * avg_t0, ddof=1)),
        variance_4t0=float(np.var(math.sqrt(4 * t0) * avg_4t0, ddof=1)),
    )


def orth_drift(dim_r: int, dim_s: int, hyper: Hyper, steps: int, rng: np.random.Generator,
               record_every: int = 100, target_scale: float = 0.1,
               zero_loss: bool = False) -> DriftSeries:
    """o-CoLud on ½‖Q − A‖²_F for a dim_r × dim_s Stiefel matrix.

    Residuals are recorded every `record_every` steps.
    """
    if dim_r < dim_s or dim_s < 1:
        raise ValueError(f"need dim_r ≥ dim_s ≥ 1, got {dim_r}×{dim_s}")
    model = MlpModel([Layer(np.zeros((dim_r, dim_s)), np.zeros(dim_r), Activation.IDENTITY)])
    init_orthogonal(rng, model, [0])
    target = model.layers[0].weight.copy() if zero_loss else \
        target_scale * standard_normal_matrix(rng, dim_r, dim_s)

    def grad_provider(m: MlpModel):
        diff = m.layers[0].weight - target
        return 0.5 * float(np.sum(diff ** 2)), Gradients([diff], [np.zeros(dim_r)])

    state = TrajectoryState(
        model=model,
        constraints=[LayerConstraint(ConstraintKind.ORTH)],
        p_weights=[np.zeros((dim_r, dim_s))],
        p_biases=[np.zeros(dim_r)],
    )
    recorded_steps, position, cotangency = [], [], []
    for step in range(1, steps + 1):
        compose_split(hyper.split, state, grad_provider, hyper, rng)
        if step % record_every == 0:
            pos, cot = constraint_residuals(state)
            recorded_steps.append(step)
            position.append(pos)
            cotangency.append(cot)
    series = DriftSeries(np.array(recorded_steps), np.array(position), np.array(cotangency))
    if series.position.size:
        logging.info(
            f"Orthogonality drift over {steps} steps: max position residual "
            f"{series.position.max():.3e}, max cotangency {series.cotangency.max():.3e}"
        )
    return series
