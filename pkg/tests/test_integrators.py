"""Tests for the baseline, constrained overdamped and split underdamped steppers."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))

from constraints import circle_a_step, circle_cotangent_project, orth_cotangent_project
from core_math import make_rng
from integrators import (
    SplitError,
    ccolod_step,
    ccolud_a_step,
    ccolud_b_step,
    ccolud_o_step,
    compose_split,
    constraint_residuals,
    init_trajectory,
    langevin_a_step,
    langevin_b_step,
    langevin_o_step,
    ocolod_step,
    ocolud_a_step,
    ocolud_b_step,
    ocolud_o_step,
    scolod_step,
    sgd_momentum_step,
    sgd_step,
    sgld_step,
)
from models import (
    Activation,
    CircleGroup,
    ConstraintKind,
    CotangentPair,
    Gradients,
    Hyper,
    Layer,
    LayerConstraint,
    MlpModel,
    OptimizerConfig,
    OptimizerName,
    TrajectoryState,
)
from nn import build_model, init_orthogonal, init_standard


def linear_model(rows: int, cols: int, weight=None) -> MlpModel:
    w = np.zeros((rows, cols)) if weight is None else np.asarray(weight, dtype=float)
    return MlpModel([Layer(w, np.zeros(rows), Activation.IDENTITY)])


def free_state(model: MlpModel, underdamped: bool = False) -> TrajectoryState:
    state = TrajectoryState(model=model, constraints=[LayerConstraint() for _ in model.layers])
    if underdamped:
        state.p_weights = [np.zeros_like(layer.weight) for layer in model.layers]
        state.p_biases = [np.zeros_like(layer.bias) for layer in model.layers]
    return state


def random_grads(model: MlpModel, seed: int, scale: float = 1.0) -> Gradients:
    rng = make_rng(seed)
    return Gradients(
        [scale * rng.standard_normal(layer.weight.shape) for layer in model.layers],
        [scale * rng.standard_normal(layer.bias.shape) for layer in model.layers],
    )


def quadratic_provider(targets: list[np.ndarray], calls: list = None):
    """½‖W − A‖² summed over layers; biases feel no force."""
    def provider(model: MlpModel):
        if calls is not None:
            calls.append(1)
        diffs = [layer.weight - a for layer, a in zip(model.layers, targets)]
        value = 0.5 * sum(float(np.sum(d ** 2)) for d in diffs)
        return value, Gradients(diffs, [np.zeros_like(layer.bias) for layer in model.layers])
    return provider


def circle_state(seed: int = 0, widths=(2, 6, 1), radius: float = 0.5,
                 name: OptimizerName = OptimizerName.C_COLOD) -> TrajectoryState:
    model = init_standard(make_rng(seed), build_model(list(widths)))
    optimizer = OptimizerConfig(name=name, radii=[radius])
    return init_trajectory(model, optimizer, range(model.depth))


def randomise_circle_momenta(state: TrajectoryState, rng) -> TrajectoryState:
    for i, (layer, lc) in enumerate(zip(state.model.layers, state.constraints)):
        if lc.kind == ConstraintKind.CIRCLE:
            state.p_weights[i], lc.p_xi = circle_cotangent_project(
                layer.weight, lc.xi, rng.standard_normal(layer.weight.shape),
                rng.standard_normal(layer.weight.shape), lc.radius,
            )
    return state


def orth_state(rows: int, cols: int, seed: int = 0,
               name: OptimizerName = OptimizerName.O_COLOD) -> TrajectoryState:
    model = init_orthogonal(make_rng(seed), linear_model(rows, cols), [0])
    return init_trajectory(model, OptimizerConfig(name=name), [0])


def weights_of(state: TrajectoryState) -> list[np.ndarray]:
    return [layer.weight.copy() for layer in state.model.layers] + \
           [layer.bias.copy() for layer in state.model.layers]


class TestBaselines:
    def test_sgd_zero_gradient_is_noop(self):
        state = free_state(linear_model(1, 1, [[1.0]]))
        sgd_step(state, Gradients([np.zeros((1, 1))], [np.zeros(1)]), Hyper(h=0.1))
        assert state.model.layers[0].weight[0, 0] == 1.0

    def test_sgd_example(self):
        state = free_state(linear_model(1, 1, [[1.0]]))
        sgd_step(state, Gradients([np.array([[2.0]])], [np.zeros(1)]), Hyper(h=0.1))
        assert state.model.layers[0].weight[0, 0] == pytest.approx(0.8)

    def test_sgd_weight_decay_shrinks(self):
        state = free_state(linear_model(1, 1, [[1.0]]))
        sgd_step(state, Gradients([np.zeros((1, 1))], [np.zeros(1)]), Hyper(h=0.1, weight_decay=1e-4))
        assert state.model.layers[0].weight[0, 0] == pytest.approx(1.0 - 0.1 * 1e-4)

    def test_momentum_zero_equals_sgd(self):
        model = init_standard(make_rng(1), build_model([2, 5, 1]))
        a, b = free_state(model.copy()), free_state(model.copy())
        for k in range(5):
            grads = random_grads(model, k)
            sgd_step(a, grads, Hyper(h=0.05))
            sgd_momentum_step(b, grads, Hyper(h=0.05, momentum=0.0))
        assert all(np.array_equal(x, y) for x, y in zip(weights_of(a), weights_of(b)))

    def test_momentum_two_constant_steps(self):
        h, g, mu = 0.1, 2.0, 0.9
        state = free_state(linear_model(1, 1, [[0.0]]))
        grads = Gradients([np.array([[g]])], [np.zeros(1)])
        for _ in range(2):
            sgd_momentum_step(state, grads, Hyper(h=h, momentum=mu))
        assert -state.model.layers[0].weight[0, 0] == pytest.approx(h * g * (1 + (1 + mu)))

    def test_sgld_zero_temperature_is_sgd_bitwise(self):
        model = init_standard(make_rng(2), build_model([2, 7, 1]))
        a, b = free_state(model.copy()), free_state(model.copy())
        rng = make_rng(3)
        for k in range(5):
            grads = random_grads(model, k)
            sgd_step(a, grads, Hyper(h=0.05, weight_decay=1e-3))
            sgld_step(b, grads, Hyper(h=0.05, weight_decay=1e-3), rng)
        assert all(np.array_equal(x, y) for x, y in zip(weights_of(a), weights_of(b)))

    def test_sgld_increment_variance(self):
        n, tau, h = 1_000_000, 0.5, 0.01
        state = free_state(linear_model(1, n))
        sgld_step(state, Gradients([np.zeros((1, n))], [np.zeros(1)]), Hyper(h=h, tau=tau), make_rng(4))
        var = float(np.var(state.model.layers[0].weight))
        expected = 2 * tau * h
        assert abs(var - expected) <= 3 * expected * math.sqrt(2.0 / n)

    def test_sgld_reproducible(self):
        runs = []
        for _ in range(2):
            state = free_state(linear_model(3, 3))
            sgld_step(state, random_grads(state.model, 0), Hyper(h=0.1, tau=1.0), make_rng(5))
            runs.append(state.model.layers[0].weight)
        assert np.array_equal(runs[0], runs[1])


class TestSgdMomentumEquivalence:
    def test_oba_zero_temperature_matches_rescaled_momentum(self):
        # OBA from p = 0 equals SGD-m with μ = e^{−γh}, learning rate h², buffer −p/h
        h, gamma = 0.1, 2.0
        rng = make_rng(6)
        start = rng.standard_normal((3, 4))
        targets = [rng.standard_normal((3, 4))]
        provider = quadratic_provider(targets)

        langevin = free_state(linear_model(3, 4, start.copy()), underdamped=True)
        momentum = free_state(linear_model(3, 4, start.copy()))
        hyper = Hyper(h=h, gamma=gamma, split="OBA")
        rescaled = Hyper(h=h * h, momentum=math.exp(-gamma * h))
        for _ in range(25):
            compose_split("OBA", langevin, provider, hyper, rng)
            _, grads = provider(momentum.model)
            sgd_momentum_step(momentum, grads, rescaled)
            assert np.allclose(langevin.model.layers[0].weight, momentum.model.layers[0].weight,
                               rtol=0, atol=1e-10)
            assert np.allclose(-langevin.p_weights[0] / h, momentum.buffers[0][0], rtol=0, atol=1e-10)


class TestCircleOverdamped:
    def test_no_force_no_noise_is_noop(self):
        state = circle_state()
        before = weights_of(state)
        xi = [lc.xi.copy() for lc in state.constraints]
        zero = Gradients.zeros_like(state.model)
        ccolod_step(state, zero, Hyper(h=0.1), make_rng(0))
        assert all(np.allclose(x, y, atol=1e-15) for x, y in zip(before, weights_of(state)))
        assert all(np.allclose(a, lc.xi, atol=1e-15) for a, lc in zip(xi, state.constraints))

    def test_residual_after_random_steps(self):
        state = circle_state(seed=1, radius=0.7)
        rng = make_rng(2)
        for k in range(200):
            ccolod_step(state, random_grads(state.model, 100 + k), Hyper(h=0.05, tau=0.01), rng)
            position, _ = constraint_residuals(state)
            assert position <= 1e-9 * 0.7 ** 2
        assert all(np.max(np.abs(layer.weight)) <= 0.7 for layer in state.model.layers)

    def test_scalar_projected_gradient_oracle(self):
        a, r, h = 2.0, 1.0, 0.05
        state = init_trajectory(linear_model(1, 1, [[0.3]]), OptimizerConfig(name=OptimizerName.C_COLOD,
                                                                             radii=[r]), [0])
        theta, xi = 0.3, math.sqrt(1 - 0.09)
        provider = quadratic_provider([np.array([[a]])])
        for _ in range(50):
            _, grads = provider(state.model)
            ccolod_step(state, grads, Hyper(h=h), make_rng(0))
            alpha = math.atan2(xi, theta - h * (theta - a))
            theta, xi = r * math.cos(alpha), r * math.sin(alpha)
            assert state.model.layers[0].weight[0, 0] == pytest.approx(theta, abs=1e-14)
            assert state.constraints[0].xi[0, 0] == pytest.approx(xi, abs=1e-14)

    def test_empty_constraint_set_matches_sgld_bitwise(self):
        model = init_standard(make_rng(3), build_model([2, 5, 1]))
        a, b = free_state(model.copy()), free_state(model.copy())
        rng_a, rng_b = make_rng(4), make_rng(4)
        hyper = Hyper(h=0.05, tau=1e-3)
        for k in range(10):
            grads = random_grads(model, k)
            sgld_step(a, grads, hyper, rng_a)
            ccolod_step(b, grads, hyper, rng_b)
        assert all(np.array_equal(x, y) for x, y in zip(weights_of(a), weights_of(b)))

    def test_oblique_projection_stays_on_circle(self):
        state = circle_state(seed=5, radius=1.0)
        hyper = Hyper(h=0.01, tau=1e-4, circle_projection="oblique")
        rng = make_rng(6)
        for k in range(50):
            ccolod_step(state, random_grads(state.model, k, 0.1), hyper, rng)
        assert constraint_residuals(state)[0] <= 1e-9

    def test_rejects_orth_layers(self):
        with pytest.raises(ValueError, match="c-colod"):
            ccolod_step(orth_state(4, 4), Gradients([np.zeros((4, 4))], [np.zeros(4)]), Hyper(h=0.1), make_rng(0))


class TestOrthOverdamped:
    def test_no_force_no_noise_keeps_q(self):
        state = orth_state(6, 3)
        before = state.model.layers[0].weight.copy()
        ocolod_step(state, Gradients([np.zeros((6, 3))], [np.zeros(6)]), Hyper(h=0.1), make_rng(0))
        assert np.allclose(state.model.layers[0].weight, before, atol=1e-12)

    def test_large_layer_residual(self):
        state = orth_state(100, 100, seed=1)
        rng = make_rng(2)
        grads = Gradients([0.01 * rng.standard_normal((100, 100))], [np.zeros(100)])
        ocolod_step(state, grads, Hyper(h=0.1, K=5), rng)
        assert constraint_residuals(state)[0] <= 1e-8

    def test_zero_iterations_return_euler_step(self):
        state = orth_state(5, 5, seed=3)
        before = state.model.layers[0].weight.copy()
        grads = random_grads(state.model, 4)
        ocolod_step(state, grads, Hyper(h=0.1, K=0), make_rng(0))
        assert np.allclose(state.model.layers[0].weight, before - 0.1 * grads.weights[0], atol=1e-15)

    def test_wide_layer_uses_transposed_view(self):
        state = orth_state(3, 8, seed=5)
        rng = make_rng(6)
        for k in range(20):
            ocolod_step(state, random_grads(state.model, k, 0.1), Hyper(h=0.05, tau=1e-5), rng)
        assert constraint_residuals(state)[0] <= 1e-8


class TestSphereOverdamped:
    def test_rows_stay_on_sphere(self):
        model = init_standard(make_rng(0), build_model([4, 6, 1]))
        state = init_trajectory(model, OptimizerConfig(name=OptimizerName.S_COLOD, radii=[1.0]), [0, 1])
        for k in range(20):
            scolod_step(state, random_grads(state.model, k), Hyper(h=0.1), make_rng(0))
        assert constraint_residuals(state)[0] <= 1e-12

    def test_noise_is_rejected(self):
        model = build_model([2, 2, 1])
        state = init_trajectory(model, OptimizerConfig(name=OptimizerName.S_COLOD, radii=[1.0]), [0])
        with pytest.raises(ValueError, match="tau"):
            scolod_step(state, Gradients.zeros_like(model), Hyper(h=0.1, tau=0.1), make_rng(0))


class TestCircleUnderdamped:
    def test_o_step_without_friction_or_noise(self):
        state = circle_state(name=OptimizerName.C_COLUD)
        randomise_circle_momenta(state, make_rng(1))
        before = [p.copy() for p in state.p_weights]
        ccolud_o_step(state, Hyper(h=0.1, gamma=0.0, tau=0.0), make_rng(2))
        assert all(np.allclose(a, b, atol=1e-14) for a, b in zip(before, state.p_weights))

    def test_o_step_thermalises_tangential_momentum(self):
        n, tau = 100_000, 0.3
        model = linear_model(1, n, make_rng(3).uniform(-1, 1, (1, n)))
        state = init_trajectory(model, OptimizerConfig(name=OptimizerName.C_COLUD, radii=[1.0]), [0])
        ccolud_o_step(state, Hyper(h=1.0, gamma=20.0, tau=tau), make_rng(4))
        theta, xi = state.model.layers[0].weight[0], state.constraints[0].xi[0]
        tangential = state.p_weights[0][0] * xi - state.constraints[0].p_xi[0] * theta
        assert abs(np.var(tangential) - tau) <= 0.05 * tau

    def test_b_step_with_free_gradient_leaves_constrained_momenta(self):
        state = circle_state(seed=5, name=OptimizerName.C_COLUD)
        state.constraints[1] = LayerConstraint()
        randomise_circle_momenta(state, make_rng(6))
        grads = Gradients.zeros_like(state.model)
        grads.weights[1] = np.ones_like(grads.weights[1])
        before_p, before_xi = state.p_weights[0].copy(), state.constraints[0].p_xi.copy()
        ccolud_b_step(state, grads, Hyper(h=0.1))
        assert np.allclose(state.p_weights[0], before_p, atol=1e-14)
        assert np.allclose(state.constraints[0].p_xi, before_xi, atol=1e-14)
        assert np.allclose(state.p_weights[1], -0.1)

    def test_invariants_over_randomised_run(self):
        state = circle_state(seed=6, radius=0.8, name=OptimizerName.C_COLUD)
        targets = [make_rng(7).standard_normal(layer.weight.shape) for layer in state.model.layers]
        provider = quadratic_provider(targets)
        hyper = Hyper(h=0.05, gamma=1.0, tau=1e-3)
        rng = make_rng(8)
        for _ in range(300):
            compose_split("ABO", state, provider, hyper, rng)
            position, cotangency = constraint_residuals(state)
            assert position <= 1e-9 * 0.8 ** 2
            assert cotangency <= 1e-8

    def test_energy_error_shrinks_with_step(self):
        def max_energy_error(h: float, steps: int) -> float:
            rng = make_rng(9)
            weight = 0.5 * rng.uniform(-1, 1, (1, 3))
            state = init_trajectory(linear_model(1, 3, weight),
                                    OptimizerConfig(name=OptimizerName.C_COLUD, radii=[1.0]), [0])
            lc = state.constraints[0]
            state.p_weights[0], lc.p_xi = circle_cotangent_project(
                state.model.layers[0].weight, lc.xi, rng.standard_normal((1, 3)), rng.standard_normal((1, 3)), 1.0
            )
            provider = quadratic_provider([np.full((1, 3), 0.3)])

            def energy():
                value, _ = provider(state.model)
                return value + 0.5 * float(np.sum(state.p_weights[0] ** 2) + np.sum(lc.p_xi ** 2))

            h0 = energy()
            worst = 0.0
            hyper = Hyper(h=h)
            for _ in range(steps):
                compose_split("ABO", state, provider, hyper, rng)
                worst = max(worst, abs(energy() - h0))
            return worst

        # ABO with γ = 0 is first order, so halving h roughly halves the error
        coarse = max_energy_error(0.02, 1000)
        fine = max_energy_error(0.01, 2000)
        assert fine < coarse / 1.5

    def test_a_step_rotates_each_pair_on_its_circle(self):
        state = circle_state(seed=10, name=OptimizerName.C_COLUD)
        randomise_circle_momenta(state, make_rng(11))
        layer, lc = state.model.layers[0], state.constraints[0]
        pair = CotangentPair(CircleGroup(layer.weight.copy(), lc.xi.copy(), lc.radius),
                             (state.p_weights[0].copy(), lc.p_xi.copy()))
        expected = circle_a_step(pair, 0.1)
        ccolud_a_step(state, Hyper(h=0.1))
        assert np.allclose(state.model.layers[0].weight, expected.position.theta, atol=1e-15)
        assert np.allclose(state.constraints[0].xi, expected.position.xi, atol=1e-15)
        position, cotangency = constraint_residuals(state)
        assert position <= 1e-12
        assert cotangency <= 1e-12

    def test_a_step_rejects_orth_layers(self):
        with pytest.raises(ValueError, match="c-colud"):
            ccolud_a_step(orth_state(4, 2, name=OptimizerName.O_COLUD), Hyper(h=0.1))


class TestOrthUnderdamped:
    def test_zero_momentum_a_step_keeps_q(self):
        state = orth_state(6, 4, name=OptimizerName.O_COLUD)
        before = state.model.layers[0].weight.copy()
        ocolud_a_step(state, Hyper(h=0.1))
        assert np.allclose(state.model.layers[0].weight, before, atol=1e-12)

    def test_full_step_invariants(self):
        state = orth_state(10, 4, seed=1, name=OptimizerName.O_COLUD)
        rng = make_rng(2)
        provider = quadratic_provider([0.1 * rng.standard_normal((10, 4))])
        hyper = Hyper(h=0.05, gamma=1.0, tau=1e-4)
        for _ in range(200):
            compose_split("ABO", state, provider, hyper, rng)
            position, cotangency = constraint_residuals(state)
            assert position <= 1e-8
            assert cotangency <= 1e-8

    def test_scalar_system_has_no_motion(self):
        state = init_trajectory(linear_model(1, 1, [[1.0]]), OptimizerConfig(name=OptimizerName.O_COLUD), [0])
        provider = quadratic_provider([np.array([[5.0]])])
        for _ in range(10):
            compose_split("ABO", state, provider, Hyper(h=0.1, gamma=1.0, tau=0.5), make_rng(3))
        assert abs(state.model.layers[0].weight[0, 0]) == pytest.approx(1.0)
        assert state.p_weights[0][0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_b_step_keeps_momentum_cotangent(self):
        state = orth_state(6, 3, seed=3, name=OptimizerName.O_COLUD)
        grads = Gradients([make_rng(4).standard_normal((6, 3))], [np.zeros(6)])
        ocolud_b_step(state, grads, Hyper(h=0.1))
        q, p = state.model.layers[0].weight, state.p_weights[0]
        assert np.linalg.norm(p) > 0
        assert np.linalg.norm(p.T @ q + q.T @ p) <= 1e-12

    def test_o_step_without_noise_damps_momentum(self):
        state = orth_state(6, 3, seed=5, name=OptimizerName.O_COLUD)
        q = state.model.layers[0].weight
        state.p_weights[0] = orth_cotangent_project(q, make_rng(6).standard_normal((6, 3)))
        before = state.p_weights[0].copy()
        hyper = Hyper(h=0.1, gamma=2.0, tau=0.0)
        ocolud_o_step(state, hyper, make_rng(7))
        assert np.allclose(state.p_weights[0], hyper.friction * before, atol=1e-14)


class TestComposeSplit:
    def test_empty_split_is_identity(self):
        state = circle_state(name=OptimizerName.C_COLUD)
        before = weights_of(state)
        calls = []
        compose_split("", state, quadratic_provider([np.zeros((6, 2)), np.zeros((1, 6))], calls),
                      Hyper(h=0.1), make_rng(0))
        assert state.step == 0 and not calls
        assert all(np.array_equal(x, y) for x, y in zip(before, weights_of(state)))

    def test_o_without_friction_or_noise_is_identity(self):
        state = free_state(init_standard(make_rng(1), build_model([2, 3, 1])), underdamped=True)
        state.p_weights = [make_rng(2).standard_normal(p.shape) for p in state.p_weights]
        before = [p.copy() for p in state.p_weights]
        compose_split("O", state, quadratic_provider([]), Hyper(h=0.1), make_rng(3))
        assert all(np.array_equal(a, b) for a, b in zip(before, state.p_weights))

    def test_unknown_letter(self):
        with pytest.raises(SplitError, match="X"):
            compose_split("ABX", free_state(linear_model(1, 1), True), quadratic_provider([]),
                          Hyper(h=0.1), make_rng(0))

    def test_orders_do_not_commute(self):
        results = []
        for letters in ("ABO", "OBA"):
            state = circle_state(seed=4, name=OptimizerName.C_COLUD)
            provider = quadratic_provider([np.ones((6, 2)), np.ones((1, 6))])
            compose_split(letters, state, provider, Hyper(h=0.1, gamma=1.0, tau=0.01), make_rng(5))
            results.append(weights_of(state))
        assert not all(np.array_equal(a, b) for a, b in zip(*results))

    def test_one_gradient_per_step(self):
        state = orth_state(5, 3, name=OptimizerName.O_COLUD)
        calls = []
        provider = quadratic_provider([np.zeros((5, 3))], calls)
        for _ in range(7):
            compose_split("ABO", state, provider, Hyper(h=0.05, gamma=1.0), make_rng(0))
        assert len(calls) == 7
        assert state.step == 7

    def test_langevin_o_rejects_constrained_layers(self):
        state = circle_state(name=OptimizerName.C_COLUD)
        with pytest.raises(ValueError):
            langevin_o_step(state, Hyper(h=0.1), make_rng(0))

    def test_langevin_a_then_b_on_free_layer(self):
        state = free_state(linear_model(1, 1, [[1.0]]), underdamped=True)
        state.p_weights[0][:] = 2.0
        langevin_a_step(state, Hyper(h=0.1))
        assert state.model.layers[0].weight[0, 0] == pytest.approx(1.2)
        langevin_b_step(state, Gradients([np.array([[3.0]])], [np.zeros(1)]), Hyper(h=0.1))
        assert state.p_weights[0][0, 0] == pytest.approx(1.7)

    def test_langevin_b_rejects_constrained_layers(self):
        state = orth_state(3, 2)
        with pytest.raises(ValueError, match="unconstrained Langevin"):
            langevin_b_step(state, Gradients.zeros_like(state.model), Hyper(h=0.1))


class TestInitTrajectory:
    def test_circle_layers_clamped_with_slack(self):
        model = linear_model(1, 3, [[2.0, -0.3, 0.0]])
        state = init_trajectory(model, OptimizerConfig(name=OptimizerName.C_COLOD, radii=[1.0]), [0])
        assert np.allclose(model.layers[0].weight, [[1.0, -0.3, 0.0]])
        assert np.allclose(state.constraints[0].xi, [[0.0, math.sqrt(0.91), 1.0]])
        assert state.constraints[0].kind == ConstraintKind.CIRCLE

    def test_per_layer_radii(self):
        model = init_standard(make_rng(0), build_model([2, 4, 1]))
        state = init_trajectory(model, OptimizerConfig(name=OptimizerName.C_COLOD, radii=[1.0, 5.0]), [0, 1])
        assert [lc.radius for lc in state.constraints] == [1.0, 5.0]

    def test_orth_layer_must_be_orthogonal(self):
        model = init_standard(make_rng(0), linear_model(4, 4))
        with pytest.raises(ValueError, match="not orthogonal"):
            init_trajectory(model, OptimizerConfig(name=OptimizerName.O_COLOD), [0])

    def test_underdamped_momentum_from_first_gradient(self):
        h = 0.05
        model = init_orthogonal(make_rng(1), linear_model(5, 3), [0])
        rng = make_rng(2)
        target = rng.standard_normal((5, 3))
        state = init_trajectory(model, OptimizerConfig(name=OptimizerName.O_COLUD, h=h), [0],
                                quadratic_provider([target]))
        q = model.layers[0].weight
        expected = -h * orth_cotangent_project(q, q - target)
        assert np.allclose(state.p_weights[0], expected, atol=1e-15)

    def test_unconstrained_optimizer_ignores_layer_set(self):
        state = init_trajectory(build_model([2, 3, 1]), OptimizerConfig(name=OptimizerName.SGD), [0, 1])
        assert not any(lc.constrained for lc in state.constraints)
        assert not state.underdamped


class TestLongRunConstraintPreservation:
    STEPS = 10_000

    def test_ccolod(self):
        r = 0.8
        state = circle_state(seed=20, radius=r)
        provider = quadratic_provider([make_rng(21).standard_normal(layer.weight.shape)
                                       for layer in state.model.layers])
        hyper = Hyper(h=0.05, tau=1e-3)
        rng = make_rng(22)
        for _ in range(self.STEPS):
            _, grads = provider(state.model)
            ccolod_step(state, grads, hyper, rng)
            position, _ = constraint_residuals(state)
            assert position <= 1e-9 * r ** 2

    def test_ccolud(self):
        r = 0.8
        state = circle_state(seed=23, radius=r, name=OptimizerName.C_COLUD)
        randomise_circle_momenta(state, make_rng(24))
        provider = quadratic_provider([make_rng(25).standard_normal(layer.weight.shape)
                                       for layer in state.model.layers])
        hyper = Hyper(h=0.05, gamma=1.0, tau=1e-3)
        rng = make_rng(26)
        for _ in range(self.STEPS):
            compose_split("ABO", state, provider, hyper, rng)
            position, cotangency = constraint_residuals(state)
            assert position <= 1e-9 * r ** 2
            assert cotangency <= 1e-8

    def test_ocolod(self):
        state = orth_state(8, 4, seed=27)
        target = state.model.layers[0].weight + 0.02 * make_rng(28).standard_normal((8, 4))
        provider = quadratic_provider([target])
        hyper = Hyper(h=0.05, tau=1e-4)
        rng = make_rng(29)
        for _ in range(self.STEPS):
            _, grads = provider(state.model)
            ocolod_step(state, grads, hyper, rng)
            position, _ = constraint_residuals(state)
            assert position <= 1e-8

    def test_ocolud(self):
        state = orth_state(8, 4, seed=30, name=OptimizerName.O_COLUD)
        provider = quadratic_provider([0.02 * make_rng(31).standard_normal((8, 4))])
        hyper = Hyper(h=0.05, gamma=1.0, tau=1e-4)
        rng = make_rng(32)
        for _ in range(self.STEPS):
            compose_split("ABO", state, provider, hyper, rng)
            position, cotangency = constraint_residuals(state)
            assert position <= 1e-8
            assert cotangency <= 1e-8
