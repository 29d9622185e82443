"""Tests for the iteration kernels and the run harness.

Oracles: single-agent cases collapse every method to plain gradient descent
(or a hand recursion), two-agent static cases have closed-form network
optima via a least-squares solve, and the average-iterate / tracker-average
identities are checked against independently recomputed gradients.
"""

import numpy as np
import pytest

from netdrift.algorithms import (
    AlgorithmState,
    SequencingError,
    ShapeMismatchError,
    StepError,
    dgt_step,
    diffusion_step,
    exact_diffusion_bootstrap,
    exact_diffusion_step,
    extra_bootstrap,
    extra_step,
    init_state,
    run,
)
from netdrift.problems import least_squares_stream, shifting_consensus
from netdrift.records import read_record, write_record
from netdrift.topology import WeightMatrix, build_random, metropolis_weights


class Quadratic:
    """Static per-agent quadratics 0.5*||x - t_i||^2; optimum is the target mean."""

    def __init__(self, targets):
        self.targets = np.asarray(targets, dtype=np.float64)
        self.n, self.d = self.targets.shape
        self.horizon = 10**9
        self.mu = 1.0
        self.lipschitz = 1.0
        self.normalization = 1.0

    def optimum(self, k):
        return self.targets.mean(axis=0)

    def gradient_stack(self, k, x_stack):
        return x_stack - self.targets


def single_node_weights() -> WeightMatrix:
    return WeightMatrix(entries=np.ones((1, 1)), beta=0.0)


def pair_weights() -> WeightMatrix:
    return WeightMatrix(entries=np.full((2, 2), 0.5), beta=0.0)


# ---------------------------------------------------------------------------
# diffusion


def test_diffusion_single_agent_is_gradient_descent():
    obj = Quadratic([[1.0]])
    state = init_state("diffusion", obj, single_node_weights())
    out = diffusion_step(state, obj, single_node_weights(), alpha=0.5, k=0)
    # x+ = x - 0.5 * (x - 1) with x = 0
    assert out.x_stack[0, 0] == 0.5
    assert out.step_count == 1


def test_diffusion_two_agents_opposing_gradients_average_to_zero():
    obj = Quadratic([[1.0], [-1.0]])
    state = init_state("diffusion", obj, pair_weights())
    out = diffusion_step(state, obj, pair_weights(), alpha=0.1, k=0)
    assert np.array_equal(out.x_stack, np.zeros((2, 1)))


def test_diffusion_fixed_point_at_shared_optimum():
    obj = Quadratic([[2.0, -1.0], [2.0, -1.0], [2.0, -1.0]])
    wm = WeightMatrix(entries=np.full((3, 3), 1.0 / 3.0), beta=0.0)
    x0 = np.tile(obj.optimum(0), (3, 1))
    state = AlgorithmState(x_stack=x0, step_count=0)
    out = diffusion_step(state, obj, wm, alpha=0.3, k=0)
    assert np.allclose(out.x_stack, x0, atol=1e-15)


def test_diffusion_rejects_states_with_tracker_fields():
    obj = Quadratic([[1.0]])
    state = AlgorithmState(x_stack=np.zeros((1, 1)), step_count=0, y_stack=np.zeros((1, 1)))
    with pytest.raises(StepError):
        diffusion_step(state, obj, single_node_weights(), alpha=0.1, k=0)


def test_diffusion_average_iterate_recursion():
    # The network average must follow plain gradient descent on the running
    # average of the local gradients, independent of the mixing matrix.
    stream = least_squares_stream(n=5, horizon=60, seed=3)
    graph = build_random(5, 0.8, seed=11)
    wm = metropolis_weights(graph)
    alpha = 0.05
    state = init_state("diffusion", stream, wm)
    rng = np.random.default_rng(0)
    state = AlgorithmState(x_stack=rng.normal(size=(5, 2)), step_count=0)
    for k in range(60):
        grads = stream.gradient_stack(k + 1, state.x_stack)
        expected = state.x_stack.mean(axis=0) - alpha * grads.mean(axis=0)
        state = diffusion_step(state, stream, wm, alpha=alpha, k=k)
        assert np.linalg.norm(state.x_stack.mean(axis=0) - expected) <= 1e-12


def test_diffusion_update_is_local():
    graph = build_random(10, 0.3, seed=5)
    wm = metropolis_weights(graph)
    targets = np.arange(10, dtype=np.float64).reshape(10, 1)
    obj = Quadratic(targets)
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(10, 1))
    agent = 0
    outside = [j for j in range(10) if j not in graph.neighbor_sets[agent]]
    assert outside, "graph too dense for the locality check"
    x_perturbed = x0.copy()
    x_perturbed[outside[0]] += 7.5
    base = diffusion_step(AlgorithmState(x_stack=x0, step_count=0), obj, wm, 0.1, 0)
    pert = diffusion_step(AlgorithmState(x_stack=x_perturbed, step_count=0), obj, wm, 0.1, 0)
    assert np.array_equal(base.x_stack[agent], pert.x_stack[agent])


# ---------------------------------------------------------------------------
# gradient tracking


def test_dgt_init_tracker_holds_first_gradients():
    obj = Quadratic([[1.0], [-3.0]])
    state = init_state("dgt", obj, pair_weights())
    assert np.array_equal(state.y_stack, obj.gradient_stack(0, state.x_stack))
    assert np.array_equal(state.prev_grad_stack, state.y_stack)


def test_dgt_fixed_point_at_shared_optimum():
    obj = Quadratic([[4.0], [4.0]])
    x0 = np.full((2, 1), 4.0)
    state = AlgorithmState(
        x_stack=x0,
        step_count=0,
        y_stack=np.zeros((2, 1)),
        prev_grad_stack=np.zeros((2, 1)),
    )
    out = dgt_step(state, obj, pair_weights(), alpha=0.2, k=0)
    assert np.allclose(out.x_stack, x0, atol=1e-15)
    assert np.allclose(out.y_stack, 0.0, atol=1e-15)


def test_dgt_requires_tracker_state():
    obj = Quadratic([[1.0]])
    bare = AlgorithmState(x_stack=np.zeros((1, 1)), step_count=0)
    with pytest.raises(StepError):
        dgt_step(bare, obj, single_node_weights(), alpha=0.1, k=0)


def test_dgt_tracker_average_equals_gradient_average():
    # Along any tracking run the network average of y must equal the network
    # average of the current local gradients, to numerical precision.
    sc = shifting_consensus(p=2, spacing_m=1.0, shift=1, horizon=80)
    graph = build_random(5, 0.7, seed=2)
    wm = metropolis_weights(graph)
    state = init_state("dgt", sc, wm)
    for k in range(80):
        grads = sc.gradient_stack(k, state.x_stack)
        gap = np.linalg.norm(state.y_stack.mean(axis=0) - grads.mean(axis=0))
        assert gap <= 1e-10
        state = dgt_step(state, sc, wm, alpha=0.1, k=k)


def test_dgt_static_pair_converges_to_least_squares_solution():
    targets = np.array([[1.0], [-1.0]])
    obj = Quadratic(targets)
    # centralized oracle: minimize sum of the quadratics
    design = np.ones((2, 1))
    oracle = np.linalg.lstsq(design, targets, rcond=None)[0].ravel()
    state = init_state("dgt", obj, pair_weights())
    for k in range(500):
        state = dgt_step(state, obj, pair_weights(), alpha=0.1, k=k)
    assert np.abs(state.x_stack - oracle).max() < 1e-10


# ---------------------------------------------------------------------------
# history-correction baselines


def test_extra_requires_bootstrap():
    obj = Quadratic([[1.0], [-1.0]])
    state = init_state("extra", obj, pair_weights())
    with pytest.raises(SequencingError):
        extra_step(state, obj, pair_weights(), alpha=0.1, k=0)
    with pytest.raises(SequencingError):
        exact_diffusion_step(state, obj, pair_weights(), alpha=0.1, k=0)


def test_extra_single_agent_hand_recursion():
    obj = Quadratic([[2.0]])
    wm = single_node_weights()
    alpha = 0.3
    state = init_state("extra", obj, wm)
    state = extra_bootstrap(state, obj, wm, alpha)
    # by hand: x0 = 0, g(x) = x - 2
    x_prev, x_cur = 0.0, 0.0 - alpha * (0.0 - 2.0)
    assert state.x_stack[0, 0] == pytest.approx(x_cur, abs=1e-15)
    for k in range(1, 8):
        state = extra_step(state, obj, wm, alpha, k)
        x_next = 2 * x_cur - x_prev - alpha * ((x_cur - 2.0) - (x_prev - 2.0))
        x_prev, x_cur = x_cur, x_next
        assert state.x_stack[0, 0] == pytest.approx(x_cur, abs=1e-13)


def test_exact_diffusion_single_agent_is_gradient_descent():
    # With a trivial network the correction terms telescope away and the
    # iterates coincide with plain gradient descent.
    obj = Quadratic([[2.0]])
    wm = single_node_weights()
    alpha = 0.25
    state = init_state("exact_diffusion", obj, wm)
    state = exact_diffusion_bootstrap(state, obj, wm, alpha)
    x_gd = 0.0 - alpha * (0.0 - 2.0)
    assert state.x_stack[0, 0] == pytest.approx(x_gd, abs=1e-15)
    for k in range(1, 10):
        state = exact_diffusion_step(state, obj, wm, alpha, k)
        x_gd = x_gd - alpha * (x_gd - 2.0)
        assert state.x_stack[0, 0] == pytest.approx(x_gd, abs=1e-12)


@pytest.mark.parametrize("algorithm", ["extra", "exact_diffusion"])
def test_history_methods_static_pair_exact(algorithm):
    targets = np.array([[1.0], [-1.0]])
    obj = Quadratic(targets)
    design = np.ones((2, 1))
    oracle = np.linalg.lstsq(design, targets, rcond=None)[0].ravel()
    wm = pair_weights()
    state = init_state(algorithm, obj, wm)
    boot = extra_bootstrap if algorithm == "extra" else exact_diffusion_bootstrap
    step = extra_step if algorithm == "extra" else exact_diffusion_step
    state = boot(state, obj, wm, 0.1)
    for k in range(1, 500):
        state = step(state, obj, wm, 0.1, k)
    assert np.abs(state.x_stack - oracle).max() < 1e-10


@pytest.mark.parametrize("algorithm", ["extra", "exact_diffusion"])
def test_history_methods_fixed_point(algorithm):
    obj = Quadratic([[3.0], [3.0]])
    x_star = np.full((2, 1), 3.0)
    state = AlgorithmState(
        x_stack=x_star,
        step_count=1,
        prev_x_stack=x_star,
        prev_grad_stack=np.zeros((2, 1)),
    )
    step = extra_step if algorithm == "extra" else exact_diffusion_step
    out = step(state, obj, pair_weights(), alpha=0.2, k=1)
    assert np.allclose(out.x_stack, x_star, atol=1e-15)


# ---------------------------------------------------------------------------
# run harness


def test_run_records_initial_row_for_zero_horizon():
    obj = Quadratic([[1.0], [-1.0]])
    rec = run("diffusion", obj, pair_weights(), alpha=0.1, horizon=0)
    assert len(rec) == 1
    assert rec.iterations[0] == 0
    # agents start at zero, optimum is zero
    assert rec.tracking_error[0] == 0.0
    assert rec.y_dev is None


def test_run_series_match_manual_stepping():
    sc = shifting_consensus(p=2, spacing_m=1.0, shift=3, horizon=40)
    graph = build_random(5, 0.7, seed=4)
    wm = metropolis_weights(graph)
    rec = run("dgt", sc, wm, alpha=0.15, horizon=40)
    state = init_state("dgt", sc, wm)
    for k in range(41):
        x = state.x_stack
        opt = sc.optimum(k)
        tracking = np.sqrt(np.mean(np.sum((x - opt) ** 2, axis=1))) / sc.normalization
        assert rec.tracking_error[k] == tracking
        x_bar = x.mean(axis=0)
        assert rec.consensus_dev[k] == np.sqrt(np.mean(np.sum((x - x_bar) ** 2, axis=1)))
        assert rec.avg_error[k] == np.linalg.norm(x_bar - opt)
        y_bar = state.y_stack.mean(axis=0)
        assert rec.y_dev[k] == np.sqrt(
            np.mean(np.sum((state.y_stack - y_bar) ** 2, axis=1))
        )
        if k < 40:
            state = dgt_step(state, sc, wm, alpha=0.15, k=k)
    assert rec.tracker_identity_max is not None
    assert rec.tracker_identity_max <= 1e-10


def test_run_is_deterministic():
    stream = least_squares_stream(n=5, horizon=50, seed=9)
    graph = build_random(5, 0.6, seed=9)
    wm = metropolis_weights(graph)
    rec_a = run("diffusion", stream, wm, alpha=0.02, horizon=50)
    rec_b = run("diffusion", stream, wm, alpha=0.02, horizon=50)
    assert rec_a.tracking_error.tobytes() == rec_b.tracking_error.tobytes()
    assert rec_a.consensus_dev.tobytes() == rec_b.consensus_dev.tobytes()


def test_run_bootstraps_history_methods():
    obj = Quadratic([[1.0], [-1.0]])
    rec = run("extra", obj, pair_weights(), alpha=0.1, horizon=300)
    assert rec.tracking_error[-1] < 1e-8


def test_run_rejects_network_size_mismatch():
    obj = Quadratic([[1.0], [-1.0]])
    graph = build_random(3, 0.9, seed=0)
    wm = metropolis_weights(graph)
    with pytest.raises(ShapeMismatchError):
        run("diffusion", obj, wm, alpha=0.1, horizon=5)


def test_run_rejects_horizon_beyond_objective():
    sc = shifting_consensus(p=1, spacing_m=1.0, shift=1, horizon=10)
    wm = WeightMatrix(entries=np.full((3, 3), 1.0 / 3.0), beta=0.0)
    with pytest.raises(ValueError):
        run("dgt", sc, wm, alpha=0.1, horizon=11)


def test_run_rejects_unknown_algorithm():
    obj = Quadratic([[1.0]])
    with pytest.raises(ValueError):
        run("mystery", obj, single_node_weights(), alpha=0.1, horizon=1)


def test_run_records_divergence_without_crashing():
    # single agent so the overshoot compounds instead of averaging out
    obj = Quadratic([[1.0]])
    rec = run("diffusion", obj, single_node_weights(), alpha=1e6, horizon=200)
    assert len(rec) == 201
    assert not np.isfinite(rec.tracking_error).all()


def test_run_accepts_custom_initial_state():
    obj = Quadratic([[1.0], [-1.0]])
    x0 = np.full((2, 1), 10.0)
    state = init_state("diffusion", obj, pair_weights(), x0=x0)
    rec = run("diffusion", obj, pair_weights(), alpha=0.1, horizon=0, initial_state=state)
    assert rec.tracking_error[0] == 10.0


def test_record_round_trip(tmp_path):
    sc = shifting_consensus(p=2, spacing_m=1.0, shift=1, horizon=30)
    graph = build_random(5, 0.8, seed=7)
    wm = metropolis_weights(graph)
    rec = run("dgt", sc, wm, alpha=0.1, horizon=30)
    path = tmp_path / "run.csv"
    write_record(rec, path)
    loaded = read_record(path)
    assert np.array_equal(loaded.iterations, rec.iterations)
    assert np.array_equal(loaded.tracking_error, rec.tracking_error)
    assert np.array_equal(loaded.y_dev, rec.y_dev)
    assert loaded.metadata == rec.metadata
    assert loaded.tracker_identity_max == rec.tracker_identity_max


def test_record_round_trip_without_tracker(tmp_path):
    obj = Quadratic([[1.0], [-1.0]])
    rec = run("diffusion", obj, pair_weights(), alpha=0.1, horizon=20)
    path = tmp_path / "run.csv"
    write_record(rec, path)
    loaded = read_record(path)
    assert loaded.y_dev is None
    assert np.array_equal(loaded.avg_error, rec.avg_error)
