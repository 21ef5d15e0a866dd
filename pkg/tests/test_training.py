import numpy as np
import pytest

from cvqnn.errors import InvalidBatchError, InvalidUpdateError, NonFiniteCostError
from cvqnn.fock import Displacement, FockState, Kerr, apply_gate, gate_matrix
from cvqnn.layers import InterferometerParams, LayerParams, NetworkParams, network_forward
from cvqnn.training import (
    CLASSIFICATION,
    DENOISE_IMAGE,
    RECONSTRUCTION,
    CostSpec,
    EnsembleObjective,
    NetworkObjective,
    OptimizerState,
    TrainConfig,
    TrainingAborted,
    aligned_amplitudes,
    cost_classification,
    cost_reconstruction,
    evaluate_cost,
    finite_diff_gradient,
    optimizer_step,
    projected_fidelities,
    train,
)


def unit(v):
    v = np.asarray(v, dtype=complex)
    return v / np.linalg.norm(v)


# -- costs ------------------------------------------------------------------------


def test_classification_cost_examples():
    states = [FockState.fock([k], 12) for k in range(10)]
    assert cost_classification(states, states) == 0.0
    assert cost_classification(states, states[1:] + states[:1]) == pytest.approx(10.0)
    half = FockState(1, 2, unit([1, 1]))
    assert cost_classification([half], [FockState.fock([0], 2)]) == pytest.approx(0.25)
    with pytest.raises(InvalidBatchError):
        cost_classification(states[:2], states[:3])


def test_reconstruction_cost_examples():
    c, dim = 6, 4
    t = unit([1, 2, 0, 1j])
    spec = CostSpec(RECONSTRUCTION, [t], gamma=10, subspace_dim=dim)
    padded = np.zeros(c, complex)
    padded[:dim] = t
    assert cost_reconstruction([padded], spec) == pytest.approx(0.0, abs=1e-15)
    leaky = np.sqrt(0.5) * padded
    leaky[c - 1] = np.sqrt(0.5)
    assert cost_reconstruction([leaky], spec) == pytest.approx(2.5, abs=1e-12)
    # penalty off: the projected-state fidelity form
    other = unit([1, 0, 0, 0, 0.5, 0.5])
    spec0 = CostSpec(RECONSTRUCTION, [t], gamma=0, subspace_dim=dim)
    f = abs(np.vdot(t, other[:dim])) ** 2 / np.linalg.norm(other[:dim]) ** 2
    assert cost_reconstruction([other], spec0) == pytest.approx((f - 1) ** 2, abs=1e-14)


def test_costs_nonnegative_and_zero_only_at_match():
    rng = np.random.default_rng(0)
    t = [unit(rng.normal(size=4) + 1j * rng.normal(size=4)) for _ in range(3)]
    spec = CostSpec(RECONSTRUCTION, t, subspace_dim=4)
    outs = [unit(rng.normal(size=7) + 1j * rng.normal(size=7)) for _ in range(3)]
    assert cost_reconstruction(outs, spec) > 0
    exact = [np.r_[v, np.zeros(3)] for v in t]
    assert cost_reconstruction(exact, spec) == pytest.approx(0, abs=1e-14)


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(RECONSTRUCTION, [np.ones(4)], subspace_dim=4)
    with pytest.raises(ValueError):
        CostSpec(RECONSTRUCTION, [unit([1, 0, 0])], gamma=-1, subspace_dim=3)


def test_denoise_kinds_have_no_penalty():
    t = unit([1, 1j, 0])
    leaky = np.r_[np.sqrt(0.5) * t, np.sqrt(0.5)]
    assert evaluate_cost([leaky], CostSpec(DENOISE_IMAGE, [t], subspace_dim=3)) == pytest.approx(0, abs=1e-14)


def test_aligned_amplitudes_remove_global_phase():
    t = unit([1, 2j, -1])
    out = np.r_[np.exp(0.7j) * t, 0.0][:, None]
    got = aligned_amplitudes(out, t[:, None], 3)
    assert np.allclose(got[:, 0], t, atol=1e-14)


# -- finite differences -------------------------------------------------------------


def test_quadratic_gradient():
    g = finite_diff_gradient(lambda th: float(np.sum(th**2)), np.array([1.0, -2.0]))
    assert np.allclose(g, [2, -4], atol=1e-8)


def test_constant_gradient():
    assert np.array_equal(finite_diff_gradient(lambda th: 3.0, np.zeros(4)), np.zeros(4))


def test_nonfinite_cost_reports_coordinate():
    def cost(th):
        return np.inf if th[2] > 0 else 0.0

    with pytest.raises(NonFiniteCostError) as info:
        finite_diff_gradient(cost, np.zeros(4))
    assert info.value.coordinate == 2


def kerr_problem(cutoff=12):
    psi = FockState.coherent([0.6 + 0.2j], cutoff).vector()
    target = apply_gate(FockState.coherent([0.5], cutoff), Kerr(0.45)).vector()
    n2 = np.arange(cutoff) ** 2

    def cost(th):
        amp = np.vdot(target, np.exp(1j * th[0] * n2) * psi)
        return 1 - abs(amp) ** 2

    def analytic(kappa):
        amp = np.vdot(target, np.exp(1j * kappa * n2) * psi)
        damp = np.vdot(target, 1j * n2 * np.exp(1j * kappa * n2) * psi)
        return -2 * np.real(np.conj(amp) * damp)

    return cost, analytic


def test_kerr_gradient_matches_analytic():
    cost, analytic = kerr_problem()
    g = finite_diff_gradient(cost, np.array([0.3]), h=1e-4)[0]
    assert g == pytest.approx(analytic(0.3), abs=1e-6)


def test_kerr_gradient_step_halving():
    cost, _ = kerr_problem()
    g1 = finite_diff_gradient(cost, np.array([0.3]), h=1e-4)[0]
    g2 = finite_diff_gradient(cost, np.array([0.3]), h=5e-5)[0]
    assert abs(g1 - g2) / abs(g2) <= 1e-3


def test_parallel_gradient_identical():
    cost, _ = kerr_problem()
    f = lambda th: cost(th[:1]) + float(np.sum(np.sin(th)))
    th = np.linspace(0.1, 0.9, 6)
    assert np.array_equal(finite_diff_gradient(f, th, workers=1), finite_diff_gradient(f, th, workers=3))


# -- objective fast paths agree with plain central differences ------------------------------


def test_network_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    c, depth = 6, 2
    net = NetworkParams.random(2, depth, rng=rng, std=0.1)
    inputs = np.stack([FockState.coherent([0.2, -0.1j * k], c).amplitudes for k in range(3)], -1)
    targets = [FockState.coherent([0.5 * (k % 2), 0.5 * (1 - k % 2)], c) for k in range(3)]
    obj = NetworkObjective(inputs, CostSpec(CLASSIFICATION, targets), 2, depth, c)
    th = net.flatten()
    assert np.allclose(obj.gradient(th), finite_diff_gradient(obj, th), atol=1e-9)


def test_ensemble_objective_matches_network_forward_and_gradient():
    rng = np.random.default_rng(2)
    c, dim, depth, members = 10, 6, 3, 4
    nets = [NetworkParams.random(1, depth, rng=rng, std=0.1) for _ in range(members)]
    x = np.stack([gate_matrix(Displacement(0.2 * k), c)[:, 0] for k in range(members)], 1)
    t = [unit(rng.normal(size=dim) + 1j * rng.normal(size=dim)) for _ in range(members)]
    spec = CostSpec(RECONSTRUCTION, t, gamma=3.0, subspace_dim=dim)
    obj = EnsembleObjective(x, spec, depth, c)
    th = np.concatenate([n.flatten() for n in nets])
    out = obj.outputs(th)
    for k, n in enumerate(nets):
        want = network_forward(FockState(1, c, x[:, k]), n).vector()
        assert np.allclose(out[:, k], want, atol=1e-13)
    assert np.allclose(obj.gradient(th), finite_diff_gradient(obj, th), atol=1e-9)


def test_shared_reconstruction_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    c, dim, depth = 9, 5, 2
    net = NetworkParams.random(1, depth, rng=rng, std=0.1)
    x = np.stack([gate_matrix(Displacement(0.3j * k), c)[:, 0] for k in range(3)], 1)
    t = [unit(rng.normal(size=dim)) for _ in range(3)]
    obj = NetworkObjective(x, CostSpec(RECONSTRUCTION, t, subspace_dim=dim), 1, depth, c)
    th = net.flatten()
    assert np.allclose(obj.gradient(th), finite_diff_gradient(obj, th), atol=1e-9)


# -- optimizers -----------------------------------------------------------------------


def test_zero_gradient_leaves_parameters():
    for kind in ("adam", "rmsprop"):
        st = OptimizerState.init(kind, 3)
        _, th = optimizer_step(st, np.array([1.0, 2.0, 3.0]), np.zeros(3))
        assert np.array_equal(th, [1.0, 2.0, 3.0])


def test_adam_first_step():
    st = OptimizerState.init("adam", 1, 0.001)
    st, th = optimizer_step(st, np.zeros(1), np.array([2.0]))
    assert th[0] == pytest.approx(-0.001, abs=1e-11)
    assert st.t == 1


def test_rmsprop_first_step():
    st = OptimizerState.init("rmsprop", 1, 0.001)
    _, th = optimizer_step(st, np.zeros(1), np.array([1.0]))
    assert th[0] == pytest.approx(-0.003162, abs=1e-6)
    assert th[0] == pytest.approx(-0.001 / np.sqrt(0.1 + 1e-8), rel=1e-12)


def test_adam_first_update_bounded_by_learning_rate():
    st = OptimizerState.init("adam", 5, 0.01)
    g = np.array([1e-6, 1e-2, 1.0, 1e3, -1e6])
    _, th = optimizer_step(st, np.zeros(5), g)
    assert np.all(np.abs(th) <= 0.01 * (1 + 1e-6))


def test_optimizer_shape_mismatch():
    st = OptimizerState.init("adam", 2)
    with pytest.raises(InvalidUpdateError):
        optimizer_step(st, np.zeros(2), np.zeros(3))


# -- training loop ----------------------------------------------------------------------


def coherent_target_batch(cutoff=20):
    spec = CostSpec(CLASSIFICATION, [FockState.coherent([0.5], cutoff)])
    return [FockState.vacuum(1, cutoff)], spec


def test_single_displacement_parameter_converges():
    inputs, spec = coherent_target_batch()
    vac = inputs[0].vector()

    def cost(th):
        out = gate_matrix(Displacement(th[0]), 20) @ vac
        return evaluate_cost(out[:, None], spec)

    st, th = OptimizerState.init("adam", 1, 0.01), np.zeros(1)
    for _ in range(200):
        st, th = optimizer_step(st, th, finite_diff_gradient(cost, th))
    assert cost(th) < 1e-4


def test_train_reaches_coherent_target():
    batch = coherent_target_batch()
    net, trace = train(NetworkParams.zeros(1, 1), lambda s, r: batch, TrainConfig(learning_rate=0.01, steps=200))
    assert trace.records[-1][1] < 1e-4
    assert trace.records[0][0] == 1


def test_train_one_step_with_zero_gradient():
    vac = FockState.vacuum(1, 5)
    spec = CostSpec(CLASSIFICATION, [vac])
    # vacuum in, vacuum target: every coordinate is stationary at zero
    net, trace = train(NetworkParams.zeros(1, 1), lambda s, r: ([vac], spec), TrainConfig(steps=1))
    assert np.array_equal(net.flatten(), np.zeros(6))
    assert [s for s, _ in trace.records] == [1]
    assert trace.records[0][1] == pytest.approx(0.0, abs=1e-25)


def test_training_is_deterministic():
    batch = coherent_target_batch(10)
    cfg = TrainConfig(learning_rate=0.01, steps=15, seed=4)
    a = train(NetworkParams.random(1, 2, seed=4), lambda s, r: batch, cfg)
    b = train(NetworkParams.random(1, 2, seed=4), lambda s, r: batch, cfg)
    assert a[1].to_csv() == b[1].to_csv()
    assert np.array_equal(a[0].flatten(), b[0].flatten())


def test_trace_csv(tmp_path):
    batch = coherent_target_batch(10)
    _, trace = train(NetworkParams.zeros(1, 1), lambda s, r: batch, TrainConfig(steps=5, log_every=2))
    lines = trace.to_csv().splitlines()
    assert lines[0] == "step,cost"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2", "4"]
    trace.save(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == trace.to_csv()


def test_training_aborts_on_escaped_state():
    c, dim = 8, 4
    escaped = np.zeros((c, 1), complex)
    escaped[c - 1] = 1
    spec = CostSpec(RECONSTRUCTION, [unit([1, 0, 0, 0])], subspace_dim=dim)
    with pytest.raises(TrainingAborted) as info:
        train([NetworkParams.zeros(1, 1)], lambda s, r: (escaped, spec), TrainConfig(steps=3), cutoff=c)
    assert info.value.trace.records == []
    assert info.value.params is not None


def test_training_aborts_on_nonfinite_input():
    c = 5
    bad = np.full((c, 1), np.nan, dtype=complex)
    spec = CostSpec(CLASSIFICATION, [FockState.vacuum(1, c)])
    with pytest.raises(TrainingAborted):
        train(NetworkParams.zeros(1, 1), lambda s, r: (bad, spec), TrainConfig(steps=2), cutoff=c)


def test_keep_best_returns_lowest_cost_members():
    c, dim = 12, 6
    rng = np.random.default_rng(5)
    x = np.stack([gate_matrix(Displacement(0.1 * k), c)[:, 0] for k in range(2)], 1)
    t = [unit(rng.normal(size=dim)) for _ in range(2)]
    spec = CostSpec(RECONSTRUCTION, t, subspace_dim=dim)
    nets = [NetworkParams.random(1, 2, rng=rng) for _ in range(2)]
    seen = []
    cfg = TrainConfig(learning_rate=0.2, steps=30, keep_best=True)

    def record(step, theta, cost):
        seen.append(EnsembleObjective(x, spec, 2, c).costs(theta))

    best, _ = train(nets, lambda s, r: (x, spec), cfg, cutoff=c, callback=record)
    start = EnsembleObjective(x, spec, 2, c).costs(np.concatenate([n.flatten() for n in nets]))
    lowest = np.minimum(start, np.min(seen, axis=0))
    got = EnsembleObjective(x, spec, 2, c).costs(np.concatenate([n.flatten() for n in best]))
    assert np.allclose(got, lowest, rtol=0, atol=1e-15)


def test_projected_fidelities_weights():
    out = np.zeros((5, 1), complex)
    out[0], out[4] = np.sqrt(0.25), np.sqrt(0.75)
    f, w = projected_fidelities(out, np.eye(3)[:, :1], 3)
    assert f[0] == pytest.approx(1.0)
    assert w[0] == pytest.approx(0.25)
