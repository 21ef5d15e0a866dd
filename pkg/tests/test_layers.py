import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqnn.errors import IncompatibleParametersError, InvalidNetworkError
from cvqnn.fock import Beamsplitter, FockState, Rotation, apply_gate, fidelity, quadrature_expectation
from cvqnn.layers import (
    InterferometerParams,
    LayerParams,
    NetworkParams,
    apply_single_mode_layers,
    dumps_ensemble,
    layer_forward,
    layer_unitary,
    loads_ensemble,
    network_forward,
    rectangular_pairs,
)


def single(u1=0.0, r=0.0, u2=0.0, alpha=0.0, kappa=0.0):
    return LayerParams(
        InterferometerParams([], [], [u1]), [r], InterferometerParams([], [], [u2]), [alpha], [kappa]
    )


def test_zero_layer_is_identity():
    psi = FockState.coherent([0.3 + 0.1j, -0.2], 8)
    out = layer_forward(psi, LayerParams.zeros(2))
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-13)


def test_displacement_only_layer_on_vacuum():
    out = layer_forward(FockState.vacuum(1, 30), single(alpha=0.5))
    assert quadrature_expectation(out, 0, "x") == pytest.approx(1.0, abs=1e-9)


def test_half_turn_twice_is_identity():
    psi = FockState.coherent([0.4 + 0.3j], 20)
    lp = single(u1=np.pi)
    out = layer_forward(layer_forward(psi, lp), lp)
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-12)


def test_depth_one_network_equals_layer():
    rng = np.random.default_rng(0)
    lp = LayerParams.random(2, rng, std=0.1)
    psi = FockState.coherent([0.2, 0.1j], 8)
    a = network_forward(psi, NetworkParams([lp]))
    b = layer_forward(psi, lp)
    assert np.array_equal(a.amplitudes, b.amplitudes)


def test_zero_network_is_identity():
    psi = FockState.fock([2], 6)
    out = network_forward(psi, NetworkParams.zeros(1, 2))
    assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-14)


def test_displacements_compose():
    net = NetworkParams([single(alpha=0.3), single(alpha=0.2)])
    out = network_forward(FockState.vacuum(1, 30), net)
    assert np.max(np.abs(out.amplitudes - FockState.coherent([0.5], 30).amplitudes)) <= 1e-9


def test_one_mode_interferometer_is_rotation():
    psi = FockState.coherent([0.5 - 0.2j], 15)
    out = layer_forward(psi, single(u1=0.8))
    assert np.allclose(out.amplitudes, apply_gate(psi, Rotation(0.8)).amplitudes, atol=1e-13)


def test_mode_mismatch():
    with pytest.raises(IncompatibleParametersError):
        layer_forward(FockState.vacuum(2, 4), LayerParams.zeros(1))
    with pytest.raises(InvalidNetworkError):
        NetworkParams([])
    with pytest.raises(InvalidNetworkError):
        NetworkParams([LayerParams.zeros(1), LayerParams.zeros(2)])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_parameter_count(n):
    assert LayerParams.zeros(n).flatten().size == 2 * (n * (n - 1) + n) + n + 2 * n + n


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_flatten_round_trip(n, seed):
    lp = LayerParams.random(n, np.random.default_rng(seed))
    back = LayerParams.unflatten(lp.flatten(), n)
    assert np.array_equal(back.flatten(), lp.flatten())


def test_norm_through_depth():
    net = NetworkParams.random(2, 4, seed=5, std=0.1)
    out = network_forward(FockState.coherent([0.2, 0.2], 8), net)
    assert abs(out.norm() - 1) <= 4 * 1e-10


def test_random_init_ranges():
    lp = LayerParams.random(3, np.random.default_rng(1))
    for arr in (lp.u1.theta, lp.u1.phi, lp.u1.phases, lp.u2.phases):
        assert np.all((arr >= 0) & (arr < 2 * np.pi))
    assert np.std(lp.squeeze_r) < 0.5


def test_interferometer_matrix_matches_single_photon_simulation():
    rng = np.random.default_rng(2)
    n = 3
    ip = InterferometerParams(rng.uniform(0, 6, 3), rng.uniform(0, 6, 3), rng.uniform(0, 6, 3))
    u = ip.matrix()
    for k in range(n):
        occ = [0] * n
        occ[k] = 1
        psi = FockState.fock(occ, 2)
        for g in ip.gates():
            psi = apply_gate(psi, g)
        for j in range(n):
            idx = [0] * n
            idx[j] = 1
            assert psi.amplitudes[tuple(idx)] == pytest.approx(u[j, k], abs=1e-12)


def test_rectangular_mesh_size():
    for n in range(1, 7):
        assert len(rectangular_pairs(n)) == n * (n - 1) // 2


def test_checkpoint_round_trip(tmp_path):
    net = NetworkParams.random(2, 3, seed=9)
    text = net.dumps()
    assert text.startswith("# modes=2 depth=3")
    assert all(line.startswith("layer ") for line in text.splitlines()[1:])
    back = NetworkParams.loads(text)
    assert np.array_equal(back.flatten(), net.flatten())
    net.save(tmp_path / "p.ckpt")
    assert np.array_equal(NetworkParams.load(tmp_path / "p.ckpt").flatten(), net.flatten())


def test_ensemble_checkpoint_round_trip():
    nets = [NetworkParams.random(1, 2, seed=s) for s in range(3)]
    back = loads_ensemble(dumps_ensemble(nets))
    assert len(back) == 3
    for a, b in zip(nets, back):
        assert np.array_equal(a.flatten(), b.flatten())


def test_batched_single_mode_kernel_matches_dense():
    rng = np.random.default_rng(4)
    c, members = 12, 3
    params = np.stack([LayerParams.random(1, rng, std=0.2).flatten() for _ in range(members)])
    x = np.stack([FockState.coherent([0.3 * k], c).vector() for k in range(members)], axis=1)
    out = apply_single_mode_layers(x[:, :, None], params, c)[:, :, 0]
    for k in range(members):
        dense = layer_unitary(LayerParams.unflatten(params[k], 1), c) @ x[:, k]
        assert np.allclose(out[:, k], dense, atol=1e-13)
    back = apply_single_mode_layers(out[:, :, None], params, c, adjoint=True)[:, :, 0]
    assert np.allclose(back, x, atol=1e-13)


def test_layer_gate_order():
    # squeeze between the two rotations: R(b) S(r) R(a) differs from S(r) R(a + b)
    lp = single(u1=0.4, r=0.3, u2=0.9)
    psi = FockState.coherent([0.5], 20)
    got = layer_forward(psi, lp)
    from cvqnn.fock import Squeeze

    want = apply_gate(apply_gate(apply_gate(psi, Rotation(0.4)), Squeeze(0.3)), Rotation(0.9))
    assert fidelity(got, want) == pytest.approx(1.0, abs=1e-12)


def test_two_mode_layer_uses_beamsplitter():
    lp = LayerParams.zeros(2)
    lp = LayerParams.from_groups({**dict(lp.groups()), "u1_theta": np.array([np.pi / 4])})
    out = layer_forward(FockState.fock([1, 0], 3), lp)
    want = apply_gate(FockState.fock([1, 0], 3), Beamsplitter(np.pi / 4, 0.0))
    assert np.allclose(out.amplitudes, want.amplitudes, atol=1e-13)
