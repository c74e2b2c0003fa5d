import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import probe_params
from tdn.errors import ShapeError
from tdn.idn import IDN_ARCHITECTURES, IdnModel, build_idn, diagonalize, idn_apply, idn_backward, idn_forward
from tdn.nn import Dense, Network, activate


def test_diagonalize_example():
    np.testing.assert_array_equal(diagonalize(np.array([[1.0, 2.0, 3.0]])), np.diag([1.0, 2.0, 3.0]))


def test_diagonalize_zero():
    assert not diagonalize(np.zeros((3, 4))).any()


def test_diagonalize_partition(rng):
    z = rng.normal(size=(2, 5))
    rows = diagonalize(z)
    assert rows.shape == (10, 5)
    np.testing.assert_array_equal(rows.reshape(2, 5, 5).sum(axis=1), z)


def test_diagonalize_rejects_1d():
    with pytest.raises(ShapeError):
        diagonalize(np.zeros(3))


def test_identity_core():
    idn = IdnModel(Network([Dense(np.eye(4), np.zeros(4), "affine")]))
    z = np.random.default_rng(0).normal(size=(6, 4))
    np.testing.assert_array_equal(idn_forward(idn, z).delta, z)


def test_bias_only_core():
    b = np.array([0.5, -1.0, 2.0])
    idn = IdnModel(Network([Dense(np.zeros((3, 3)), b, "tanh")]))
    out = idn_forward(idn, np.random.default_rng(1).normal(size=(5, 3))).delta
    np.testing.assert_array_equal(out, np.broadcast_to(np.tanh(b), (5, 3)))


def test_non_square_core_rejected(rng):
    with pytest.raises(ShapeError):
        IdnModel(Network.build([(3, 4)], rng))


def test_width_mismatch(rng):
    with pytest.raises(ShapeError):
        idn_forward(build_idn("D1", 5, rng), np.zeros((2, 4)))


@pytest.mark.parametrize("arch", sorted(IDN_ARCHITECTURES))
def test_loop_oracle(arch, rng):
    idn = build_idn(arch, 5, rng)
    z = rng.normal(size=(8, 5))
    expect = np.empty_like(z)
    for k in range(8):
        for j in range(5):
            row = np.zeros(5)
            row[j] = z[k, j]
            a = row
            for layer in idn.core.layers:
                a = activate(layer.activation, layer.weight @ a + layer.bias)
            expect[k, j] = a[j]
    np.testing.assert_allclose(idn_forward(idn, z).delta, expect, rtol=0, atol=1e-12)


def test_apply_matches_forward(rng):
    idn = build_idn("D2", 5, rng)
    z = rng.normal(size=(1000, 5))
    np.testing.assert_allclose(idn_apply(idn, z, chunk=64), idn_forward(idn, z).delta, rtol=0, atol=1e-13)


def test_zero_upstream(rng):
    idn = build_idn("D3", 5, rng)
    fwd = idn_forward(idn, rng.normal(size=(4, 5)))
    assert all(not g.any() for g in idn_backward(idn, fwd, np.zeros((4, 5))))


def test_backward_shape(rng):
    idn = build_idn("D1", 5, rng)
    fwd = idn_forward(idn, rng.normal(size=(4, 5)))
    with pytest.raises(ShapeError):
        idn_backward(idn, fwd, np.zeros((4, 4)))


@pytest.mark.parametrize("arch", sorted(IDN_ARCHITECTURES))
def test_finite_difference(arch, rng):
    idn = build_idn(arch, 5, rng, hidden=12)
    z = rng.normal(size=(6, 5))
    C = rng.normal(size=(6, 5))
    fwd = idn_forward(idn, z)
    grads = idn_backward(idn, fwd, C)
    errs = probe_params(idn.core.parameters(), grads, lambda: float(np.sum(C * idn_forward(idn, z).delta)), 150, rng)
    assert max(errs) < 1e-5


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(sorted(IDN_ARCHITECTURES)),
    st.integers(0, 2**31 - 1),
    st.integers(0, 4),
    arrays(np.float64, 5, elements=st.floats(-4, 4)),
    st.floats(-4, 4),
)
def test_decoupling_exact(arch, seed, i, z, new):
    idn = build_idn(arch, 5, np.random.default_rng(seed), hidden=20)
    z2 = z.copy()
    z2[i] = new
    a = idn_forward(idn, z[None]).delta[0]
    b = idn_forward(idn, z2[None]).delta[0]
    others = np.arange(5) != i
    assert np.array_equal(a[others], b[others])


def test_decoupling_in_large_batch(rng):
    # the same check over 1000 random inputs evaluated as one batch
    idn = build_idn("D3", 5, rng)
    Z = rng.normal(size=(1000, 5))
    base = idn_forward(idn, Z).delta
    for i in range(5):
        Z2 = Z.copy()
        Z2[:, i] = rng.normal(size=1000)
        d = idn_forward(idn, Z2).delta
        others = np.arange(5) != i
        assert np.array_equal(base[:, others], d[:, others])


def test_permutation_equivariance_with_permuted_weights(rng):
    idn = build_idn("D2", 5, rng)
    perm = rng.permutation(5)
    layers = idn.core.copy().layers
    layers[0].weight = layers[0].weight[:, perm]
    layers[-1].weight = layers[-1].weight[perm, :]
    layers[-1].bias = layers[-1].bias[perm]
    permuted = IdnModel(Network(layers))
    z = rng.normal(size=(20, 5))
    np.testing.assert_allclose(idn_forward(permuted, z[:, perm]).delta, idn_forward(idn, z).delta[:, perm],
                               rtol=0, atol=1e-12)


def test_bundle_round_trip(rng):
    from tdn.serialization import dumps, loads

    idn = build_idn("D3", 5, rng)
    back = IdnModel.from_bundle(loads(dumps(idn.to_bundle())))
    z = rng.normal(size=(3, 5))
    assert back.architecture == "D3"
    assert np.array_equal(idn_forward(back, z).delta, idn_forward(idn, z).delta)
