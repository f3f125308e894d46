"""Property-based checks of the core identities."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from convlower.decompose import lower_kernel, reembed, split_k_tilde
from convlower.harness import certify_network
from convlower.networks import ShallowNet, build
from convlower.tensor import Constant, Periodic, conv2d

seeds = st.integers(0, 2**32 - 1)
pads = st.one_of(st.just(Periodic()), st.floats(-2, 2).map(Constant))


@given(seed=seeds, k=st.integers(2, 4), extra=st.integers(1, 4), M=st.integers(1, 2), pad=pads)
def test_lowering_is_exact(seed, k, extra, M, pad):
    rng = np.random.default_rng(seed)
    d = k + extra
    K = rng.uniform(-1, 1, (1, M, 2 * k + 1, 2 * k + 1))
    X = rng.uniform(-1, 1, (3, 1, d, d))
    np.testing.assert_allclose(lower_kernel(K, d).apply(X, pad), conv2d(K, X, pad), rtol=0, atol=1e-12)


@given(seed=seeds, pad=pads, a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_convolution_is_affine_in_input(seed, pad, a, b):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(2, 2, 3, 3))
    X, Y = rng.normal(size=(2, 2, 5, 5))
    zero = conv2d(K, np.zeros_like(X), pad)
    lhs = conv2d(K, a * X + b * Y, pad) - zero
    rhs = a * (conv2d(K, X, pad) - zero) + b * (conv2d(K, Y, pad) - zero)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@given(seed=seeds, shift=st.tuples(st.integers(-5, 5), st.integers(-5, 5)))
def test_periodic_convolution_commutes_with_roll(seed, shift):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(1, 2, 5, 5))
    X = rng.normal(size=(1, 6, 6))
    rolled = conv2d(K, np.roll(X, shift, axis=(1, 2)), Periodic())
    np.testing.assert_allclose(rolled, np.roll(conv2d(K, X, Periodic()), shift, axis=(1, 2)), atol=1e-12)


@given(seed=seeds, k=st.integers(2, 5))
def test_split_then_reembed_is_identity(seed, k):
    K = np.random.default_rng(seed).normal(size=(2 * k + 1, 2 * k + 1))
    assert np.array_equal(reembed(split_k_tilde(K)), K)


@given(
    seed=seeds,
    arch=st.sampled_from(["classic", "resnet", "preact", "mgnet"]),
    n=st.integers(1, 4),
    box=st.floats(0.25, 4.0),
    pad=pads,
)
def test_deep_networks_reproduce_shallow(seed, arch, n, box, pad):
    shallow = ShallowNet.random(4, n, seed=seed, box=box)
    net = build(arch, shallow, pad=pad)
    rep = certify_network(net, shallow, samples=25, seed=seed)
    assert rep.verdict == "Pass", rep
