import numpy as np
import pytest

from convlower.exceptions import (
    DimensionMismatch,
    DomainTooSmall,
    InvalidDimension,
    ParseError,
    ShapeMismatch,
    SoundnessFailure,
)
from convlower.networks import (
    MGNET,
    PREACT,
    DeepNet,
    ShallowNet,
    _affine_offset,
    build,
    build_classic,
    build_mgnet,
    build_preact_resnet,
    build_resnet,
    lift_shallow,
    min_certified_preactivation,
    pad_input,
    pad_shallow,
    preactivations,
    propagate_bounds,
    random_residual_kernels,
    read_index,
    residual_widths,
    zero_residual_kernels,
)
from convlower.serialization import dumps, loads
from convlower.tensor import Constant, Periodic, conv2d, relu, vectorize


def reference(net: ShallowNet, xs):
    # plain matrix form, independent of any convolution code
    v = xs.reshape(len(xs), -1)
    return np.maximum(v @ net.W.T + net.beta, 0) @ net.alpha


def samples(rng, d, n=40, box=1.0):
    xs = rng.uniform(-box, box, (n, 1, d, d))
    xs[0], xs[1], xs[2] = box, -box, 0.0
    return xs


def test_shallow_net_formula(rng):
    net = ShallowNet.random(5, 7, seed=3)
    xs = samples(rng, 5)
    np.testing.assert_allclose(net(xs), reference(net, xs), rtol=1e-14)
    assert net.width == 7 and net.d == 5
    assert isinstance(net(xs[0]), float)


def test_shallow_validation():
    with pytest.raises(DimensionMismatch):
        ShallowNet(np.ones((2, 9)), np.ones(3), np.ones(2))
    with pytest.raises(DimensionMismatch):
        ShallowNet(np.ones((2, 10)), np.ones(2), np.ones(2))
    with pytest.raises(InvalidDimension):
        ShallowNet(np.ones((2, 9)), np.ones(2), np.ones(2), box=0.0)


@pytest.mark.parametrize("d", [4, 5, 7, 8])
def test_read_pixel_sees_whole_image(d):
    # the kernel window around the read pixel covers rows 0..d-1 without padding reads of W
    r, k = read_index(d), d // 2
    assert r - k == 0 and r + k >= d - 1


@pytest.mark.parametrize("d", [7, 8])
def test_lift_is_padding_independent(rng, d):
    net = ShallowNet.random(d, 6, seed=d)
    big = lift_shallow(net)
    assert big.kernel.shape == (1, 6, 2 * (d // 2) + 1, 2 * (d // 2) + 1)
    xs = samples(rng, d)
    want = reference(net, xs)
    outs = [big(xs, pad) for pad in (Constant(0.0), Constant(-3.5), Periodic())]
    for out in outs:
        np.testing.assert_allclose(out, want, rtol=1e-12, atol=1e-12)
    assert np.array_equal(outs[0], outs[1]) and np.array_equal(outs[0], outs[2])


@pytest.mark.parametrize("d", [5, 6, 7, 8])
@pytest.mark.parametrize("pad", [Constant(0.0), Constant(1.3), Periodic()])
def test_classic_identity(rng, d, pad):
    net = ShallowNet.random(d, 5, seed=d, box=2.0)
    deep = build_classic(net, pad=pad)
    assert deep.depth == d // 2
    assert deep.widths == [(2 * l + 1) ** 2 for l in range(1, d // 2)] + [5]
    xs = samples(rng, d, box=2.0)
    want = reference(net, xs)
    np.testing.assert_allclose(deep(xs), want, rtol=0, atol=1e-10 * (1 + np.abs(want).max()))
    assert min_certified_preactivation(deep, xs).min() >= -1e-12


def test_hidden_preactivations_within_bounds(rng):
    net = ShallowNet.random(7, 4, seed=1)
    deep = build_classic(net, pad=Periodic())
    xs = samples(rng, 7)
    bounds = dict(propagate_bounds(deep, 1.0))
    for label, z, certified in preactivations(deep, xs):
        assert bounds[label].contains(z, tol=1e-9)
        if certified:
            assert bounds[label].lo.min() >= -1e-12


def test_residual_widths():
    c, C = residual_widths(8, 3)
    assert c == [25, 3] and C == [18, 98]
    c, C = residual_widths(12, 4)
    assert c == [25, 81, 4] and C == [18, 98, 242]


@pytest.mark.parametrize("builder", [build_resnet, build_preact_resnet, build_mgnet])
@pytest.mark.parametrize("pad", [Constant(0.0), Periodic()])
@pytest.mark.parametrize("kind", ["identity", "zero", "random"])
def test_residual_identity(rng, builder, pad, kind):
    shallow = ShallowNet.random(8, 3, seed=5)
    extra = 0 if builder is build_resnet else 2
    R = {
        "identity": None,
        "zero": zero_residual_kernels(8, 3 + extra),
        "random": random_residual_kernels(8, 3 + extra, seed=9),
    }[kind]
    net = builder(shallow, pad=pad, given_R=R)
    assert net.depth == 2 and net.out_channels == 3 + extra
    assert [blk.hidden_channels for blk in net.layers] == [18, 98]
    xs = samples(rng, 8)
    want = reference(shallow, xs)
    assert np.max(np.abs(net(xs) - want) / (1 + np.abs(want))) <= 1e-10
    assert min_certified_preactivation(net, xs).min() >= -1e-12


def test_twelve_pixel_preact(rng):
    shallow = ShallowNet.random(12, 2, seed=2)
    net = build_preact_resnet(shallow, pad=Periodic(), given_R=random_residual_kernels(12, 4, seed=1))
    assert net.depth == 3
    xs = samples(rng, 12, n=10)
    np.testing.assert_allclose(net(xs), reference(shallow, xs), atol=1e-9)


def _leak_oracle(net, xs):
    """readout . vectorize(R * f^{L-1}(x)), evaluated from the stored blocks."""
    head = DeepNet(net.arch, net.pad, net.layers[:-1], np.zeros(net.layers[-2].out_channels * 64))
    from convlower.networks import _run

    f = _run(head, xs)[0]
    return vectorize(conv2d(net.layers[-1].R, f, net.pad)) @ net.readout


@pytest.mark.parametrize("builder", [build_preact_resnet, build_mgnet])
def test_aux_channels_carry_leak(rng, builder):
    shallow = ShallowNet.random(8, 4, seed=7)
    net = builder(shallow, pad=Constant(0.0), given_R=random_residual_kernels(8, 6, seed=3))
    xs = samples(rng, 8)
    z = preactivations(net, xs)[-1][1]
    r = read_index(8)
    aux = relu(z[:, 4, r, r]) - relu(z[:, 5, r, r])
    np.testing.assert_allclose(aux, _leak_oracle(net, xs), atol=1e-9)
    h, c = net.meta["leak"]
    np.testing.assert_allclose(aux, xs.reshape(len(xs), -1) @ h + c, atol=1e-9)


def test_mgnet_equals_preact_bitwise(rng):
    shallow = ShallowNet.random(8, 3, seed=1)
    R = random_residual_kernels(8, 5, seed=2)
    pre = build_preact_resnet(shallow, pad=Periodic(), given_R=R)
    mg = build_mgnet(shallow, pad=Periodic(), given_R=R)
    assert mg.arch == MGNET and all(np.all(b.theta == 0) for b in mg.layers)
    xs = samples(rng, 8)
    assert np.array_equal(pre(xs), mg(xs))


def test_residual_errors():
    shallow = ShallowNet.random(7, 3, seed=0)
    with pytest.raises(InvalidDimension):
        build_resnet(shallow)
    good = ShallowNet.random(8, 3, seed=0)
    with pytest.raises(ShapeMismatch):
        build_resnet(good, given_R=[np.zeros((1, 25, 1, 1))])
    with pytest.raises(ShapeMismatch):
        build_resnet(good, given_R=[np.zeros((1, 25, 1, 1)), np.zeros((25, 4, 1, 1))])
    with pytest.raises(ShapeMismatch):
        build("classic", good, given_R=[])
    with pytest.raises(ShapeMismatch):
        build("vgg", good)


def test_domain_too_small():
    with pytest.raises(DomainTooSmall):
        build_classic(ShallowNet.random(2, 2, seed=0))


def test_padding_shallow_to_multiple_of_four(rng):
    shallow = ShallowNet.random(6, 3, seed=4)
    big = pad_shallow(shallow)
    assert big.d == 8
    net = build_preact_resnet(big)
    xs = samples(rng, 6)
    np.testing.assert_allclose(net(pad_input(xs, 8)), reference(shallow, xs), atol=1e-10)
    with pytest.raises(InvalidDimension):
        pad_input(xs, 4)


def test_offset_check_rejects_non_affine_stack():
    d = 4
    kernel = np.zeros((1, 1, 5, 5))

    def bent(x):
        return np.abs(conv2d(np.ones((1, 1, 1, 1)), x[None] if x.ndim == 3 else x, Periodic()))

    with pytest.raises(SoundnessFailure):
        _affine_offset(bent, kernel, d, Periodic(), 1.0)


@pytest.mark.parametrize("arch", ["classic", "resnet", "preact", "mgnet"])
def test_deep_net_json_roundtrip(rng, arch):
    shallow = ShallowNet.random(8, 2, seed=1)
    net = build(arch, shallow, pad=Constant(0.25))
    text = dumps(net.to_dict())
    again = DeepNet.from_dict(loads(text))
    assert dumps(again.to_dict()) == text
    xs = samples(rng, 8, n=5)
    assert np.array_equal(again(xs), net(xs))


def test_deep_net_parse_errors():
    net = build("classic", ShallowNet.random(4, 2, seed=1))
    doc = net.to_dict()
    with pytest.raises(ParseError, match="net.arch"):
        DeepNet.from_dict(dict(doc, arch="vgg"))
    with pytest.raises(ParseError, match="net.readout"):
        DeepNet.from_dict({k: v for k, v in doc.items() if k != "readout"})
    with pytest.raises(ParseError):
        DeepNet.from_dict(dict(doc, readout=[1.0, 2.0, 3.0]))


def test_shallow_json_roundtrip():
    net = ShallowNet.random(4, 3, seed=2, box=1.5)
    text = dumps(net.to_dict())
    assert dumps(ShallowNet.from_dict(loads(text)).to_dict()) == text
    with pytest.raises(ParseError, match="shallow.box"):
        ShallowNet.from_dict(dict(net.to_dict(), box=-1))
    with pytest.raises(ParseError, match=r"shallow.W"):
        ShallowNet.from_dict(dict(net.to_dict(), W=[[1.0], [1.0, 2.0]]))
