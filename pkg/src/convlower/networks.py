"""Deep 3x3 ReLU CNNs that reproduce a one-hidden-layer ReLU network.

Pipeline: a shallow net ``alpha . relu(W v + beta)`` is first written as a
single big-kernel convolution read at one interior pixel
(:func:`lift_shallow`). The big kernel is lowered to a stack of 3x3 layers
and every hidden bias is chosen from sound interval bounds so that hidden
ReLUs never clip on the input box (:func:`lower_to_deep`). The same kernels
are rearranged into ResNet, pre-activation ResNet and MgNet blocks by the
``build_*`` functions.

All constructions are identities on the box ``[-box, box]^(d x d)``, not
approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bounds import ChannelBounds, bias_bounds, conv_bounds, relu_bounds
from .decompose import lower_kernel
from .exceptions import (
    DimensionMismatch,
    DomainTooSmall,
    InvalidDimension,
    ParseError,
    ShapeMismatch,
    SoundnessFailure,
)
from .serialization import require, tensor_from_json, tensor_to_json, vector_from_json
from .tensor import (
    Constant,
    Padding,
    as_padding,
    check_kernel,
    conv2d,
    embed_center,
    identity_kernel,
    relu,
    vectorize,
)

CLASSIC, RESNET, PREACT, MGNET = "classic", "resnet", "preact", "mgnet"
ARCHITECTURES = (CLASSIC, RESNET, PREACT, MGNET)

# absolute tolerance on the affine-offset cross-check
OFFSET_TOL = 1e-9


def read_index(d: int) -> int:
    """0-based row/column of the pixel that carries the shallow net's units."""
    return d // 2


def _as_images(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-2:] != (d, d):
        raise ShapeMismatch(f"expected inputs with spatial shape ({d}, {d}), got {x.shape}")
    if x.ndim == 2 or x.shape[-3] != 1:
        x = x[..., None, :, :]
    return x


@dataclass(frozen=True)
class ShallowNet:
    """``f(v) = alpha . relu(W v + beta)`` on ``v = vectorize(x)``, ``x`` in the box."""

    W: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    box: float = 1.0

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if W.ndim != 2 or beta.shape[0] != W.shape[0] or alpha.shape[0] != W.shape[0]:
            raise DimensionMismatch(
                f"W {W.shape}, beta {beta.shape}, alpha {alpha.shape} do not agree on the width"
            )
        d = int(round(np.sqrt(W.shape[1])))
        if d * d != W.shape[1]:
            raise DimensionMismatch(f"W must have d**2 columns, got {W.shape[1]}")
        if not self.box > 0:
            raise InvalidDimension(f"box half-width must be positive, got {self.box}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "box", float(self.box))

    @property
    def width(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.W.shape[1])))

    @classmethod
    def random(cls, d: int, n: int, seed=0, box: float = 1.0) -> "ShallowNet":
        rng = np.random.default_rng(seed)
        return cls(
            rng.uniform(-1, 1, (n, d * d)),
            rng.uniform(-1, 1, n),
            rng.uniform(-1, 1, n),
            box,
        )

    def hidden(self, x) -> np.ndarray:
        v = vectorize(_as_images(x, self.d))
        return relu(v @ self.W.T + self.beta)

    def __call__(self, x):
        out = self.hidden(x) @ self.alpha
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        return {
            "W": [[float(v) for v in row] for row in self.W],
            "beta": [float(v) for v in self.beta],
            "alpha": [float(v) for v in self.alpha],
            "box": self.box,
        }

    @classmethod
    def from_dict(cls, doc, path: str = "shallow") -> "ShallowNet":
        rows = require(doc, "W", path)
        if not isinstance(rows, list) or not rows:
            raise ParseError(f"{path}.W", "expected a non-empty list of rows")
        W = [vector_from_json(r, f"{path}.W[{i}]") for i, r in enumerate(rows)]
        if len({len(r) for r in W}) != 1:
            raise ParseError(f"{path}.W", "rows have different lengths")
        beta = vector_from_json(require(doc, "beta", path), f"{path}.beta")
        alpha = vector_from_json(require(doc, "alpha", path), f"{path}.alpha")
        box = doc.get("box", 1.0)
        if not isinstance(box, (int, float)) or isinstance(box, bool) or not box > 0:
            raise ParseError(f"{path}.box", "must be a positive number")
        try:
            return cls(np.array(W), beta, alpha, float(box))
        except DimensionMismatch as exc:
            raise ParseError(path, str(exc)) from None


@dataclass(frozen=True)
class BigKernelCNN:
    """One conv layer with a ``(2*(d//2)+1)``-square kernel, ReLU and a linear readout."""

    kernel: np.ndarray
    bias: np.ndarray
    readout: np.ndarray
    d: int

    def __call__(self, x, pad: Padding = Constant()):
        x = _as_images(x, self.d)
        z = conv2d(self.kernel, x, pad) + self.bias[:, None, None]
        out = vectorize(relu(z)) @ self.readout
        return float(out) if np.ndim(out) == 0 else out


def lift_shallow(net: ShallowNet, d: Optional[int] = None) -> BigKernelCNN:
    """Write a shallow net as a big-kernel CNN read at one interior pixel.

    Row ``n`` of ``W`` becomes channel ``n`` of the kernel. For even ``d`` the
    kernel is ``d+1`` wide with its last row and column zero. The read pixel
    never touches padding, so the result is padding independent.
    """
    if d is None:
        d = net.d
    if net.W.shape[1] != d * d:
        raise DimensionMismatch(f"W has {net.W.shape[1]} columns, expected d**2 = {d * d}")
    half = d // 2
    ks = 2 * half + 1
    kernel = np.zeros((1, net.width, ks, ks))
    kernel[0, :, :d, :d] = net.W.reshape(net.width, d, d)
    r = read_index(d)
    readout = np.zeros((net.width, d, d))
    readout[:, r, r] = net.alpha
    return BigKernelCNN(kernel, net.beta.copy(), readout.reshape(-1), d)


@dataclass(frozen=True)
class ConvLayer:
    """``relu(kernel * f + bias)``. ``linear`` marks a bias chosen to keep the ReLU inactive."""

    kernel: np.ndarray
    bias: np.ndarray
    linear: bool = False

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[1]


@dataclass(frozen=True)
class ResidualBlock:
    """One residual block; the formula depends on the owning network's architecture.

    resnet: ``relu(R*f + B*relu(A*f + a) + b)``
    preact: ``R*f + relu(B*relu(A*f + a) + b)``
    mgnet:  ``R*f + relu(B*relu(theta*x - A*f + a) + b)``
    """

    A: np.ndarray
    a: np.ndarray
    B: np.ndarray
    b: np.ndarray
    R: np.ndarray
    theta: Optional[np.ndarray] = None
    inner_linear: bool = False
    outer_linear: bool = False

    @property
    def out_channels(self) -> int:
        return self.B.shape[1]

    @property
    def hidden_channels(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class DeepNet:
    arch: str
    pad: Padding
    layers: Tuple
    readout: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ShapeMismatch(f"unknown architecture {self.arch!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "pad", as_padding(self.pad))
        object.__setattr__(self, "readout", np.asarray(self.readout, dtype=np.float64).reshape(-1))
        c_prev = 1
        for n, layer in enumerate(self.layers):
            kernel = layer.kernel if isinstance(layer, ConvLayer) else layer.A
            if kernel.shape[0] != c_prev:
                raise ShapeMismatch(f"layer {n} expects {kernel.shape[0]} channels, gets {c_prev}")
            c_prev = layer.out_channels
        if self.readout.size % c_prev:
            raise ShapeMismatch(f"readout length {self.readout.size} is not a multiple of {c_prev}")

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.readout.size // self.out_channels)))

    @property
    def out_channels(self) -> int:
        return self.layers[-1].out_channels

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> List[int]:
        return [layer.out_channels for layer in self.layers]

    def __call__(self, x):
        return forward(self, x)

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                layers.append(
                    {
                        "kernel": tensor_to_json(layer.kernel),
                        "bias": [float(v) for v in layer.bias],
                        "linear": bool(layer.linear),
                    }
                )
            else:
                entry = {
                    "A": tensor_to_json(layer.A),
                    "a": [float(v) for v in layer.a],
                    "B": tensor_to_json(layer.B),
                    "b": [float(v) for v in layer.b],
                    "R": tensor_to_json(layer.R),
                    "inner_linear": bool(layer.inner_linear),
                    "outer_linear": bool(layer.outer_linear),
                }
                if layer.theta is not None:
                    entry["theta"] = tensor_to_json(layer.theta)
                layers.append(entry)
        return {
            "arch": self.arch,
            "pad": self.pad.to_dict(),
            "layers": layers,
            "readout": [float(v) for v in self.readout],
        }

    @classmethod
    def from_dict(cls, doc, path: str = "net") -> "DeepNet":
        arch = require(doc, "arch", path)
        if arch not in ARCHITECTURES:
            raise ParseError(f"{path}.arch", f"must be one of {ARCHITECTURES}")
        try:
            pad = as_padding(require(doc, "pad", path))
        except ValueError as exc:
            raise ParseError(f"{path}.pad", str(exc)) from None
        raw = require(doc, "layers", path)
        if not isinstance(raw, list) or not raw:
            raise ParseError(f"{path}.layers", "expected a non-empty list")
        layers = []
        for n, entry in enumerate(raw):
            lp = f"{path}.layers[{n}]"
            if arch == CLASSIC:
                layers.append(
                    ConvLayer(
                        tensor_from_json(require(entry, "kernel", lp), f"{lp}.kernel", ndim=4),
                        vector_from_json(require(entry, "bias", lp), f"{lp}.bias"),
                        bool(entry.get("linear", False)),
                    )
                )
            else:
                theta = entry.get("theta")
                layers.append(
                    ResidualBlock(
                        tensor_from_json(require(entry, "A", lp), f"{lp}.A", ndim=4),
                        vector_from_json(require(entry, "a", lp), f"{lp}.a"),
                        tensor_from_json(require(entry, "B", lp), f"{lp}.B", ndim=4),
                        vector_from_json(require(entry, "b", lp), f"{lp}.b"),
                        tensor_from_json(require(entry, "R", lp), f"{lp}.R", ndim=4),
                        None if theta is None else tensor_from_json(theta, f"{lp}.theta", ndim=4),
                        bool(entry.get("inner_linear", False)),
                        bool(entry.get("outer_linear", False)),
                    )
                )
        readout = vector_from_json(require(doc, "readout", path), f"{path}.readout")
        try:
            return cls(arch, pad, layers, readout)
        except ShapeMismatch as exc:
            raise ParseError(path, str(exc)) from None


def _run(net: DeepNet, x):
    """Forward pass returning the last feature map and the pre-activations.

    Each record is ``(label, preactivation, certified)``; certified records
    come from biases that are meant to keep the ReLU inactive on the box.
    """
    x = _as_images(x, net.d)
    pad = net.pad
    f = x
    records = []
    last = len(net.layers) - 1
    for n, layer in enumerate(net.layers):
        if net.arch == CLASSIC:
            if layer.kernel.shape[0] != f.shape[-3]:
                raise ShapeMismatch(f"layer {n} expects {layer.kernel.shape[0]} channels")
            z = conv2d(layer.kernel, f, pad) + layer.bias[:, None, None]
            records.append((f"layer{n + 1}" if n < last else "final", z, layer.linear))
            f = relu(z)
            continue
        if net.arch == MGNET:
            inner = conv2d(layer.theta, x, pad) - conv2d(layer.A, f, pad) + layer.a[:, None, None]
        else:
            inner = conv2d(layer.A, f, pad) + layer.a[:, None, None]
        records.append((f"block{n + 1}.inner", inner, layer.inner_linear))
        h = relu(inner)
        if net.arch == RESNET:
            outer = conv2d(layer.R, f, pad) + conv2d(layer.B, h, pad) + layer.b[:, None, None]
            records.append((f"block{n + 1}.outer" if n < last else "final", outer, layer.outer_linear))
            f = relu(outer)
        else:
            outer = conv2d(layer.B, h, pad) + layer.b[:, None, None]
            records.append((f"block{n + 1}.outer" if n < last else "final", outer, layer.outer_linear))
            f = conv2d(layer.R, f, pad) + relu(outer)
    return f, records


def forward(net: DeepNet, x):
    """Network output ``readout . vectorize(f_L)``; batched over leading axes of ``x``."""
    f, _ = _run(net, x)
    out = vectorize(f) @ net.readout
    return float(out) if np.ndim(out) == 0 else out


def forward_classic(net: DeepNet, x):
    if net.arch != CLASSIC:
        raise ShapeMismatch(f"forward_classic needs a classic net, got {net.arch}")
    return forward(net, x)


def forward_block(net: DeepNet, x):
    if net.arch == CLASSIC:
        raise ShapeMismatch("forward_block needs a residual architecture")
    return forward(net, x)


def preactivations(net: DeepNet, x):
    return _run(net, x)[1]


def min_certified_preactivation(net: DeepNet, x):
    """Smallest value over every certified pre-activation; ``inf`` if none.

    A batch of images gives one value per image.
    """
    x = _as_images(x, net.d)
    batch = x.shape[:-3]
    values = [z.min(axis=(-3, -2, -1)) for _, z, certified in _run(net, x)[1] if certified]
    low = np.min(values, axis=0) if values else np.full(batch, np.inf)
    return float(low) if np.ndim(low) == 0 else low


def propagate_bounds(net: DeepNet, box: float) -> List[Tuple[str, ChannelBounds]]:
    """Interval bounds of every pre-activation over ``[-box, box]^(d x d)``."""
    pad = net.pad
    x_b = ChannelBounds.box(box, net.d)
    f_b = x_b
    out = []
    last = len(net.layers) - 1
    for n, layer in enumerate(net.layers):
        if net.arch == CLASSIC:
            z = bias_bounds(conv_bounds(layer.kernel, f_b, pad), layer.bias)
            out.append((f"layer{n + 1}" if n < last else "final", z))
            f_b = relu_bounds(z)
            continue
        inner = conv_bounds(layer.A, f_b, pad)
        if net.arch == MGNET:
            inner = conv_bounds(layer.theta, x_b, pad) + (-inner)
        inner = bias_bounds(inner, layer.a)
        out.append((f"block{n + 1}.inner", inner))
        h_b = relu_bounds(inner)
        label = f"block{n + 1}.outer" if n < last else "final"
        if net.arch == RESNET:
            outer = bias_bounds(conv_bounds(layer.R, f_b, pad) + conv_bounds(layer.B, h_b, pad), layer.b)
            out.append((label, outer))
            f_b = relu_bounds(outer)
        else:
            outer = bias_bounds(conv_bounds(layer.B, h_b, pad), layer.b)
            out.append((label, outer))
            f_b = conv_bounds(layer.R, f_b, pad) + relu_bounds(outer)
    return out


def _probe_point(d: int, box: float) -> np.ndarray:
    return np.random.default_rng(0x5EED).uniform(-box, box, (1, d, d))


def _affine_offset(final_preact, big_kernel, d, pad, box) -> np.ndarray:
    """Constant tensor ``final_preact(x) - big_kernel * x``, checked at two points."""
    x0 = np.zeros((1, d, d))
    x1 = _probe_point(d, box)
    off0 = final_preact(x0) - conv2d(big_kernel, x0, pad)
    off1 = final_preact(x1) - conv2d(big_kernel, x1, pad)
    gap = float(np.abs(off1 - off0).max())
    if gap > OFFSET_TOL:
        raise SoundnessFailure(f"hidden stack is not affine on the box (offset mismatch {gap:.3e})")
    return off0


def _final_preact(net: DeepNet):
    def fn(x):
        return _run(net, x)[1][-1][1]

    return fn


def _replace_last(net: DeepNet, **changes) -> DeepNet:
    layers = list(net.layers)
    layers[-1] = type(layers[-1])(**{**layers[-1].__dict__, **changes})
    return DeepNet(net.arch, net.pad, layers, net.readout, net.meta)


def lower_to_deep(big: BigKernelCNN, pad: Padding, box: float = 1.0) -> DeepNet:
    """Classic deep CNN equal to ``big`` on the box: ``d//2`` layers of 3x3 kernels.

    Hidden widths are ``(2l+1)**2``; the last layer has one channel per
    hidden unit of the source network.
    """
    pad = as_padding(pad)
    d = big.d
    if d < 3:
        raise DomainTooSmall(f"need d >= 3 for a deep construction, got d={d}")
    plan = lower_kernel(big.kernel, d)
    kernels = plan.kernels
    layers = []
    bounds = ChannelBounds.box(box, d)
    for kernel in kernels[:-1]:
        z = conv_bounds(kernel, bounds, pad)
        bias = z.magnitude()
        layers.append(ConvLayer(kernel, bias, linear=True))
        bounds = relu_bounds(bias_bounds(z, bias))
    layers.append(ConvLayer(kernels[-1], np.zeros(kernels[-1].shape[1])))
    net = DeepNet(CLASSIC, pad, layers, big.readout)
    offset = _affine_offset(_final_preact(net), big.kernel, d, pad, box)
    r = read_index(d)
    net = _replace_last(net, bias=big.bias - offset[:, r, r])
    return DeepNet(CLASSIC, pad, net.layers, net.readout, {"box": box, "read": r})


def residual_widths(d: int, n_out: int):
    """``(c_l, C_l)`` for each block: ``c_l = (4l+1)**2`` except the last, ``C_l = 2(4l-1)**2``."""
    L = (d // 2) // 2
    c = [(4 * l + 1) ** 2 for l in range(1, L)] + [n_out]
    C = [2 * (4 * l - 1) ** 2 for l in range(1, L + 1)]
    return c, C


def identity_like(c_in: int, c_out: int) -> np.ndarray:
    R = np.zeros((c_in, c_out, 1, 1))
    r = np.arange(min(c_in, c_out))
    R[r, r, 0, 0] = 1.0
    return R


def _check_residual_inputs(shallow: ShallowNet, d: Optional[int], n_out: int, given_R):
    if d is None:
        d = shallow.d
    if shallow.W.shape[1] != d * d:
        raise DimensionMismatch(f"W has {shallow.W.shape[1]} columns, expected d**2 = {d * d}")
    if d % 4 != 0 or d < 4:
        raise InvalidDimension(
            f"residual constructions need d divisible by 4, got d={d}; see pad_shallow/pad_input"
        )
    c, _ = residual_widths(d, n_out)
    c_prev = [1] + c[:-1]
    if given_R is None:
        return d, [identity_like(ci, co) for ci, co in zip(c_prev, c)]
    if len(given_R) != len(c):
        raise ShapeMismatch(f"expected {len(c)} residual kernels, got {len(given_R)}")
    Rs = []
    for n, (R, ci, co) in enumerate(zip(given_R, c_prev, c)):
        R = np.asarray(R, dtype=np.float64)
        if R.ndim == 2:
            R = R[:, :, None, None]
        if R.shape != (ci, co, 1, 1):
            raise ShapeMismatch(f"R[{n}] must have shape {(ci, co, 1, 1)}, got {R.shape}")
        Rs.append(R)
    return d, Rs


def _hidden_blocks(kernels, Rs, d, pad, box, arch):
    """Blocks ``1..L-1`` plus the inner half of block ``L``, all in the linear regime.

    Returns the finished blocks, the bounds of ``f^{L-1}``, and for block ``L``
    the kernel ``A``, bias ``a`` and the bounds of its hidden activation.
    """
    L = len(Rs)
    blocks = []
    f_b = ChannelBounds.box(box, d)
    for l in range(1, L + 1):
        K1, K2 = kernels[2 * l - 2], kernels[2 * l - 1]
        c_prev = K1.shape[0]
        m = K1.shape[1]
        C = 2 * (4 * l - 1) ** 2
        A = np.zeros((c_prev, C, 3, 3))
        A[:, :m] = K1
        A[:, m : m + c_prev] = identity_kernel(c_prev)
        inner = conv_bounds(A, f_b, pad)
        a = inner.magnitude()
        h_b = relu_bounds(bias_bounds(inner, a))
        if l == L:
            return blocks, f_b, (A, a, h_b)
        R = Rs[l - 1]
        B = np.zeros((C, K2.shape[1], 3, 3))
        B[:m] = K2
        B[m : m + c_prev] = -embed_center(R, 3)
        r_b = conv_bounds(R, f_b, pad)
        bh = conv_bounds(B, h_b, pad)
        if arch == RESNET:
            outer = r_b + bh
            b = outer.magnitude()
            f_b = relu_bounds(bias_bounds(outer, b))
        else:
            b = bh.magnitude()
            f_b = r_b + relu_bounds(bias_bounds(bh, b))
        blocks.append(ResidualBlock(A, a, B, b, R, inner_linear=True, outer_linear=True))


def build_resnet(shallow: ShallowNet, d=None, pad: Padding = Constant(), box=None, given_R=None) -> DeepNet:
    """ResNet with ``d//4`` blocks equal to ``shallow`` on the box.

    Each block runs two consecutive classic layers; its second kernel also
    carries ``-R`` on the copied input channels, cancelling the skip path.
    """
    pad = as_padding(pad)
    box = shallow.box if box is None else float(box)
    d, Rs = _check_residual_inputs(shallow, d, shallow.width, given_R)
    big = lift_shallow(shallow, d)
    kernels = lower_kernel(big.kernel, d).kernels
    blocks, f_b, (A, a, _) = _hidden_blocks(kernels, Rs, d, pad, box, RESNET)
    R = Rs[-1]
    K2 = kernels[-1]
    m, c_prev = kernels[-2].shape[1], kernels[-2].shape[0]
    B = np.zeros((A.shape[1], K2.shape[1], 3, 3))
    B[:m] = K2
    B[m : m + c_prev] = -embed_center(R, 3)
    blocks.append(ResidualBlock(A, a, B, np.zeros(K2.shape[1]), R, inner_linear=True))
    net = DeepNet(RESNET, pad, blocks, big.readout)
    offset = _affine_offset(_final_preact(net), big.kernel, d, pad, box)
    r = read_index(d)
    net = _replace_last(net, b=shallow.beta - offset[:, r, r])
    return DeepNet(RESNET, pad, net.layers, net.readout, {"box": box, "read": r})


def _leak(blocks, R, readout, d, pad, box):
    """Affine leak ``l(x) = readout . vectorize(R * f^{L-1}(x)) = h . v + c`` on the box."""
    probe = DeepNet(PREACT, pad, blocks, np.zeros(blocks[-1].out_channels * d * d)) if blocks else None
    n = d * d
    xs = np.zeros((n + 1, 1, d, d))
    xs[1:, 0] = (box * np.eye(n)).reshape(n, d, d)
    f = _run(probe, xs)[0] if probe is not None else xs
    leak = vectorize(conv2d(R, f, pad)) @ readout
    c = leak[0]
    h = (leak[1:] - c) / box
    return h, float(c)


def build_preact_resnet(
    shallow: ShallowNet, d=None, pad: Padding = Constant(), box=None, given_R=None
) -> DeepNet:
    """Pre-activation ResNet equal to ``shallow`` on the box, with ``N+2`` output channels.

    The last block's skip path leaks an affine function ``l(x)`` into the
    output. Two extra units compute ``relu(l)`` and ``relu(-l)``, and the
    readout weighs them ``-1`` and ``+1`` so the leak cancels exactly.
    """
    pad = as_padding(pad)
    box = shallow.box if box is None else float(box)
    N = shallow.width
    d, Rs = _check_residual_inputs(shallow, d, N + 2, given_R)
    r = read_index(d)
    readout = np.zeros((N + 2, d, d))
    readout[:N, r, r] = shallow.alpha
    readout[N, r, r] = -1.0
    readout[N + 1, r, r] = 1.0
    readout = readout.reshape(-1)

    shift_kernels = lower_kernel(np.zeros((1, 1, 2 * (d // 2) + 1, 2 * (d // 2) + 1)), d).stages
    blocks, f_b, (A, a, _) = _hidden_blocks(list(shift_kernels) + [None], Rs, d, pad, box, PREACT)
    h, c = _leak(blocks, Rs[-1], readout, d, pad, box)
    augmented = ShallowNet(
        np.vstack([shallow.W, h, -h]), np.concatenate([shallow.beta, [c, -c]]), np.ones(N + 2), box
    )
    big = lift_shallow(augmented, d)
    P = lower_kernel(big.kernel, d).terminal
    m = shift_kernels[-1].shape[1]
    B = np.zeros((A.shape[1], N + 2, 3, 3))
    B[:m] = P
    blocks.append(ResidualBlock(A, a, B, np.zeros(N + 2), Rs[-1], inner_linear=True))
    net = DeepNet(PREACT, pad, blocks, readout)
    offset = _affine_offset(_final_preact(net), big.kernel, d, pad, box)
    net = _replace_last(net, b=augmented.beta - offset[:, r, r])
    meta = {"box": box, "read": r, "leak": (h, c), "aux_channels": (N, N + 1)}
    return DeepNet(PREACT, pad, net.layers, net.readout, meta)


def preact_to_mgnet(net: DeepNet) -> DeepNet:
    """The same network written as pooling-free MgNet with ``theta = 0`` and ``A`` negated."""
    if net.arch != PREACT:
        raise ShapeMismatch(f"expected a preact network, got {net.arch}")
    blocks = [
        ResidualBlock(
            -blk.A,
            blk.a,
            blk.B,
            blk.b,
            blk.R,
            np.zeros((1,) + blk.A.shape[1:]),
            blk.inner_linear,
            blk.outer_linear,
        )
        for blk in net.layers
    ]
    return DeepNet(MGNET, net.pad, blocks, net.readout, dict(net.meta))


def build_mgnet(shallow: ShallowNet, d=None, pad: Padding = Constant(), box=None, given_R=None) -> DeepNet:
    return preact_to_mgnet(build_preact_resnet(shallow, d, pad, box, given_R))


def build_classic(shallow: ShallowNet, d=None, pad: Padding = Constant(), box=None) -> DeepNet:
    box = shallow.box if box is None else float(box)
    return lower_to_deep(lift_shallow(shallow, d), pad, box)


def build(arch: str, shallow: ShallowNet, d=None, pad: Padding = Constant(), box=None, given_R=None) -> DeepNet:
    if arch == CLASSIC:
        if given_R is not None:
            raise ShapeMismatch("classic networks take no residual kernels")
        return build_classic(shallow, d, pad, box)
    builders = {RESNET: build_resnet, PREACT: build_preact_resnet, MGNET: build_mgnet}
    if arch not in builders:
        raise ShapeMismatch(f"unknown architecture {arch!r}")
    return builders[arch](shallow, d, pad, box, given_R)


def random_residual_kernels(d: int, n_out: int, seed=0, scale: float = 1.0) -> List[np.ndarray]:
    c, _ = residual_widths(d, n_out)
    rng = np.random.default_rng(seed)
    return [rng.uniform(-scale, scale, (ci, co, 1, 1)) for ci, co in zip([1] + c[:-1], c)]


def zero_residual_kernels(d: int, n_out: int) -> List[np.ndarray]:
    c, _ = residual_widths(d, n_out)
    return [np.zeros((ci, co, 1, 1)) for ci, co in zip([1] + c[:-1], c)]


def pad_shallow(net: ShallowNet, multiple: int = 4) -> ShallowNet:
    """Same function on a grid enlarged with zero rows/columns at the bottom and right."""
    d = net.d
    d_new = -(-d // multiple) * multiple
    W = np.zeros((net.width, d_new, d_new))
    W[:, :d, :d] = net.W.reshape(net.width, d, d)
    return ShallowNet(W.reshape(net.width, -1), net.beta, net.alpha, net.box)


def pad_input(x, d_new: int) -> np.ndarray:
    """Embed ``d x d`` images into ``d_new x d_new`` with zero boundary layers."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    if d_new < d:
        raise InvalidDimension(f"cannot shrink {d} to {d_new}")
    widths = [(0, 0)] * (x.ndim - 2) + [(0, d_new - d), (0, d_new - d)]
    return np.pad(x, widths)
