"""Dense tensors, padding rules and the stride-one convolution.

Data tensors are numpy arrays of shape ``(c, d, d)`` (optionally with leading
batch axes), kernels are arrays of shape ``(c_in, c_out, 2k+1, 2k+1)``. Kernel
spatial indices are centred: array position ``(s + k, t + k)`` holds the
weight at offset ``(s, t)`` for ``s, t in -k..k``. Pixels are stored 0-based,
so pixel ``(m, n)`` in the usual 1-based notation lives at ``[m - 1, n - 1]``.

Convolution is cross-correlation without kernel flipping::

    out[q, m, n] = sum_p sum_s sum_t K[p, q, s, t] * X[p, m + s, n + t]

with out-of-range reads resolved by the padding rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import ChannelMismatch, InvalidKernel, ShapeMismatch, UnsupportedPadding

__all__ = [
    "Constant",
    "Periodic",
    "Padding",
    "as_padding",
    "check_tensor",
    "check_kernel",
    "conv2d",
    "relu",
    "add_bias",
    "vectorize",
    "unvectorize",
    "shift_kernel",
    "identity_kernel",
    "embed_center",
]


@dataclass(frozen=True)
class Constant:
    """Out-of-range reads return the fixed scalar ``value``."""

    value: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise UnsupportedPadding(f"constant padding value must be finite, got {self.value!r}")

    def to_dict(self):
        return {"mode": "constant", "value": float(self.value)}


@dataclass(frozen=True)
class Periodic:
    """Out-of-range reads wrap around modulo ``d``."""

    def to_dict(self):
        return {"mode": "periodic"}


Padding = Union[Constant, Periodic]

_REJECTED_MODES = {"reflect", "reflection", "replicate", "replication", "edge", "symmetric"}


def as_padding(spec, value: float = 0.0) -> Padding:
    """Coerce ``spec`` (a Padding, a mode string or a dict) into a Padding.

    Reflection and replication are refused with :class:`UnsupportedPadding`:
    the kernel decomposition is not exact under them.
    """
    if isinstance(spec, (Constant, Periodic)):
        return spec
    if isinstance(spec, dict):
        mode = spec.get("mode")
        value = spec.get("value", value)
    else:
        mode = spec
    if not isinstance(mode, str):
        raise UnsupportedPadding(f"unknown padding {spec!r}")
    mode = mode.lower()
    if mode in ("periodic", "circular", "wrap"):
        return Periodic()
    if mode in ("constant", "zero", "zeros"):
        return Constant(float(value))
    if mode in _REJECTED_MODES:
        raise UnsupportedPadding(f"{mode} padding is not supported; use constant or periodic")
    raise UnsupportedPadding(f"unknown padding mode {mode!r}")


def check_tensor(x, name: str = "X") -> np.ndarray:
    """Return ``x`` as a float64 array of shape ``(..., c, d, d)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3:
        raise ShapeMismatch(f"{name} must have shape (c, d, d), got {x.shape}")
    if x.shape[-1] != x.shape[-2]:
        raise ShapeMismatch(f"{name} must be square, got spatial shape {x.shape[-2:]}")
    if x.shape[-1] < 1 or x.shape[-3] < 1:
        raise ShapeMismatch(f"{name} has an empty axis: {x.shape}")
    return x


def check_kernel(kernel, name: str = "K") -> np.ndarray:
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise InvalidKernel(f"{name} must have shape (c_in, c_out, ks, ks), got {kernel.shape}")
    ks = kernel.shape[2]
    if kernel.shape[3] != ks or ks % 2 == 0:
        raise InvalidKernel(f"{name} spatial size must be odd and square, got {kernel.shape[2:]}")
    return kernel


def _pad(x: np.ndarray, k: int, pad: Padding) -> np.ndarray:
    if k == 0:
        return x
    if isinstance(pad, Periodic):
        d = x.shape[-1]
        idx = np.arange(-k, d + k) % d
        return x[..., idx[:, None], idx[None, :]]
    if isinstance(pad, Constant):
        widths = [(0, 0)] * (x.ndim - 2) + [(k, k), (k, k)]
        return np.pad(x, widths, mode="constant", constant_values=pad.value)
    raise UnsupportedPadding(f"unsupported padding {pad!r}")


def conv2d(kernel, x, pad: Padding = Constant()) -> np.ndarray:
    """Stride-one multi-channel convolution that preserves the spatial size.

    Accumulation runs over input channel, then kernel row, then kernel
    column, so results are bitwise reproducible and match a naive loop.
    Leading batch axes on ``x`` are carried through.
    """
    kernel = check_kernel(kernel)
    x = check_tensor(x)
    pad = as_padding(pad)
    c_in, c_out, ks, _ = kernel.shape
    if x.shape[-3] != c_in:
        raise ChannelMismatch(f"input has {x.shape[-3]} channels, kernel expects {c_in}")
    d = x.shape[-1]
    xp = _pad(x, ks // 2, pad)
    out = np.zeros(x.shape[:-3] + (c_out, d, d))
    for p in range(c_in):
        for s in range(ks):
            for t in range(ks):
                w = kernel[p, :, s, t]
                nz = np.flatnonzero(w)
                if nz.size == 0:
                    continue
                window = xp[..., p, None, s : s + d, t : t + d]
                if nz.size == c_out:
                    out += w[:, None, None] * window
                else:
                    out[..., nz, :, :] += w[nz, None, None] * window
    return out


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def add_bias(x, bias) -> np.ndarray:
    """Add one scalar per channel, broadcast over the ``d x d`` plane."""
    x = check_tensor(x)
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    if bias.shape[0] != x.shape[-3]:
        raise ChannelMismatch(f"bias has {bias.shape[0]} entries for {x.shape[-3]} channels")
    return x + bias[:, None, None]


def vectorize(x) -> np.ndarray:
    """Channel-major, row-major flattening of the last three axes."""
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape[:-3] + (-1,))


def unvectorize(v, channels: int, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v.reshape(v.shape[:-1] + (channels, d, d))


def shift_kernel(i: int, j: int) -> np.ndarray:
    """The 3x3 one-hot kernel with its single 1 at offset ``(i, j)``."""
    if i not in (-1, 0, 1) or j not in (-1, 0, 1):
        raise InvalidKernel(f"shift offsets must lie in -1..1, got ({i}, {j})")
    s = np.zeros((3, 3))
    s[i + 1, j + 1] = 1.0
    return s


def identity_kernel(channels: int, size: int = 3) -> np.ndarray:
    """Kernel of shape ``(c, c, size, size)`` that maps every input to itself."""
    kernel = np.zeros((channels, channels, size, size))
    r = np.arange(channels)
    kernel[r, r, size // 2, size // 2] = 1.0
    return kernel


def embed_center(kernel, size: int) -> np.ndarray:
    """Zero-pad a centred kernel spatially to ``size x size``."""
    kernel = check_kernel(kernel)
    ks = kernel.shape[2]
    if size < ks or size % 2 == 0:
        raise InvalidKernel(f"cannot embed a {ks}x{ks} kernel into {size}x{size}")
    off = (size - ks) // 2
    out = np.zeros(kernel.shape[:2] + (size, size))
    out[:, :, off : off + ks, off : off + ks] = kernel
    return out
