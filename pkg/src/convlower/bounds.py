"""Interval bounds propagated pixel by pixel through conv, bias and ReLU.

Bounds are kept per pixel (tighter at image borders, where constant padding
enters as the degenerate interval ``[a, a]``) and summarised per channel when
a bias is chosen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import as_padding, check_kernel, conv2d


@dataclass(frozen=True)
class ChannelBounds:
    """Lower and upper bounds, both of shape ``(c, d, d)``."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def box(cls, radius: float, d: int, channels: int = 1) -> "ChannelBounds":
        shape = (channels, d, d)
        return cls(np.full(shape, -float(radius)), np.full(shape, float(radius)))

    @property
    def channel_lo(self) -> np.ndarray:
        return self.lo.min(axis=(-2, -1))

    @property
    def channel_hi(self) -> np.ndarray:
        return self.hi.max(axis=(-2, -1))

    def magnitude(self) -> np.ndarray:
        """Per-channel ``max |value|`` over every pixel; the bias making the channel nonnegative."""
        return np.maximum(np.abs(self.channel_lo), np.abs(self.channel_hi))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def __add__(self, other: "ChannelBounds") -> "ChannelBounds":
        return ChannelBounds(self.lo + other.lo, self.hi + other.hi)

    def __neg__(self) -> "ChannelBounds":
        return ChannelBounds(-self.hi, -self.lo)


def conv_bounds(kernel, bounds: ChannelBounds, pad) -> ChannelBounds:
    """Bounds of ``kernel * x`` for every ``x`` inside ``bounds``.

    Positive and negative weights are applied to opposite ends. A padded
    read contributes ``w * a`` to both ends, which is exact.
    """
    kernel = check_kernel(kernel)
    pad = as_padding(pad)
    pos = np.maximum(kernel, 0.0)
    neg = np.minimum(kernel, 0.0)
    lo = conv2d(pos, bounds.lo, pad) + conv2d(neg, bounds.hi, pad)
    hi = conv2d(pos, bounds.hi, pad) + conv2d(neg, bounds.lo, pad)
    return ChannelBounds(lo, hi)


def bias_bounds(bounds: ChannelBounds, bias) -> ChannelBounds:
    bias = np.asarray(bias, dtype=np.float64)[:, None, None]
    return ChannelBounds(bounds.lo + bias, bounds.hi + bias)


def relu_bounds(bounds: ChannelBounds) -> ChannelBounds:
    return ChannelBounds(np.maximum(bounds.lo, 0.0), np.maximum(bounds.hi, 0.0))
