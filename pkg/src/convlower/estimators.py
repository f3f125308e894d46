"""scikit-learn style wrappers.

Nothing here is trained. ``fit`` runs the exact construction (lowering a
kernel, or building a deep CNN from shallow weights) and stores the result
in trailing-underscore attributes; ``transform``/``predict`` evaluate it.
Inputs may be images ``(n, d, d)``, ``(n, 1, d, d)`` or flat rows ``(n, d*d)``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import harness
from .decompose import lower_kernel
from .exceptions import ShapeMismatch
from .networks import CLASSIC, ShallowNet, build
from .tensor import as_padding


def _images(X, d=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = check_array(X, dtype=np.float64)
        side = int(round(np.sqrt(X.shape[1])))
        if side * side != X.shape[1]:
            raise ShapeMismatch(f"flat inputs need d**2 columns, got {X.shape[1]}")
        X = X.reshape(-1, 1, side, side)
    elif X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4 or X.shape[-1] != X.shape[-2]:
        raise ShapeMismatch(f"expected (n, d, d), (n, 1, d, d) or (n, d*d) inputs, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    if d is not None and X.shape[-1] != d:
        raise ShapeMismatch(f"fitted for d={d}, got images of side {X.shape[-1]}")
    return X


class LoweredConv2d(TransformerMixin, BaseEstimator):
    """Big-kernel convolution evaluated through its 3x3 cascade.

    ``fit`` lowers ``kernel`` and audits the plan; ``transform`` returns the
    ``(n, M, d, d)`` cascade output.
    """

    def __init__(self, kernel=None, pad="constant", pad_value=0.0):
        self.kernel = kernel
        self.pad = pad
        self.pad_value = pad_value

    def fit(self, X=None, y=None):
        if self.kernel is None:
            raise ValueError("kernel must be set before fit")
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim == 2:
            kernel = kernel[None, None]
        self.padding_ = as_padding(self.pad, self.pad_value)
        d = None if X is None else _images(X).shape[-1]
        self.plan_ = lower_kernel(kernel, d, self.padding_)
        self.audit_ = harness.audit_plan(self.plan_)
        self.widths_ = self.plan_.widths
        return self

    def transform(self, X):
        check_is_fitted(self, "plan_")
        return self.plan_.apply(_images(X), self.padding_)


class DeepReLUCNN(RegressorMixin, BaseEstimator):
    """Deep 3x3 ReLU CNN equal to a given shallow ReLU net on its input box.

    ``shallow`` is a :class:`ShallowNet` or its dict form. ``residual`` picks
    the skip kernels of residual architectures: ``"identity"``, ``"zero"``
    or ``"random"`` (drawn from ``seed``).
    """

    def __init__(self, shallow=None, arch=CLASSIC, pad="constant", pad_value=0.0, residual="identity", seed=0):
        self.shallow = shallow
        self.arch = arch
        self.pad = pad
        self.pad_value = pad_value
        self.residual = residual
        self.seed = seed

    def fit(self, X=None, y=None):
        if self.shallow is None:
            raise ValueError("shallow must be set before fit")
        shallow = self.shallow if isinstance(self.shallow, ShallowNet) else ShallowNet.from_dict(self.shallow)
        if X is not None:
            _images(X, shallow.d)
        pad = as_padding(self.pad, self.pad_value)
        given_R = None
        if self.arch != CLASSIC and self.residual != "identity":
            from .networks import MGNET, PREACT, random_residual_kernels, zero_residual_kernels

            n_out = shallow.width + (2 if self.arch in (PREACT, MGNET) else 0)
            if self.residual == "zero":
                given_R = zero_residual_kernels(shallow.d, n_out)
            elif self.residual == "random":
                given_R = random_residual_kernels(shallow.d, n_out, self.seed)
            else:
                raise ValueError(f"unknown residual choice {self.residual!r}")
        self.shallow_ = shallow
        self.net_ = build(self.arch, shallow, None, pad, shallow.box, given_R)
        self.n_features_in_ = shallow.d * shallow.d
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        return np.asarray(self.net_(_images(X, self.net_.d)), dtype=np.float64).reshape(-1)

    def certify(self, samples: int = 200, seed: int = 0, tol: float = harness.NETWORK_TOL):
        check_is_fitted(self, "net_")
        return harness.certify_network(self.net_, self.shallow_, samples, seed, tol)

    def param_count(self):
        check_is_fitted(self, "net_")
        return harness.count_params(self.net_, self.net_.d, self.shallow_.width)
