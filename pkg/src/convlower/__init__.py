"""Exact lowering of large convolutions to 3x3 cascades, and deep ReLU CNNs
that reproduce one-hidden-layer ReLU networks on a bounded box."""

from .decompose import IndexSeq, LoweredPlan, build_index_set, decompose_once, lower_kernel, split_k_tilde
from .estimators import DeepReLUCNN, LoweredConv2d
from .exceptions import (
    AuditFailure,
    ChannelMismatch,
    ConvLowerError,
    DimensionMismatch,
    DomainTooSmall,
    InvalidDimension,
    InvalidKernel,
    ParseError,
    ShapeMismatch,
    SoundnessFailure,
    UnsupportedPadding,
)
from .harness import (
    EquivalenceReport,
    ParamCount,
    audit_plan,
    certify_equivalence,
    certify_network,
    count_params,
    negative_padding_probe,
    oracle_conv,
)
from .networks import (
    BigKernelCNN,
    DeepNet,
    ShallowNet,
    build,
    build_classic,
    build_mgnet,
    build_preact_resnet,
    build_resnet,
    lift_shallow,
    lower_to_deep,
)
from .tensor import Constant, Periodic, conv2d

__version__ = "0.1.0"
