from .blocks import DimensionMismatch, EncodingError, GraphBlock, compose, output_box
from .relu import (
    InvalidBounds,
    LayerBounds,
    ReluNetwork,
    encode_relu_network,
    encode_saturation,
    propagate_bounds_interval,
    saturation_network,
    tighten_bounds_lp,
)
from .qp_kkt import (
    BigMBounds,
    KktBlock,
    NotPositiveDefinite,
    ParametricQp,
    compute_bigM_bounds,
    encode_parametric_qp_kkt,
)
from .pwa import NoRegionFound, PwaFunction, PwaRegion, UnboundedRegion, encode_pwa
from .norms import encode_inf_norm, encode_one_norm

__all__ = [
    "DimensionMismatch",
    "EncodingError",
    "GraphBlock",
    "compose",
    "output_box",
    "InvalidBounds",
    "LayerBounds",
    "ReluNetwork",
    "encode_relu_network",
    "encode_saturation",
    "propagate_bounds_interval",
    "saturation_network",
    "tighten_bounds_lp",
    "BigMBounds",
    "KktBlock",
    "NotPositiveDefinite",
    "ParametricQp",
    "compute_bigM_bounds",
    "encode_parametric_qp_kkt",
    "NoRegionFound",
    "PwaFunction",
    "PwaRegion",
    "UnboundedRegion",
    "encode_pwa",
    "encode_inf_norm",
    "encode_one_norm",
]
