"""Dense NCHW tensor ops with forward and backward passes."""

from ._backend import BACKEND
from .functional import (
    BatchNormState,
    ConvSpec,
    batchnorm,
    batchnorm_backward,
    batchnorm_forward,
    bilinear_upsample,
    bilinear_upsample_backward,
    bilinear_upsample_forward,
    conv2d,
    conv2d_asymmetric,
    conv2d_asymmetric_backward,
    conv2d_asymmetric_forward,
    conv2d_backward,
    conv2d_depthwise,
    conv2d_depthwise_backward,
    conv2d_depthwise_forward,
    conv2d_forward,
    maxpool2d,
    maxpool2d_backward,
    maxpool2d_forward,
    relu,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)
from .gradcheck import GradcheckReport, gradcheck
from .tensor import ShapeError, Tensor

__all__ = [
    "BACKEND",
    "BatchNormState",
    "ConvSpec",
    "GradcheckReport",
    "ShapeError",
    "Tensor",
    "batchnorm",
    "batchnorm_backward",
    "batchnorm_forward",
    "bilinear_upsample",
    "bilinear_upsample_backward",
    "bilinear_upsample_forward",
    "conv2d",
    "conv2d_asymmetric",
    "conv2d_asymmetric_backward",
    "conv2d_asymmetric_forward",
    "conv2d_backward",
    "conv2d_depthwise",
    "conv2d_depthwise_backward",
    "conv2d_depthwise_forward",
    "conv2d_forward",
    "gradcheck",
    "maxpool2d",
    "maxpool2d_backward",
    "maxpool2d_forward",
    "relu",
    "relu_backward",
    "relu_forward",
    "softmax_cross_entropy",
]
