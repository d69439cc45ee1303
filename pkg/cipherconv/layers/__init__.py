from .activation import secure_relu
from .chebyshev import cheb_coefficients, cheb_eval, clenshaw, relu_interpolant_error
from .convolution import conv_generic, conv_grouped_stride, conv_special_3x3, convolve, pad_input
from .dense import fully_connected
from .geometry import Geometry, conv_output_width
from .pooling import avg_pool, global_avg_pool, whole_channel_pool
from .striding import stride_extract, stride_extract_v1, stride_extract_v2

__all__ = [
    "secure_relu",
    "cheb_coefficients",
    "cheb_eval",
    "clenshaw",
    "relu_interpolant_error",
    "conv_generic",
    "conv_grouped_stride",
    "conv_special_3x3",
    "convolve",
    "pad_input",
    "fully_connected",
    "Geometry",
    "conv_output_width",
    "avg_pool",
    "global_avg_pool",
    "whole_channel_pool",
    "stride_extract",
    "stride_extract_v1",
    "stride_extract_v2",
]
