"""Chebyshev-approximated ReLU."""

from __future__ import annotations

import logging
from typing import Optional

from ..config.settings import settings
from ..packing.layout import PackedTensor
from ..packing.masks import scale_mask
from ..simd.backend import SlotBackend
from .chebyshev import TREE, cheb_depth, cheb_eval, relu_coefficients

logger = logging.getLogger(__name__)


def secure_relu(backend: SlotBackend, x: PackedTensor, beta: float, degree: Optional[int] = None,
                method: str = TREE) -> PackedTensor:
    """Approximate max(0, x) for inputs bounded by ``beta`` in magnitude.

    With ``beta > 1`` the active slots are first scaled by 1/beta and the
    interpolated function is ``beta * max(0, z)``. With ``beta <= 1`` the
    inputs already lie in [-1, 1] and plain ``max(0, z)`` is interpolated.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    degree = settings.RELU_DEGREE if degree is None else degree
    if degree < 1:
        raise ValueError(f"degree must be at least 1, got {degree}")
    v = x.data
    if beta > 1.0:
        v = backend.mult_plain(v, scale_mask(backend.slot_count, x.size, 1.0 / beta))
        coeffs = relu_coefficients(degree, beta)
    else:
        logger.warning(f"ReLU with beta={beta} <= 1: inputs are not rescaled")
        coeffs = relu_coefficients(degree)
    return x.with_data(cheb_eval(backend, v, coeffs, method=method))


def relu_depth(beta: float, degree: Optional[int] = None, method: str = TREE) -> int:
    degree = settings.RELU_DEGREE if degree is None else degree
    return (1 if beta > 1.0 else 0) + cheb_depth(degree, method)
