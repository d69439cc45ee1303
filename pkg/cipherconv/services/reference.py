"""Exact plaintext evaluation of a model, used as the accuracy oracle."""

from __future__ import annotations

import logging
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..config.settings import settings
from ..errors import ModelBuildError, ShapeMismatchError
from ..models.schemas import (
    BootstrapLayer,
    ConvLayer,
    FcLayer,
    Layer,
    ModelSpec,
    PoolLayer,
    ReluLayer,
    ResidualLayer,
)
from ..packing.layout import KernelTensor
from .weights import MemoryWeightStore, WeightSession

logger = logging.getLogger(__name__)

WeightSource = Union[WeightSession, Dict[str, KernelTensor]]


def _session(weights: WeightSource) -> WeightSession:
    if isinstance(weights, dict):
        return MemoryWeightStore(weights).session()
    return weights


def conv2d(x: np.ndarray, kern: KernelTensor, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Direct cross-correlation of a (C, W, W) input with (F, C, k, k) weights."""
    if x.ndim != 3 or x.shape[0] != kern.in_channels:
        raise ShapeMismatchError(f"input {x.shape} does not match kernel {kern.weights.shape}")
    k = kern.kernel
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    out = np.einsum("cijab,fcab->fij", windows, kern.weights)
    return out + kern.bias[:, None, None]


def avg_pool2d(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    windows = sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    return windows.mean(axis=(3, 4))


def dense(x: np.ndarray, kern: KernelTensor) -> np.ndarray:
    flat = x.reshape(-1)
    if flat.shape[0] != kern.weights.shape[1]:
        raise ShapeMismatchError(f"FC expects {kern.weights.shape[1]} inputs, got {flat.shape[0]}")
    return (kern.weights @ flat + kern.bias).reshape(-1, 1, 1)


def _run(layers: List[Layer], x: np.ndarray, weights: WeightSession,
         capture: Optional[Dict[str, float]]) -> np.ndarray:
    for layer in layers:
        if isinstance(layer, ConvLayer):
            x = conv2d(x, weights.get(layer), layer.stride, layer.padding)
        elif isinstance(layer, PoolLayer):
            if layer.kind == "average":
                x = avg_pool2d(x, layer.kernel, layer.stride)
            else:
                x = x.mean(axis=(1, 2), keepdims=True)
        elif isinstance(layer, FcLayer):
            x = dense(x, weights.get(layer))
        elif isinstance(layer, ReluLayer):
            if capture is not None:
                peak = float(np.max(np.abs(x))) if x.size else 0.0
                capture[layer.name] = max(capture.get(layer.name, 0.0), peak)
            x = np.maximum(x, 0.0)
        elif isinstance(layer, ResidualLayer):
            body = _run(layer.body, x, weights, capture)
            skip = _run(layer.shortcut, x, weights, capture)
            if body.shape != skip.shape:
                raise ShapeMismatchError(f"layer '{layer.name}': {body.shape} + {skip.shape}")
            x = body + skip
        elif not isinstance(layer, BootstrapLayer):
            raise ModelBuildError(f"unsupported layer type {type(layer).__name__}")
    return x


def plaintext_reference(spec: ModelSpec, weights: WeightSource, inputs: np.ndarray,
                        capture: Optional[Dict[str, float]] = None) -> np.ndarray:
    """Evaluate ``spec`` on a (C, W, W) input with true ReLU; returns the flat output.

    When ``capture`` is given it receives the largest |pre-activation| seen
    at every ReLU, keyed by layer name.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 2:
        x = x[np.newaxis]
    expected = (spec.input_channels, spec.input_width, spec.input_width)
    if x.shape != expected:
        raise ShapeMismatchError(f"input shape {x.shape} does not match model input {expected}")
    return _run(spec.layers, x, _session(weights), capture).reshape(-1)


def _relu_layers(layers: List[Layer]) -> Iterable[ReluLayer]:
    for layer in layers:
        if isinstance(layer, ReluLayer):
            yield layer
        elif isinstance(layer, ResidualLayer):
            yield from _relu_layers(layer.body)
            yield from _relu_layers(layer.shortcut)


def calibrate_betas(spec: ModelSpec, weights: WeightSource, batch: Iterable[np.ndarray],
                    safety: Optional[float] = None) -> ModelSpec:
    """Set every ReLU's beta to ``safety`` times the largest |pre-activation| over ``batch``."""
    safety = settings.BETA_SAFETY if safety is None else safety
    if safety <= 0:
        raise ValueError(f"safety factor must be positive, got {safety}")
    session = _session(weights)
    peaks: Dict[str, float] = {}
    count = 0
    for sample in batch:
        plaintext_reference(spec, session, sample, capture=peaks)
        count += 1
    if count == 0:
        raise ValueError("calibration needs at least one input")

    calibrated = spec.model_copy(deep=True)
    for layer in _relu_layers(calibrated.layers):
        peak = peaks.get(layer.name, 0.0)
        if peak <= 0.0:
            logger.warning(f"ReLU '{layer.name}' saw only zeros during calibration; using beta=1")
            layer.beta = 1.0
        else:
            layer.beta = safety * peak
        logger.debug(f"Calibrated '{layer.name}': peak {peak:.4g}, beta {layer.beta:.4g}")
    logger.info(f"Calibrated {len(peaks)} ReLU sites over {count} inputs")
    return calibrated
