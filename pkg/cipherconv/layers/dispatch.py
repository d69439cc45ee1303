"""Per-layer shape, depth, rotation-key and execution dispatch."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Set

from ..errors import ModelBuildError, ShapeMismatchError
from ..models.schemas import (
    BootstrapLayer,
    ConvLayer,
    FcLayer,
    Layer,
    PoolLayer,
    ReluLayer,
    ResidualLayer,
)
from ..packing.layout import KernelTensor, PackedTensor
from ..simd.backend import SlotBackend
from .activation import relu_depth, secure_relu
from .convolution import conv_depth, conv_keys, conv_special_3x3, convolve
from .dense import fc_depth, fc_keys, fully_connected
from .geometry import Geometry, conv_output_width
from .pooling import (
    avg_pool,
    avg_pool_depth,
    avg_pool_keys,
    global_avg_pool,
    global_avg_pool_keys,
    whole_channel_pool,
    whole_channel_pool_keys,
)


@dataclass(frozen=True)
class LayerContext:
    """Model-wide settings that influence layer shape, depth and keys."""
    slot_count: int
    depth_budget: int
    stride_variant: str = "extract"
    merge_budget: int = 32


def stride_variant_for(layer, ctx: LayerContext) -> str:
    return getattr(layer, "stride_variant", None) or ctx.stride_variant


def merge_budget_for(layer: FcLayer, ctx: LayerContext) -> int:
    return layer.merge_budget if layer.merge_budget is not None else ctx.merge_budget


def _fits(geom: Geometry, ctx: LayerContext, what: str) -> Geometry:
    if geom.size > ctx.slot_count:
        raise ModelBuildError(
            f"{what}: {geom.channels}x{geom.width}x{geom.width} needs {geom.size} slots, "
            f"only {ctx.slot_count} available"
        )
    return geom


def output_geometry(layer: Layer, geom: Geometry, ctx: LayerContext) -> Geometry:
    """Validate ``layer`` against its input shape and return the output shape."""
    if isinstance(layer, ConvLayer):
        if layer.in_channels != geom.channels:
            raise ModelBuildError(
                f"layer '{layer.name}' expects {layer.in_channels} channels, input has {geom.channels}"
            )
        if layer.padding and layer.mode != "special3x3":
            _fits(Geometry(geom.channels, geom.width + 2 * layer.padding), ctx, f"layer '{layer.name}' padding")
        width = conv_output_width(geom.width, layer.kernel, layer.stride, layer.padding)
        return _fits(Geometry(layer.out_channels, width), ctx, f"layer '{layer.name}'")
    if isinstance(layer, PoolLayer):
        if layer.kind == "average":
            return Geometry(geom.channels, conv_output_width(geom.width, layer.kernel, layer.stride, 0))
        if layer.kind == "whole_channel" and layer.kernel != geom.width:
            raise ModelBuildError(
                f"layer '{layer.name}': whole-channel pooling needs kernel == width "
                f"({layer.kernel} != {geom.width})"
            )
        return Geometry(geom.channels, 1)
    if isinstance(layer, FcLayer):
        if layer.inputs != geom.size:
            raise ModelBuildError(f"layer '{layer.name}' expects {layer.inputs} inputs, got {geom.size}")
        return _fits(Geometry(layer.outputs, 1), ctx, f"layer '{layer.name}'")
    if isinstance(layer, (ReluLayer, BootstrapLayer)):
        return geom
    if isinstance(layer, ResidualLayer):
        body = chain_geometry(layer.body, geom, ctx)
        skip = chain_geometry(layer.shortcut, geom, ctx)
        if body != skip:
            raise ModelBuildError(
                f"layer '{layer.name}': body output {body} does not match shortcut output {skip}"
            )
        return body
    raise ModelBuildError(f"unsupported layer type {type(layer).__name__}")


def chain_geometry(layers: List[Layer], geom: Geometry, ctx: LayerContext) -> Geometry:
    for layer in layers:
        geom = output_geometry(layer, geom, ctx)
    return geom


def reduces_width(layer: Layer, geom: Geometry, ctx: LayerContext) -> bool:
    return output_geometry(layer, geom, ctx).width < geom.width


def layer_depth(layer: Layer, geom: Geometry, ctx: LayerContext) -> int:
    """Levels consumed by a single (non-residual, non-bootstrap) layer."""
    if isinstance(layer, ConvLayer):
        return conv_depth(kernel=layer.kernel, stride=layer.stride, padding=layer.padding,
                          width=geom.width, mode=layer.mode, stride_variant=stride_variant_for(layer, ctx),
                          channels=geom.channels, slot_count=ctx.slot_count)
    if isinstance(layer, PoolLayer):
        if layer.kind == "average":
            return avg_pool_depth(width=geom.width, kernel=layer.kernel, stride=layer.stride,
                                  stride_variant=stride_variant_for(layer, ctx))
        return 1 if layer.kind == "global" else 2
    if isinstance(layer, FcLayer):
        return fc_depth()
    if isinstance(layer, ReluLayer):
        # an uncalibrated beta is assumed to need the scaling product
        beta = layer.beta if layer.beta is not None else 2.0
        return relu_depth(beta, layer.degree)
    if isinstance(layer, BootstrapLayer):
        return 0
    raise ModelBuildError(f"layer '{layer.name}' has no single depth cost")


def layer_keys(layer: Layer, geom: Geometry, ctx: LayerContext) -> Set[int]:
    """Exact rotation indices the layer issues (residuals: union of both branches)."""
    if isinstance(layer, ConvLayer):
        return conv_keys(channels=geom.channels, filters=layer.out_channels, width=geom.width,
                         kernel=layer.kernel, stride=layer.stride, padding=layer.padding,
                         mode=layer.mode, stride_variant=stride_variant_for(layer, ctx),
                         slot_count=ctx.slot_count)
    if isinstance(layer, PoolLayer):
        if layer.kind == "average":
            return avg_pool_keys(channels=geom.channels, width=geom.width, kernel=layer.kernel,
                                 stride=layer.stride, stride_variant=stride_variant_for(layer, ctx))
        if layer.kind == "global":
            return global_avg_pool_keys(channels=geom.channels, width=geom.width)
        return whole_channel_pool_keys(channels=geom.channels, width=geom.width)
    if isinstance(layer, FcLayer):
        return fc_keys(inputs=layer.inputs, outputs=layer.outputs, merge_budget=merge_budget_for(layer, ctx))
    if isinstance(layer, (ReluLayer, BootstrapLayer)):
        return set()
    if isinstance(layer, ResidualLayer):
        keys: Set[int] = set()
        for branch in (layer.body, layer.shortcut):
            g = geom
            for sub in branch:
                keys |= layer_keys(sub, g, ctx)
                g = output_geometry(sub, g, ctx)
        return keys
    raise ModelBuildError(f"unsupported layer type {type(layer).__name__}")


def apply_layer(backend: SlotBackend, layer: Layer, x: PackedTensor, ctx: LayerContext,
                kernel: Optional[KernelTensor] = None) -> PackedTensor:
    """Run one leaf layer on the backend."""
    if isinstance(layer, ConvLayer):
        if kernel is None:
            raise ShapeMismatchError(f"layer '{layer.name}' has no weights")
        if layer.mode == "special3x3":
            return conv_special_3x3(backend, x, kernel)
        return convolve(backend, x, kernel, stride=layer.stride, padding=layer.padding,
                        grouped=layer.mode == "grouped", stride_variant=stride_variant_for(layer, ctx))
    if isinstance(layer, PoolLayer):
        if layer.kind == "average":
            return avg_pool(backend, x, layer.kernel, layer.stride, stride_variant_for(layer, ctx))
        if layer.kind == "global":
            return global_avg_pool(backend, x)
        return whole_channel_pool(backend, x, layer.kernel)
    if isinstance(layer, FcLayer):
        if kernel is None:
            raise ShapeMismatchError(f"layer '{layer.name}' has no weights")
        return fully_connected(backend, x, kernel, merge_budget_for(layer, ctx))
    if isinstance(layer, ReluLayer):
        if layer.beta is None:
            raise ModelBuildError(f"layer '{layer.name}' has no beta; calibrate the model first")
        return secure_relu(backend, x, layer.beta, layer.degree)
    if isinstance(layer, BootstrapLayer):
        return x.with_data(backend.bootstrap(x.data))
    raise ModelBuildError(f"layer '{layer.name}' is not a leaf layer")
