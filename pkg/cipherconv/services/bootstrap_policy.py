"""Bootstrap placement and the declared level ledger."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

from ..errors import ModelBuildError
from ..layers.dispatch import LayerContext, layer_depth, output_geometry
from ..layers.geometry import Geometry
from ..models.schemas import BootstrapLayer, Layer, ModelSpec, PoolLayer, ReluLayer, ResidualLayer

logger = logging.getLogger(__name__)

GLOBAL_POOLS = ("global", "whole_channel")


def declared_level(layer: Layer, geom: Geometry, level: int, ctx: LayerContext) -> int:
    """Level after ``layer`` given the level before it; residual branches merge at the minimum.

    Raises:
        ModelBuildError: Some layer needs more levels than remain.
    """
    if isinstance(layer, BootstrapLayer):
        return ctx.depth_budget
    if isinstance(layer, ResidualLayer):
        return min(declared_chain(layer.body, geom, level, ctx), declared_chain(layer.shortcut, geom, level, ctx))
    cost = layer_depth(layer, geom, ctx)
    if cost > level:
        raise ModelBuildError(f"layer '{layer.name}' needs {cost} levels, only {level} remain")
    return level - cost


def declared_chain(layers: List[Layer], geom: Geometry, level: int, ctx: LayerContext) -> int:
    for layer in layers:
        level = declared_level(layer, geom, level, ctx)
        geom = output_geometry(layer, geom, ctx)
    return level


def check_depth(spec: ModelSpec, ctx: LayerContext) -> int:
    """Validate the whole model from a fresh ciphertext; returns the final level."""
    return declared_chain(spec.layers, Geometry(spec.input_channels, spec.input_width), ctx.depth_budget, ctx)


@dataclass
class _Counters:
    relus: int = 0
    pools: int = 0
    inserted: int = 0


def _bootstrap(name: str) -> BootstrapLayer:
    return BootstrapLayer(name=name)


def _apply_rules(layers: List[Layer], counters: _Counters) -> List[Layer]:
    """Markers before every ReLU after the first two, the second pooling layer and global pools."""
    result: List[Layer] = []
    for layer in layers:
        needs = False
        if isinstance(layer, ReluLayer):
            counters.relus += 1
            needs = counters.relus > 2
        elif isinstance(layer, PoolLayer):
            if layer.kind in GLOBAL_POOLS:
                needs = True
            else:
                counters.pools += 1
                needs = counters.pools == 2
        if needs and not (result and isinstance(result[-1], BootstrapLayer)):
            counters.inserted += 1
            result.append(_bootstrap(f"{layer.name}.boot"))
        if isinstance(layer, ResidualLayer):
            layer = layer.model_copy(update={
                "body": _apply_rules(layer.body, counters),
                "shortcut": _apply_rules(layer.shortcut, counters),
            })
        result.append(layer)
    return result


def _fill_gaps(layers: List[Layer], geom: Geometry, level: int, ctx: LayerContext,
               counters: _Counters) -> Tuple[List[Layer], int, Geometry]:
    """Insert a bootstrap right before any layer that would run out of levels."""
    result: List[Layer] = []
    for layer in layers:
        if isinstance(layer, BootstrapLayer):
            level = ctx.depth_budget
        elif isinstance(layer, ResidualLayer):
            body, body_level, _ = _fill_gaps(layer.body, geom, level, ctx, counters)
            skip, skip_level, _ = _fill_gaps(layer.shortcut, geom, level, ctx, counters)
            layer = layer.model_copy(update={"body": body, "shortcut": skip})
            level = min(body_level, skip_level)
        else:
            cost = layer_depth(layer, geom, ctx)
            if cost > ctx.depth_budget:
                raise ModelBuildError(
                    f"layer '{layer.name}' needs {cost} levels, more than the budget of {ctx.depth_budget}"
                )
            if cost > level:
                counters.inserted += 1
                result.append(_bootstrap(f"{layer.name}.refresh"))
                logger.info(f"Ledger inserted a bootstrap before '{layer.name}' (level {level} < {cost})")
                level = ctx.depth_budget
            level -= cost
        result.append(layer)
        geom = output_geometry(layer, geom, ctx)
    return result, level, geom


def place_bootstraps(spec: ModelSpec, ctx: LayerContext) -> ModelSpec:
    """Return ``spec`` with bootstrap markers placed according to its policy.

    ``paper_default`` applies the fixed placement rules and then tops up any
    segment that still exceeds the budget. ``explicit`` keeps the markers as
    written and only validates them.

    Raises:
        ModelBuildError: A single layer costs more than the full budget, or an
            explicit placement leaves a segment over budget.
    """
    if spec.bootstrap_policy == "explicit":
        check_depth(spec, ctx)
        return spec

    rules = _Counters()
    layers = _apply_rules(spec.layers, rules)
    ledger = _Counters()
    geom = Geometry(spec.input_channels, spec.input_width)
    layers, _, _ = _fill_gaps(layers, geom, ctx.depth_budget, ctx, ledger)
    placed = spec.model_copy(update={"layers": layers})
    logger.info(
        f"Placed {rules.inserted + ledger.inserted} bootstraps in '{spec.name}' "
        f"({rules.inserted} by rule, {ledger.inserted} by the depth ledger)"
    )
    return placed


def count_bootstraps(layers: List[Layer]) -> int:
    total = 0
    for layer in layers:
        if isinstance(layer, BootstrapLayer):
            total += 1
        elif isinstance(layer, ResidualLayer):
            total += count_bootstraps(layer.body) + count_bootstraps(layer.shortcut)
    return total
