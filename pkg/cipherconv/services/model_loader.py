"""Reading model specifications and resolving their context."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError

from ..config.settings import resolve_context, settings
from ..errors import ModelBuildError
from ..layers.dispatch import LayerContext
from ..layers.geometry import Geometry
from ..models.schemas import ContextConfig, ModelSpec

logger = logging.getLogger(__name__)


def load_model_spec(path: Union[str, Path]) -> ModelSpec:
    """Parse a model JSON file; weight paths resolve relative to its directory."""
    path = Path(path)
    if not path.exists():
        raise ModelBuildError(f"Model file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelBuildError(f"Invalid model JSON in {path}: {exc}") from exc
    try:
        spec = ModelSpec.model_validate(data)
    except ValidationError as exc:
        raise ModelBuildError(f"Invalid model specification in {path}: {exc}") from exc
    logger.info(f"Loaded model '{spec.name}' with {len(spec.layers)} top-level layers from {path}")
    return spec.with_base_dir(str(path.parent.resolve()))


def resolve_model_context(spec: ModelSpec) -> ContextConfig:
    if isinstance(spec.context, ContextConfig):
        return spec.context
    try:
        return resolve_context(spec.context)
    except ValueError as exc:
        raise ModelBuildError(str(exc)) from exc


def layer_context(spec: ModelSpec, context: Optional[ContextConfig] = None) -> LayerContext:
    context = context or resolve_model_context(spec)
    return LayerContext(
        slot_count=context.slot_count,
        depth_budget=context.depth_budget,
        stride_variant=spec.stride_variant,
        merge_budget=settings.FC_MERGE_BUDGET,
    )


def input_geometry(spec: ModelSpec) -> Geometry:
    return Geometry(spec.input_channels, spec.input_width)
