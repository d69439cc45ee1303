"""Executable specs for the reference CNN architectures."""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from ..errors import ModelBuildError
from ..models.schemas import ConvLayer, FcLayer, Layer, ModelSpec, PoolLayer, ReluLayer, ResidualLayer

CIFAR_CLASSES = 10
CIFAR100_CLASSES = 100


def _conv3x3(c_in: int, c_out: int, name: Optional[str] = None) -> ConvLayer:
    return ConvLayer(name=name, in_channels=c_in, out_channels=c_out, kernel=3, stride=1, padding=1,
                     mode="special3x3")


def _pool() -> PoolLayer:
    return PoolLayer(kind="average", kernel=2, stride=2)


def lenet5() -> ModelSpec:
    """LeNet-5 on 1x28x28 inputs: 28 -> 24 -> 12 -> 8 -> 4, then FC 256 -> 120 -> 84 -> 10."""
    layers: List[Layer] = [
        ConvLayer(in_channels=1, out_channels=6, kernel=5),
        ReluLayer(),
        _pool(),
        ConvLayer(in_channels=6, out_channels=16, kernel=5),
        ReluLayer(),
        _pool(),
        FcLayer(inputs=256, outputs=120),
        ReluLayer(),
        FcLayer(inputs=120, outputs=84),
        ReluLayer(),
        FcLayer(inputs=84, outputs=10),
    ]
    return ModelSpec(name="lenet5", context="lenet5", input_channels=1, input_width=28, layers=layers)


def _basic_block(c_in: int, c_out: int) -> ResidualLayer:
    if c_in == c_out:
        body: List[Layer] = [_conv3x3(c_in, c_out), ReluLayer(), _conv3x3(c_out, c_out)]
        return ResidualLayer(body=body)
    # downsampling: average pooling first keeps the widened tensor inside the slot vector
    body = [_pool(), _conv3x3(c_in, c_out), ReluLayer(), _conv3x3(c_out, c_out)]
    shortcut: List[Layer] = [_pool(), ConvLayer(in_channels=c_in, out_channels=c_out, kernel=1)]
    return ResidualLayer(body=body, shortcut=shortcut)


def resnet(name: str, stages: Sequence[Tuple[int, int]], stem: Optional[ConvLayer] = None, input_width: int = 32,
           classes: int = CIFAR_CLASSES) -> ModelSpec:
    """ResNet of basic blocks: stem, one stage per ``(blocks, width)``, global pooling and one FC.

    The default stem is a 3x3 convolution to the first stage width.
    """
    stem = stem or _conv3x3(3, stages[0][1])
    layers: List[Layer] = [stem, ReluLayer()]
    c_in = stem.out_channels
    for blocks, width in stages:
        for _ in range(blocks):
            layers.append(_basic_block(c_in, width))
            layers.append(ReluLayer())
            c_in = width
    layers.append(PoolLayer(kind="global"))
    layers.append(FcLayer(inputs=c_in, outputs=classes))
    return ModelSpec(name=name, context="large", input_channels=3, input_width=input_width, layers=layers,
                     key_mode="block", weight_mode="lazy")


def resnet20() -> ModelSpec:
    return resnet("resnet20", [(3, 16), (3, 32), (3, 64)])


def resnet34() -> ModelSpec:
    """ResNet-34 on 3x31x31 crops: a 7x7 stride-2 stem to 64x16x16, then 3/4/6/3 blocks up to 512 channels.

    A 32-wide input does not divide under the 7x7/2/3 stem, so CIFAR images are cropped by one pixel.
    """
    stem = ConvLayer(in_channels=3, out_channels=64, kernel=7, stride=2, padding=3)
    return resnet("resnet34", [(3, 64), (4, 128), (6, 256), (3, 512)], stem=stem, input_width=31,
                  classes=CIFAR100_CLASSES)


def _vgg(name: str, config: Sequence[Union[int, str]], hidden: int = 1024) -> ModelSpec:
    layers: List[Layer] = []
    c_in, width = 3, 32
    for item in config:
        if item == "M":
            layers.append(_pool())
            width //= 2
        else:
            layers.append(_conv3x3(c_in, int(item)))
            layers.append(ReluLayer())
            c_in = int(item)
    layers += [
        FcLayer(inputs=c_in * width * width, outputs=hidden),
        ReluLayer(),
        FcLayer(inputs=hidden, outputs=hidden),
        ReluLayer(),
        FcLayer(inputs=hidden, outputs=CIFAR_CLASSES),
    ]
    return ModelSpec(name=name, context="large", input_channels=3, input_width=32, layers=layers,
                     key_mode="block", weight_mode="lazy")


def vgg11() -> ModelSpec:
    return _vgg("vgg11", [16, "M", 32, "M", 64, 64, "M", 128, 128, "M", 128, 128, "M"])


def vgg16() -> ModelSpec:
    return _vgg("vgg16", [16, 16, "M", 32, 32, "M", 64, 64, 64, "M", 128, 128, 128, "M", 128, 128, 128, "M"])


ARCHITECTURES: Dict[str, Callable[[], ModelSpec]] = {
    "lenet5": lenet5,
    "resnet20": resnet20,
    "resnet34": resnet34,
    "vgg11": vgg11,
    "vgg16": vgg16,
}


def build_architecture(name: str) -> ModelSpec:
    """Return the model spec of a named architecture, without weight references."""
    try:
        return ARCHITECTURES[name]()
    except KeyError:
        known = ", ".join(sorted(ARCHITECTURES))
        raise ModelBuildError(f"Unknown architecture '{name}' (known: {known})") from None
