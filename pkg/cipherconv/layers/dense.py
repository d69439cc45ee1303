"""Fully connected layer with parameterized output merging."""

from __future__ import annotations

from typing import List, Set, Union

from ..errors import ShapeMismatchError, SlotCapacityError
from ..packing.layout import KernelTensor, PackedTensor
from ..packing.masks import pad_to, range_mask
from ..simd.backend import SlotBackend
from ..simd.vectors import SlotVector
from .geometry import fc_merge_chunk, fc_merge_keys, fc_tree_steps, nonzero
from .striding import horner_merge


def _merge(backend: SlotBackend, neurons: List[SlotVector]) -> SlotVector:
    out = neurons[0]
    for k, v in enumerate(neurons[1:], start=1):
        out = backend.add(out, backend.rotate(v, -k))
    return out


def fully_connected(backend: SlotBackend, x: Union[PackedTensor, SlotVector], kern: KernelTensor,
                    merge_budget: int) -> PackedTensor:
    """y = W x + b with y_k left in slot k.

    Each neuron costs one plaintext product with its weight row and a
    rotate-and-add tree; the m isolated sums are merged with at most
    ``merge_budget`` distinct rotation keys.
    """
    data = x.data if isinstance(x, PackedTensor) else x
    if kern.is_conv:
        raise ShapeMismatchError("fully connected layer needs (m, n) weights")
    outputs, inputs = kern.weights.shape
    slots = backend.slot_count
    if inputs > slots or outputs > slots:
        raise SlotCapacityError(f"FC {inputs}->{outputs} does not fit in {slots} slots")
    if isinstance(x, PackedTensor) and x.size != inputs:
        raise ShapeMismatchError(f"FC expects {inputs} inputs, tensor holds {x.size}")
    chunk = fc_merge_chunk(outputs, merge_budget)

    first = range_mask(slots, 0, 1)
    neurons = []
    for k in range(outputs):
        p = backend.mult_plain(data, pad_to(kern.weights[k], slots))
        for step in fc_tree_steps(inputs):
            p = backend.add(p, backend.rotate(p, step))
        neurons.append(backend.mult_plain(p, first))

    if chunk is None:
        out = _merge(backend, neurons)
    else:
        chunks = [_merge(backend, neurons[i:i + chunk]) for i in range(0, outputs, chunk)]
        out = horner_merge(backend, chunks, -chunk)
    out = backend.add_plain(out, pad_to(kern.bias, slots))
    return PackedTensor(out, outputs, 1)


def fc_keys(*, inputs: int, outputs: int, merge_budget: int) -> Set[int]:
    return nonzero(set(fc_tree_steps(inputs)) | fc_merge_keys(outputs, merge_budget))


def fc_depth() -> int:
    return 2
