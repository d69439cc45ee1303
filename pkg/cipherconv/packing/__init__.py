from .layout import KernelTensor, PackedTensor, flatten, unflatten, repeated_kernel_vector
from .masks import build_mask, build_all_masks, extraction_mask

__all__ = [
    "KernelTensor",
    "PackedTensor",
    "flatten",
    "unflatten",
    "repeated_kernel_vector",
    "build_mask",
    "build_all_masks",
    "extraction_mask",
]
