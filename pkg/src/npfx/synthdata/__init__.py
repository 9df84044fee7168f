"""Synthetic heatmap domains, masking protocols and the NPFX1 container."""

from ..sequence import FrameSequence, IntermittentSequence
from .container import ContainerError, load, loads, read_dataset, save, dumps, write_dataset
from .generator import PRESETS, DomainSpec, generate, generate_window, preset
from .masking import apply_mask, drop_count, mask, mask_hash, mask_indices

__all__ = [
    "FrameSequence", "IntermittentSequence", "DomainSpec", "PRESETS", "preset",
    "generate", "generate_window", "mask", "mask_indices", "apply_mask", "drop_count",
    "mask_hash", "save", "load", "dumps", "loads", "ContainerError", "write_dataset",
    "read_dataset",
]
