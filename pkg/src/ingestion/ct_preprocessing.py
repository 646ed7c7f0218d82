"""
CT slice decoding and detector input preparation.

Slices are 16-bit PNGs storing HU + offset. Detector inputs are three
adjacent slices at 2 mm spacing, clipped to [-1024, 1050] HU, mapped to
[-1, 1] and resized to 512x512.
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Union

import cv2
import numpy as np

from ..config import Config
from ..exceptions import ImageNotFound, KeySliceMissing

logger = logging.getLogger(__name__)


def decode_hu(values, offset: int = Config.HU_OFFSET) -> np.ndarray:
    """Stored 16-bit value to HU: value - offset."""
    return np.asarray(values, dtype=np.int32) - offset


def encode_hu(hu, offset: int = Config.HU_OFFSET) -> np.ndarray:
    """HU to the stored 16-bit value; inverse of decode_hu on [0, 65535]."""
    stored = np.asarray(hu, dtype=np.int64) + offset
    if stored.size and (stored.min() < 0 or stored.max() > np.iinfo(np.uint16).max):
        raise ValueError("HU values do not fit the 16-bit encoding")
    return stored.astype(np.uint16)


def load_slice(path: Union[str, Path], offset: int = Config.HU_OFFSET) -> np.ndarray:
    """
    Read a 16-bit PNG slice as HU.

    Raises:
        ImageNotFound: if the file is missing or unreadable
    """
    path = Path(path)
    if not path.exists():
        raise ImageNotFound(f"slice image not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageNotFound(f"could not decode slice image: {path}")
    if raw.ndim == 3:
        raw = raw[..., 0]
    return decode_hu(raw, offset)


def save_slice(path: Union[str, Path], hu: np.ndarray, offset: int = Config.HU_OFFSET) -> Path:
    """Write HU values as a 16-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), encode_hu(hu, offset)):
        raise OSError(f"failed to write {path}")
    return path


def normalize_hu(hu: np.ndarray, hu_min: float = Config.HU_MIN, hu_max: float = Config.HU_MAX) -> np.ndarray:
    """Clip to the HU window and map it linearly onto [-1, 1]."""
    clipped = np.clip(np.asarray(hu, dtype=np.float64), hu_min, hu_max)
    return 2.0 * (clipped - hu_min) / (hu_max - hu_min) - 1.0


def preprocess_slice(hu: np.ndarray, target: int = Config.TARGET_SIZE) -> np.ndarray:
    """
    Window, normalise and resize one slice.

    Args:
        hu: HU grid
        target: Output side length

    Returns:
        (target, target) float32 grid with values in [-1, 1]
    """
    hu = np.asarray(hu)
    if hu.size == 0:
        raise ValueError("slice must be non-empty")
    normalized = normalize_hu(hu)
    if normalized.shape != (target, target):
        normalized = cv2.resize(normalized, (target, target), interpolation=cv2.INTER_LINEAR)
    return np.clip(normalized, -1.0, 1.0).astype(np.float32)


@dataclass(frozen=True)
class SliceStack:
    """Three-channel detector input: (previous, key, next) slices."""

    channels: np.ndarray

    def __post_init__(self):
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise ValueError(f"slice stack needs exactly 3 channels, got shape {self.channels.shape}")

    @property
    def shape(self):
        return self.channels.shape


def context_offset(thickness_mm: float, spacing_mm: float = Config.CONTEXT_SPACING_MM) -> int:
    """Native slice step closest to the context spacing; 0 when slices are thicker than twice it."""
    if thickness_mm <= 0:
        raise ValueError(f"slice thickness must be positive, got {thickness_mm}")
    return int(math.floor(spacing_mm / thickness_mm + 0.5))


def assemble_context(slices: Mapping[int, np.ndarray], key_index: int, thickness_mm: float,
                     spacing_mm: float = Config.CONTEXT_SPACING_MM) -> SliceStack:
    """
    Pick the key slice and its neighbours at the context spacing.

    Neighbours are chosen by nearest-slice selection; a missing neighbour is
    replaced by the key slice.

    Args:
        slices: Available slices keyed by slice index
        key_index: Index of the annotated slice
        thickness_mm: Native slice interval
        spacing_mm: Target through-plane spacing

    Returns:
        SliceStack with channels (key - step, key, key + step)

    Raises:
        KeySliceMissing: if the key slice is not available
    """
    if key_index not in slices:
        raise KeySliceMissing(f"key slice {key_index} not available")
    key = np.asarray(slices[key_index])
    step = context_offset(thickness_mm, spacing_mm)
    channels = []
    for neighbour in (key_index - step, key_index, key_index + step):
        channel = slices.get(neighbour)
        if channel is None:
            logger.debug(f"Slice {neighbour} missing, duplicating key slice {key_index}")
            channel = key
        channels.append(np.asarray(channel))
    return SliceStack(channels=np.stack(channels))


def write_tensor(stack: SliceStack, stem: Union[str, Path], extra: Dict = None) -> Path:
    """
    Dump a stack as raw float32 (little-endian, row-major) plus a JSON header.

    Returns:
        Path of the .bin file; the header sits next to it as .json
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(stack.channels, dtype='<f4')
    bin_path = stem.with_suffix('.bin')
    bin_path.write_bytes(data.tobytes(order='C'))
    header = {
        'shape': list(data.shape),
        'dtype': 'float32',
        'byte_order': 'little',
        'order': 'C',
        'value_range': [-1.0, 1.0],
    }
    header.update(extra or {})
    stem.with_suffix('.json').write_text(json.dumps(header, indent=2, sort_keys=True) + '\n')
    return bin_path


def read_tensor(stem: Union[str, Path]) -> np.ndarray:
    """Load a tensor written by write_tensor."""
    stem = Path(stem)
    header = json.loads(stem.with_suffix('.json').read_text())
    data = np.frombuffer(stem.with_suffix('.bin').read_bytes(), dtype='<f4')
    return data.reshape(header['shape'])
