"""
Trimap construction from RECIST diameters and a lesion bounding box.
"""
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np

from ..exceptions import EndpointOutsideBox, InvalidTrimap
from ..geometry.boxes import Box
from ..geometry.recist import RecistDiameters, order_quadrilateral, rasterize_quadrilateral

logger = logging.getLogger(__name__)


class TrimapLabel(IntEnum):
    BG_HARD = 0
    FG_HARD = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class Trimap:
    """Per-pixel hard foreground / hard background / unknown labels, shape (h, w)."""

    labels: np.ndarray

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise InvalidTrimap(f"trimap must be 2-D, got shape {self.labels.shape}")
        if not self.fg_hard.any():
            raise InvalidTrimap("trimap has no hard foreground pixel")
        if not self.bg_hard.any():
            raise InvalidTrimap("trimap has no hard background pixel")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    @property
    def fg_hard(self) -> np.ndarray:
        return self.labels == TrimapLabel.FG_HARD

    @property
    def bg_hard(self) -> np.ndarray:
        return self.labels == TrimapLabel.BG_HARD

    @property
    def unknown(self) -> np.ndarray:
        return self.labels == TrimapLabel.UNKNOWN

    def counts(self) -> dict:
        return {
            'fg_hard': int(self.fg_hard.sum()),
            'bg_hard': int(self.bg_hard.sum()),
            'unknown': int(self.unknown.sum()),
        }


def build_trimap(recist: RecistDiameters, bbox: Box, dims: Tuple[int, int]) -> Trimap:
    """
    Build a GrabCut trimap from weak RECIST labels.

    Pixel centers inside or on the ordered RECIST quadrilateral are hard
    foreground, centers outside the half-open bbox are hard background and
    everything else is unknown. A quadrilateral too thin to cover any pixel
    center is seeded with the pixel holding its centroid.

    Args:
        recist: RECIST diameters in pixel coordinates
        bbox: Lesion bounding box
        dims: Image (width, height)

    Returns:
        Trimap of shape (height, width)

    Raises:
        EndpointOutsideBox: if a RECIST endpoint is outside the bbox
        DegenerateQuadrilateral: if three endpoints are collinear
        InvalidTrimap: if the bbox leaves no background pixel
    """
    width, height = dims
    for x, y in recist.endpoints:
        if not bbox.contains_point(x, y):
            raise EndpointOutsideBox(f"RECIST endpoint ({x}, {y}) outside box {bbox.as_tuple()}")
    if bbox.x1 < 0 or bbox.y1 < 0 or bbox.x2 > width or bbox.y2 > height:
        raise InvalidTrimap(f"box {bbox.as_tuple()} exceeds image {width}x{height}")

    quad = order_quadrilateral(recist)
    fg = rasterize_quadrilateral(quad, dims)
    if not fg.any():
        cx, cy = quad.centroid
        col = min(max(int(math.floor(cx)), 0), width - 1)
        row = min(max(int(math.floor(cy)), 0), height - 1)
        fg[row, col] = True
        logger.debug(f"Quadrilateral covers no pixel center, seeding ({col}, {row})")

    centers_x = np.arange(width) + 0.5
    centers_y = np.arange(height) + 0.5
    inside_x = (centers_x >= bbox.x1) & (centers_x < bbox.x2)
    inside_y = (centers_y >= bbox.y1) & (centers_y < bbox.y2)
    inside_box = inside_y[:, None] & inside_x[None, :]

    labels = np.full((height, width), TrimapLabel.UNKNOWN, dtype=np.uint8)
    labels[~inside_box] = TrimapLabel.BG_HARD
    labels[fg] = TrimapLabel.FG_HARD
    return Trimap(labels=labels)
