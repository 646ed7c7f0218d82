"""
Anchor shapes and best-anchor overlap.

Ratios are height:width, so a 3.27:1 ratio is r = 3.27 and produces anchors
taller than wide. Every (size, scale, ratio) triple keeps the area (s*c)^2.
"""
import math
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..config import Config
from .boxes import Box, boxes_to_array

Placement = Literal['center', 'stride']

RECIPROCAL_TOLERANCE = 1e-9
SEARCH_SCALES = 3
SEARCH_RATIOS = 5


class PyramidLevel(BaseModel):
    """Feature pyramid level carrying one anchor size."""

    model_config = ConfigDict(frozen=True)

    name: str
    stride: float


class AnchorShape(BaseModel):
    """Width and height of one anchor, plus the stride of its pyramid level."""

    model_config = ConfigDict(frozen=True)

    width: float
    height: float
    stride: Optional[float] = None

    @model_validator(mode='after')
    def _check_positive(self) -> 'AnchorShape':
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"anchor shape must be positive, got {self.width}x{self.height}")
        return self


def default_levels(sizes: Sequence[float]) -> Tuple[PyramidLevel, ...]:
    """P2.. levels with the configured strides, one per size."""
    strides = list(Config.ANCHOR_STRIDES)
    if len(sizes) > len(strides):
        strides += [strides[-1] * 2 ** (i + 1) for i in range(len(sizes) - len(strides))]
    return tuple(PyramidLevel(name=f"P{i + 2}", stride=float(strides[i])) for i in range(len(sizes)))


class AnchorConfig(BaseModel):
    """
    Anchor sizes x scales x ratios assigned to pyramid levels.

    Searched configurations carry exactly 3 scales and 5 ratios; build them with
    `searched`. The general constructor also takes other reciprocal-closed ratio
    sets containing 1:1, such as the 3-ratio RetinaNet default and the
    single-shape configurations used for coverage checks.
    """

    model_config = ConfigDict(frozen=True)

    sizes: Tuple[float, ...]
    scales: Tuple[float, ...]
    ratios: Tuple[float, ...]
    levels: Tuple[PyramidLevel, ...] = ()

    @model_validator(mode='before')
    @classmethod
    def _fill_levels(cls, data):
        if isinstance(data, dict) and not data.get('levels'):
            data = {**data, 'levels': default_levels(tuple(data.get('sizes') or ()))}
        return data

    @model_validator(mode='after')
    def _check_config(self) -> 'AnchorConfig':
        if not self.sizes or not self.scales or not self.ratios:
            raise ValueError("sizes, scales and ratios must be non-empty")
        if any(v <= 0 for v in (*self.sizes, *self.scales, *self.ratios)):
            raise ValueError("sizes, scales and ratios must be positive")
        if not any(math.isclose(r, 1.0, abs_tol=RECIPROCAL_TOLERANCE) for r in self.ratios):
            raise ValueError("ratio set must contain 1:1")
        forward = sorted(self.ratios)
        backward = sorted(1.0 / r for r in self.ratios)
        if not all(math.isclose(a, b, rel_tol=1e-9) for a, b in zip(forward, backward)):
            raise ValueError(f"ratio set {self.ratios} is not closed under reciprocal")
        if len(self.levels) != len(self.sizes):
            raise ValueError("one pyramid level per anchor size is required")
        return self

    @classmethod
    def searched(cls, sizes: Sequence[float], scales: Sequence[float], ratios: Sequence[float]) -> 'AnchorConfig':
        """Configuration from the anchor search space: 3 scales and 5 ratios."""
        if len(scales) != SEARCH_SCALES or len(ratios) != SEARCH_RATIOS:
            raise ValueError(f"searched anchors need {SEARCH_SCALES} scales and {SEARCH_RATIOS} ratios, "
                             f"got {len(scales)} and {len(ratios)}")
        return cls(sizes=tuple(sizes), scales=tuple(scales), ratios=tuple(ratios))

    @classmethod
    def retinanet_default(cls, sizes: Optional[Sequence[float]] = None) -> 'AnchorConfig':
        """Out-of-the-box RetinaNet anchors: scales 2^{0,1/3,2/3}, ratios 1:2, 1:1, 2:1."""
        return cls(sizes=tuple(sizes or Config.ANCHOR_SIZES),
                   scales=(1.0, 2 ** (1 / 3), 2 ** (2 / 3)),
                   ratios=(0.5, 1.0, 2.0))

    @classmethod
    def reported_optimum(cls, sizes: Optional[Sequence[float]] = None) -> 'AnchorConfig':
        """Published lesion-detection optimum: scales 0.425/0.540/0.680, ratios 3.27 and 1.78 pairs."""
        return cls.searched(sizes=tuple(sizes or Config.ANCHOR_SIZES),
                            scales=(0.425, 0.540, 0.680),
                            ratios=(3.27, 1.78, 1.0, 1 / 1.78, 1 / 3.27))

    def with_scale_multiplier(self, factor: float) -> 'AnchorConfig':
        """Scale every anchor scale, e.g. 2.0 when heads move one pyramid level down."""
        return self.model_copy(update={'scales': tuple(s * factor for s in self.scales)})

    def shape_array(self) -> np.ndarray:
        """(M, 3) array of width, height, stride in size-major, scale, ratio order."""
        rows = []
        for size, level in zip(self.sizes, self.levels):
            for scale in self.scales:
                for ratio in self.ratios:
                    root = math.sqrt(ratio)
                    rows.append((size * scale / root, size * scale * root, level.stride))
        return np.array(rows, dtype=np.float64)


def anchor_shapes(config: AnchorConfig) -> List[AnchorShape]:
    """
    Expand an anchor configuration into concrete shapes.

    Args:
        config: Anchor configuration

    Returns:
        |sizes|*|scales|*|ratios| shapes with width = s*c/sqrt(r), height = s*c*sqrt(r)
    """
    return [AnchorShape(width=w, height=h, stride=s) for w, h, s in config.shape_array()]


def shapes_to_array(shapes: Sequence[AnchorShape]) -> np.ndarray:
    return np.array([(s.width, s.height, s.stride if s.stride else 0.0) for s in shapes],
                    dtype=np.float64).reshape(-1, 3)


def best_anchor_ious(gt: np.ndarray, shapes: np.ndarray, placement: Placement = 'center') -> np.ndarray:
    """
    Best anchor IoU for each ground-truth box.

    Args:
        gt: (N, 4) boxes as x1, y1, x2, y2
        shapes: (M, 3) anchors as width, height, stride
        placement: 'center' aligns each anchor on the box center; 'stride' puts it on the
            nearest center of its level's grid, (k + 0.5) * stride

    Returns:
        (N,) maximum IoU over shapes
    """
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 4)
    shapes = np.asarray(shapes, dtype=np.float64).reshape(-1, 3)
    gw = (gt[:, 2] - gt[:, 0])[:, None]
    gh = (gt[:, 3] - gt[:, 1])[:, None]
    aw = shapes[None, :, 0]
    ah = shapes[None, :, 1]

    if placement == 'center':
        inter = np.minimum(gw, aw) * np.minimum(gh, ah)
    elif placement == 'stride':
        stride = shapes[None, :, 2]
        if np.any(stride <= 0):
            raise ValueError("stride placement needs a positive stride on every shape")
        cx = ((gt[:, 0] + gt[:, 2]) / 2.0)[:, None]
        cy = ((gt[:, 1] + gt[:, 3]) / 2.0)[:, None]
        acx = (np.floor(cx / stride) + 0.5) * stride
        acy = (np.floor(cy / stride) + 0.5) * stride
        inter_w = np.minimum(gt[:, None, 2], acx + aw / 2) - np.maximum(gt[:, None, 0], acx - aw / 2)
        inter_h = np.minimum(gt[:, None, 3], acy + ah / 2) - np.maximum(gt[:, None, 1], acy - ah / 2)
        inter = np.clip(inter_w, 0.0, None) * np.clip(inter_h, 0.0, None)
    else:
        raise ValueError(f"unknown placement {placement!r}")

    union = gw * gh + aw * ah - inter
    return (inter / union).max(axis=1)


def best_anchor_iou(gt: Box, shapes: Sequence[AnchorShape], placement: Placement = 'center') -> float:
    """Maximum IoU between a ground-truth box and an anchor of any of the given shapes."""
    if not shapes:
        raise ValueError("at least one anchor shape is required")
    return float(best_anchor_ious(boxes_to_array([gt]), shapes_to_array(shapes), placement)[0])
