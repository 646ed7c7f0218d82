"""
RECIST diameters and the quadrilateral spanned by their endpoints.
"""
import itertools
import logging
import math
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..exceptions import DegenerateQuadrilateral

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

COLLINEAR_TOLERANCE = 1e-9
BOUNDARY_TOLERANCE = 1e-9


def _distance(p: Point, q: Point) -> float:
    return math.hypot(q[0] - p[0], q[1] - p[1])


class RecistDiameters(BaseModel):
    """Long and short RECIST axes, endpoints in continuous pixel coordinates."""

    model_config = ConfigDict(frozen=True)

    long_axis: Tuple[Point, Point]
    short_axis: Tuple[Point, Point]

    @model_validator(mode='after')
    def _check_endpoints(self) -> 'RecistDiameters':
        points = self.endpoints
        for p, q in itertools.combinations(points, 2):
            if p == q:
                raise ValueError(f"RECIST endpoints must be distinct, got duplicate {p}")
        return self

    @classmethod
    def from_coordinates(cls, coords: Sequence[float]) -> 'RecistDiameters':
        """Build from 8 floats: long-axis endpoints then short-axis endpoints."""
        if len(coords) != 8:
            raise ValueError(f"expected 8 RECIST coordinates, got {len(coords)}")
        c = [float(v) for v in coords]
        return cls(long_axis=((c[0], c[1]), (c[2], c[3])),
                   short_axis=((c[4], c[5]), (c[6], c[7])))

    @property
    def endpoints(self) -> Tuple[Point, Point, Point, Point]:
        return (*self.long_axis, *self.short_axis)

    @property
    def long_length(self) -> float:
        return _distance(*self.long_axis)

    @property
    def short_length(self) -> float:
        return _distance(*self.short_axis)

    def length_mm(self, spacing_xy: Tuple[float, float], short: bool = False) -> float:
        """Physical axis length given in-plane pixel spacing."""
        (x1, y1), (x2, y2) = self.short_axis if short else self.long_axis
        return math.hypot((x2 - x1) * spacing_xy[0], (y2 - y1) * spacing_xy[1])


class Quadrilateral(BaseModel):
    """Simple polygon over the four RECIST endpoints, in angular order."""

    model_config = ConfigDict(frozen=True)

    vertices: Tuple[Point, Point, Point, Point]

    @property
    def centroid(self) -> Point:
        xs, ys = zip(*self.vertices)
        return sum(xs) / 4.0, sum(ys) / 4.0

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)


def _check_not_collinear(points: Sequence[Point]) -> None:
    for a, b, c in itertools.combinations(points, 3):
        ab = (b[0] - a[0], b[1] - a[1])
        ac = (c[0] - a[0], c[1] - a[1])
        cross = ab[0] * ac[1] - ab[1] * ac[0]
        scale = math.hypot(*ab) * math.hypot(*ac)
        if abs(cross) <= COLLINEAR_TOLERANCE * scale:
            raise DegenerateQuadrilateral(f"collinear RECIST endpoints {a}, {b}, {c}")


def order_quadrilateral(recist: RecistDiameters) -> Quadrilateral:
    """
    Order the four RECIST endpoints by polar angle around their centroid.

    Args:
        recist: RECIST diameters

    Returns:
        Quadrilateral whose consecutive vertices form a simple polygon

    Raises:
        DegenerateQuadrilateral: if any three endpoints are collinear
    """
    points = recist.endpoints
    _check_not_collinear(points)
    cx = sum(p[0] for p in points) / 4.0
    cy = sum(p[1] for p in points) / 4.0

    def sort_key(p: Point):
        angle = math.atan2(p[1] - cy, p[0] - cx) % (2.0 * math.pi)
        return angle, _distance((cx, cy), p)

    ordered = sorted(points, key=sort_key)
    return Quadrilateral(vertices=tuple(ordered))


def quadrilateral_area(quad: Quadrilateral) -> float:
    """Shoelace area."""
    v = quad.as_array()
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """
    Vectorised inside-or-on-boundary test (crossing number plus edge check).

    Args:
        xs: x coordinates, any shape
        ys: y coordinates, same shape as xs
        vertices: (V, 2) polygon vertices in winding order

    Returns:
        Boolean array shaped like xs
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros(xs.shape, dtype=bool)
    on_edge = np.zeros(xs.shape, dtype=bool)
    n = len(vertices)
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        length_sq = ex * ex + ey * ey
        cross = ex * (ys - ay) - ey * (xs - ax)
        dot = ex * (xs - ax) + ey * (ys - ay)
        on_edge |= (np.abs(cross) <= BOUNDARY_TOLERANCE * math.sqrt(length_sq)) & \
                   (dot >= -BOUNDARY_TOLERANCE) & (dot <= length_sq + BOUNDARY_TOLERANCE)

        straddles = (ay <= ys) != (by <= ys)
        if ey != 0:
            x_cross = ax + (ys - ay) * ex / ey
            inside ^= straddles & (xs < x_cross)
    return inside | on_edge


def point_in_quadrilateral(point: Point, quad: Quadrilateral) -> bool:
    """True iff the point is strictly inside the quadrilateral or on its boundary."""
    return bool(points_in_polygon(np.array(point[0]), np.array(point[1]), quad.as_array()))


def rasterize_quadrilateral(quad: Quadrilateral, dims: Tuple[int, int]) -> np.ndarray:
    """
    Mark pixels whose centers fall inside or on the quadrilateral.

    Args:
        quad: Quadrilateral
        dims: image (width, height)

    Returns:
        Boolean mask of shape (height, width)
    """
    width, height = dims
    mask = np.zeros((height, width), dtype=bool)
    v = quad.as_array()
    x0 = max(int(math.floor(v[:, 0].min())) - 1, 0)
    x1 = min(int(math.ceil(v[:, 0].max())) + 1, width)
    y0 = max(int(math.floor(v[:, 1].min())) - 1, 0)
    y1 = min(int(math.ceil(v[:, 1].max())) + 1, height)
    if x0 >= x1 or y0 >= y1:
        return mask
    ys, xs = np.mgrid[y0:y1, x0:x1]
    mask[y0:y1, x0:x1] = points_in_polygon(xs + 0.5, ys + 0.5, v)
    return mask
