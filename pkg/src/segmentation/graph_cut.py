"""
Binary min-cut labelling under the GrabCut energy.

    E(alpha) = sum_n D(alpha_n, z_n)
             + gamma * sum_{m~n} [alpha_m != alpha_n] * exp(-beta (z_m - z_n)^2) / dist(m, n)

over the 8-neighbourhood. The source side of the cut is foreground.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import maxflow
import numpy as np

from ..config import Config
from .gmm import GmmModel
from .trimap import Trimap

logger = logging.getLogger(__name__)

CAPACITY_RESOLUTION = 1e-6
HARD_LINK_FACTOR = 1e9

# (dy, dx) offsets covering each unordered 8-neighbour pair once
NEIGHBOR_OFFSETS: Tuple[Tuple[int, int], ...] = ((0, 1), (1, 0), (1, 1), (1, -1))


def _structure(dy: int, dx: int) -> np.ndarray:
    structure = np.zeros((3, 3), dtype=np.float64)
    structure[1 + dy, 1 + dx] = 1.0
    return structure


def _pair_slices(dy: int, dx: int, shape: Tuple[int, int]):
    """Slices (first, second) selecting every pixel pair at offset (dy, dx)."""
    h, w = shape
    rows_a = slice(0, h - dy)
    rows_b = slice(dy, h)
    if dx >= 0:
        cols_a, cols_b = slice(0, w - dx), slice(dx, w)
    else:
        cols_a, cols_b = slice(-dx, w), slice(0, w + dx)
    return (rows_a, cols_a), (rows_b, cols_b)


def neighbor_differences(image: np.ndarray) -> Dict[Tuple[int, int], np.ndarray]:
    """Squared intensity differences per neighbour offset."""
    z = np.asarray(image, dtype=np.float64)
    diffs = {}
    for dy, dx in NEIGHBOR_OFFSETS:
        a, b = _pair_slices(dy, dx, z.shape)
        diffs[(dy, dx)] = (z[a] - z[b]) ** 2
    return diffs


def compute_beta(image: np.ndarray) -> float:
    """
    Contrast scale 1 / (2 * mean squared difference over 8-neighbour pairs).

    Returns 0 for a constant image (or one with no neighbour pairs), which turns
    every contrast factor into 1.
    """
    z = np.asarray(image, dtype=np.float64)
    if z.size == 0:
        raise ValueError("image must be non-empty")
    diffs = [d.ravel() for d in neighbor_differences(z).values() if d.size]
    if not diffs:
        return 0.0
    mean = float(np.concatenate(diffs).mean())
    return 0.0 if mean == 0 else 1.0 / (2.0 * mean)


def pairwise_weights(image: np.ndarray, gamma: float, beta: float) -> Dict[Tuple[int, int], np.ndarray]:
    """gamma * exp(-beta * d^2) / dist for every neighbour pair, keyed by offset."""
    weights = {}
    for (dy, dx), d2 in neighbor_differences(image).items():
        dist = math.hypot(dy, dx)
        weights[(dy, dx)] = gamma * np.exp(-beta * d2) / dist
    return weights


def segmentation_energy(image: np.ndarray, labels: np.ndarray, gmm: GmmModel,
                        gamma: float = Config.GRABCUT_GAMMA, beta: float = None) -> float:
    """
    Evaluate the GrabCut energy of a labelling.

    Args:
        image: HU grid
        labels: Boolean foreground mask shaped like the image
        gmm: Foreground and background mixtures
        gamma: Smoothness weight
        beta: Contrast scale, computed from the image when omitted

    Returns:
        Data term plus smoothness term
    """
    labels = np.asarray(labels, dtype=bool)
    if beta is None:
        beta = compute_beta(image)
    fg_cost, bg_cost = gmm.unary_costs(image)
    data = float(np.where(labels, fg_cost, bg_cost).sum())
    smooth = 0.0
    for (dy, dx), weight in pairwise_weights(image, gamma, beta).items():
        a, b = _pair_slices(dy, dx, labels.shape)
        smooth += float(weight[labels[a] != labels[b]].sum())
    return data + smooth


@dataclass
class PixelGraph:
    """Grid flow network for one labelling problem."""

    graph: maxflow.GraphFloat
    node_ids: np.ndarray
    gamma: float
    beta: float
    hard_capacity: float

    def solve(self) -> np.ndarray:
        """Run max-flow and return the foreground (source side) mask."""
        flow = self.graph.maxflow()
        logger.debug(f"max-flow value {flow:.6f}")
        return ~self.graph.get_grid_segments(self.node_ids)


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.round(values / CAPACITY_RESOLUTION) * CAPACITY_RESOLUTION


def build_pixel_graph(image: np.ndarray, trimap: Trimap, gmm: GmmModel,
                      gamma: float, beta: float) -> PixelGraph:
    """
    Assemble the flow network.

    T-links carry the data costs shifted so the cheaper label costs zero; hard
    trimap pixels get a capacity far above any finite capacity on the side of
    their label.
    """
    z = np.asarray(image, dtype=np.float64)
    fg_cost, bg_cost = gmm.unary_costs(z)
    shift = np.minimum(fg_cost, bg_cost)
    source_caps = _quantize(bg_cost - shift)
    sink_caps = _quantize(fg_cost - shift)

    weights = {offset: _quantize(w) for offset, w in pairwise_weights(z, gamma, beta).items()}
    finite_max = max([float(source_caps.max()), float(sink_caps.max())]
                     + [float(w.max()) for w in weights.values() if w.size])
    hard = HARD_LINK_FACTOR * max(finite_max, 1.0)

    source_caps = np.where(trimap.fg_hard, hard, np.where(trimap.bg_hard, 0.0, source_caps))
    sink_caps = np.where(trimap.bg_hard, hard, np.where(trimap.fg_hard, 0.0, sink_caps))

    graph = maxflow.Graph[float]()
    node_ids = graph.add_grid_nodes(z.shape)
    for (dy, dx), w in weights.items():
        full = np.zeros(z.shape, dtype=np.float64)
        a, _ = _pair_slices(dy, dx, z.shape)
        full[a] = w
        graph.add_grid_edges(node_ids, weights=full, structure=_structure(dy, dx), symmetric=True)
    graph.add_grid_tedges(node_ids, source_caps, sink_caps)
    return PixelGraph(graph=graph, node_ids=node_ids, gamma=gamma, beta=beta, hard_capacity=hard)


def graph_cut_segment(image: np.ndarray, trimap: Trimap, gmm: GmmModel,
                      gamma: float = Config.GRABCUT_GAMMA, beta: float = None) -> np.ndarray:
    """
    Globally minimise the GrabCut energy for fixed mixtures.

    Args:
        image: HU grid
        trimap: Hard constraints
        gmm: Foreground and background mixtures
        gamma: Smoothness weight (0 gives independent per-pixel decisions)
        beta: Contrast scale, computed from the image when omitted

    Returns:
        Boolean foreground mask; hard trimap labels are always respected
    """
    if image.shape != trimap.shape:
        raise ValueError(f"image shape {image.shape} does not match trimap {trimap.shape}")
    if beta is None:
        beta = compute_beta(image)
    mask = build_pixel_graph(image, trimap, gmm, gamma, beta).solve()
    # hard labels are enforced by construction; restate them against float round-off
    mask[trimap.fg_hard] = True
    mask[trimap.bg_hard] = False
    return mask
