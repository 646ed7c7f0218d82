"""
Iterated GrabCut on a single-channel HU image.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np
from pydantic import BaseModel

from ..config import Config
from ..exceptions import AllForegroundCollapsed, EmptyMask, InvalidSettings
from ..geometry.boxes import Box
from .gmm import GmmModel, MixtureComponents, fit_components, fit_gmm
from .graph_cut import compute_beta, graph_cut_segment, segmentation_energy
from .trimap import Trimap

logger = logging.getLogger(__name__)


class GrabCutSettings(BaseModel):
    """GrabCut parameters."""

    iterations: int = Config.GRABCUT_ITERATIONS
    components: int = Config.GMM_COMPONENTS
    gamma: float = Config.GRABCUT_GAMMA
    seed: int = Config.DEFAULT_SEED
    variance_floor: float = Config.VARIANCE_FLOOR

    def validate_settings(self) -> bool:
        if self.iterations < 1:
            raise InvalidSettings(f"iterations must be >= 1, got {self.iterations}")
        if self.components < 1:
            raise InvalidSettings(f"components must be >= 1, got {self.components}")
        if self.gamma < 0:
            raise InvalidSettings(f"gamma must be >= 0, got {self.gamma}")
        if self.variance_floor <= 0:
            raise InvalidSettings(f"variance_floor must be > 0, got {self.variance_floor}")
        return True


@dataclass
class GrabCutResult:
    """Final mask plus the energy after every outer iteration."""

    mask: np.ndarray
    energy_trace: List[float] = field(default_factory=list)
    fallback: bool = False
    iterations_run: int = 0


def _refit(values: np.ndarray, current: MixtureComponents, variance_floor: float) -> MixtureComponents:
    assignment = current.assign(values)
    return fit_components(values, assignment, current.n_components, variance_floor, previous=current)


def _initial_mixture(values: np.ndarray, settings: GrabCutSettings) -> MixtureComponents:
    k = min(settings.components, values.size)
    if k < settings.components:
        logger.debug(f"Only {values.size} samples, fitting {k} components")
    return fit_gmm(values, k, seed=settings.seed, variance_floor=settings.variance_floor)


def grabcut(image: np.ndarray, trimap: Trimap, iterations: int = Config.GRABCUT_ITERATIONS,
            components: int = Config.GMM_COMPONENTS, gamma: float = Config.GRABCUT_GAMMA,
            seed: int = Config.DEFAULT_SEED, variance_floor: float = Config.VARIANCE_FLOOR) -> GrabCutResult:
    """
    Segment a lesion by alternating mixture fitting and min-cut labelling.

    Each iteration assigns every pixel to its best component within its current
    class, refits both mixtures from those assignments and relabels with a
    graph cut. The energy recorded after each iteration never increases.

    Args:
        image: HU grid of the key slice
        trimap: Hard foreground / background constraints
        iterations: Outer iterations, at least 1
        components: Mixture components per class
        gamma: Smoothness weight
        seed: Seed for mixture initialisation
        variance_floor: Lower bound on component variances

    Returns:
        GrabCutResult; when no unknown pixel ends up foreground the hard
        foreground is returned with fallback=True and AllForegroundCollapsed
        is warned
    """
    settings = GrabCutSettings(iterations=iterations, components=components, gamma=gamma,
                               seed=seed, variance_floor=variance_floor)
    settings.validate_settings()
    z = np.asarray(image, dtype=np.float64)
    if z.shape != trimap.shape:
        raise ValueError(f"image shape {z.shape} does not match trimap {trimap.shape}")

    beta = compute_beta(z)
    alpha = ~trimap.bg_hard
    gmm = GmmModel(foreground=_initial_mixture(z[alpha], settings),
                   background=_initial_mixture(z[~alpha], settings))

    trace: List[float] = []
    for iteration in range(1, settings.iterations + 1):
        gmm = GmmModel(foreground=_refit(z[alpha], gmm.foreground, settings.variance_floor),
                       background=_refit(z[~alpha], gmm.background, settings.variance_floor))
        previous_energy = segmentation_energy(z, alpha, gmm, settings.gamma, beta)
        candidate = graph_cut_segment(z, trimap, gmm, settings.gamma, beta)
        energy = segmentation_energy(z, candidate, gmm, settings.gamma, beta)
        # capacity quantisation can leave the cut a hair above the current labelling
        if energy <= previous_energy:
            alpha = candidate
        else:
            energy = previous_energy
        trace.append(energy)
        logger.debug(f"GrabCut iteration {iteration}: energy {trace[-1]:.4f}, "
                     f"foreground {int(alpha.sum())} px")

        if trimap.unknown.any() and not (alpha & trimap.unknown).any():
            warnings.warn(AllForegroundCollapsed(
                "every unknown pixel was labelled background; returning the hard foreground"))
            logger.warning("GrabCut collapsed to the RECIST quadrilateral")
            return GrabCutResult(mask=trimap.fg_hard.copy(), energy_trace=trace,
                                 fallback=True, iterations_run=iteration)

    return GrabCutResult(mask=alpha, energy_trace=trace, iterations_run=settings.iterations)


def mask_to_box(mask: np.ndarray) -> Box:
    """
    Tight half-open box around the foreground pixels.

    Raises:
        EmptyMask: if the mask has no foreground pixel
    """
    rows, cols = np.nonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixel")
    return Box(x1=float(cols.min()), y1=float(rows.min()),
               x2=float(cols.max() + 1), y2=float(rows.max() + 1))


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap 2|A∩B| / (|A| + |B|); two empty masks score 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    total = int(a.sum() + b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total
