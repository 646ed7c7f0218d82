"""
Anchor configuration search.

Five variables are optimised: three scales and two ratio parameters g1, g2.
Ratios are fixed to the reciprocal set {g2, g1, 1, 1/g1, 1/g2} (height:width)
and anchor sizes stay untouched.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..config import Config
from ..exceptions import BoundsViolation, EmptyCorpus, InvalidSettings
from ..geometry.anchors import AnchorConfig, Placement, PyramidLevel, best_anchor_ious
from ..geometry.boxes import Box, boxes_to_array
from .differential_evolution import DifferentialEvolutionSolver

logger = logging.getLogger(__name__)

ObjectiveMode = Literal['mean_iou', 'focal_weighted']

GENOME_BOUNDS: Tuple[Tuple[float, float], ...] = (
    (0.4, 1.6), (0.4, 1.6), (0.4, 1.6),  # scales
    (1.0, 2.0),                          # g1
    (2.0, 4.0),                          # g2
)

Corpus = Union[Sequence[Box], np.ndarray]


class AnchorGenome(BaseModel):
    """DE search vector: three scales and the two ratio parameters."""

    model_config = ConfigDict(frozen=True)

    s1: float
    s2: float
    s3: float
    g1: float
    g2: float

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'AnchorGenome':
        s1, s2, s3, g1, g2 = (float(v) for v in values)
        return cls(s1=s1, s2=s2, s3=s3, g1=g1, g2=g2)

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3, self.g1, self.g2], dtype=np.float64)

    def within_bounds(self) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(self.as_array(), GENOME_BOUNDS))


class DeSettings(BaseModel):
    """Differential evolution parameters for the anchor search."""

    population_size: int = Config.DE_POPULATION
    mutation: float = Config.DE_MUTATION
    crossover: float = Config.DE_CROSSOVER
    max_generations: int = Config.DE_GENERATIONS
    seed: int = Config.DEFAULT_SEED
    bound_handling: Literal['reflect'] = 'reflect'
    objective_mode: ObjectiveMode = 'mean_iou'
    placement: Placement = 'center'

    def validate_settings(self) -> bool:
        """Raise InvalidSettings unless every parameter is in range."""
        if self.population_size < 4:
            raise InvalidSettings(f"population_size must be >= 4 for rand/1, got {self.population_size}")
        if not 0 < self.mutation <= 2:
            raise InvalidSettings(f"mutation F must be in (0, 2], got {self.mutation}")
        if not 0 <= self.crossover <= 1:
            raise InvalidSettings(f"crossover CR must be in [0, 1], got {self.crossover}")
        if self.max_generations < 0:
            raise InvalidSettings(f"max_generations must be >= 0, got {self.max_generations}")
        return True


def decode_genome(genome: AnchorGenome, sizes: Sequence[float]) -> AnchorConfig:
    """
    Decode a genome into an anchor configuration.

    Args:
        genome: Search vector
        sizes: Anchor base sizes, passed through unchanged

    Returns:
        AnchorConfig with scales (s1, s2, s3) and ratios (g2, g1, 1, 1/g1, 1/g2)

    Raises:
        BoundsViolation: if the genome is outside its box constraints
    """
    if not genome.within_bounds():
        raise BoundsViolation(f"genome {genome.as_array().tolist()} outside bounds {GENOME_BOUNDS}")
    return AnchorConfig.searched(
        sizes=tuple(float(s) for s in sizes),
        scales=(genome.s1, genome.s2, genome.s3),
        ratios=(genome.g2, genome.g1, 1.0, 1.0 / genome.g1, 1.0 / genome.g2),
    )


def _corpus_array(corpus: Corpus) -> np.ndarray:
    if isinstance(corpus, np.ndarray):
        array = corpus.reshape(-1, 4).astype(np.float64)
    else:
        array = boxes_to_array(list(corpus))
    if array.shape[0] == 0:
        raise EmptyCorpus("anchor coverage needs at least one ground-truth box")
    return array


def _score(ious: np.ndarray, mode: ObjectiveMode) -> float:
    if mode == 'mean_iou':
        return float(ious.mean())
    if mode == 'focal_weighted':
        # squared miss term emphasises poorly covered lesions
        return float((1.0 - (1.0 - ious) ** 2).mean())
    raise InvalidSettings(f"unknown objective mode {mode!r}")


def coverage_objective(config: AnchorConfig, corpus: Corpus, mode: ObjectiveMode = 'mean_iou',
                       placement: Placement = 'center') -> float:
    """
    Score how well an anchor configuration covers a box corpus.

    Args:
        config: Anchor configuration
        corpus: Ground-truth boxes
        mode: 'mean_iou' or 'focal_weighted' (mean of 1 - (1 - IoU)^2)
        placement: best-anchor placement mode

    Returns:
        Objective in [0, 1], higher is better
    """
    gt = _corpus_array(corpus)
    return _score(best_anchor_ious(gt, config.shape_array(), placement), mode)


def coverage_fraction(config: AnchorConfig, corpus: Corpus, threshold: float = 0.5,
                      placement: Placement = 'center') -> float:
    """Fraction of boxes whose best anchor reaches the IoU threshold."""
    gt = _corpus_array(corpus)
    return float((best_anchor_ious(gt, config.shape_array(), placement) >= threshold).mean())


@dataclass
class AnchorSearchResult:
    """Best genome found by the search and its provenance."""

    genome: AnchorGenome
    config: AnchorConfig
    objective: float
    trace: List[float] = field(default_factory=list)
    settings: DeSettings = field(default_factory=DeSettings)


class AnchorOptimizer:
    """Searches anchor scales and ratios maximising best-anchor coverage of a corpus."""

    def __init__(self, corpus: Corpus, sizes: Sequence[float] = Config.ANCHOR_SIZES,
                 settings: DeSettings = None):
        self.settings = settings or DeSettings()
        self.settings.validate_settings()
        self.gt = _corpus_array(corpus)
        self.sizes = tuple(float(s) for s in sizes)

    def _population_objective(self, population: np.ndarray) -> np.ndarray:
        energies = np.empty(population.shape[0])
        for i, vector in enumerate(population):
            config = decode_genome(AnchorGenome.from_array(vector), self.sizes)
            ious = best_anchor_ious(self.gt, config.shape_array(), self.settings.placement)
            energies[i] = -_score(ious, self.settings.objective_mode)
        return energies

    def optimize(self) -> AnchorSearchResult:
        """
        Run the differential evolution search.

        Returns:
            AnchorSearchResult whose trace holds the best objective per generation
        """
        s = self.settings
        logger.info(f"Optimising anchors on {len(self.gt)} boxes "
                    f"(pop={s.population_size}, F={s.mutation}, CR={s.crossover}, "
                    f"generations={s.max_generations}, mode={s.objective_mode}, seed={s.seed})")
        solver = DifferentialEvolutionSolver(
            self._population_objective,
            bounds=GENOME_BOUNDS,
            population_size=s.population_size,
            mutation=s.mutation,
            crossover=s.crossover,
            max_generations=s.max_generations,
            seed=s.seed,
        )
        result = solver.solve()
        genome = AnchorGenome.from_array(result.x)
        trace = [-e for e in result.trace]
        logger.info(f"Best objective {trace[-1]:.6f} at genome {genome.as_array().round(4).tolist()}")
        return AnchorSearchResult(genome=genome, config=decode_genome(genome, self.sizes),
                                  objective=trace[-1], trace=trace, settings=s)


def de_optimize(corpus: Corpus, sizes: Sequence[float], settings: DeSettings) -> Tuple[AnchorGenome, List[float]]:
    """
    Differential evolution search over the anchor genome.

    Args:
        corpus: Ground-truth boxes
        sizes: Anchor base sizes
        settings: DE parameters

    Returns:
        (best genome, per-generation best objective trace)
    """
    result = AnchorOptimizer(corpus, sizes, settings).optimize()
    return result.genome, result.trace


def _format_values(values: Sequence[float]) -> str:
    return ', '.join(repr(float(v)) for v in values)


def write_anchor_config(config: AnchorConfig, path: Union[str, Path]) -> Path:
    """Write a config as key = value lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        '# anchor configuration (ratios are height:width)',
        f"sizes = {_format_values(config.sizes)}",
        f"strides = {_format_values([level.stride for level in config.levels])}",
        f"scales = {_format_values(config.scales)}",
        f"ratios = {_format_values(config.ratios)}",
    ]
    path.write_text('\n'.join(lines) + '\n')
    return path


def read_anchor_config(path: Union[str, Path]) -> AnchorConfig:
    """Read a config written by write_anchor_config."""
    values: Dict[str, Tuple[float, ...]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        key, _, raw = line.partition('=')
        values[key.strip()] = tuple(float(v) for v in raw.split(',') if v.strip())
    sizes = values['sizes']
    levels = None
    if 'strides' in values:
        levels = tuple(PyramidLevel(name=f"P{i + 2}", stride=s) for i, s in enumerate(values['strides']))
    return AnchorConfig(sizes=sizes, scales=values['scales'], ratios=values['ratios'],
                        levels=levels or ())


def write_trace(result: AnchorSearchResult, path: Union[str, Path], extra: Dict = None) -> Path:
    """Write the per-generation objective trace and run summary as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'best_genome': result.genome.model_dump(),
        'best_objective': result.objective,
        'objective_mode': result.settings.objective_mode,
        'placement': result.settings.placement,
        'population_size': result.settings.population_size,
        'mutation': result.settings.mutation,
        'crossover': result.settings.crossover,
        'generations': result.settings.max_generations,
        'seed': result.settings.seed,
        'trace': result.trace,
    }
    payload.update(extra or {})
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n')
    return path
