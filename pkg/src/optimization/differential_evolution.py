"""
Differential evolution (DE/rand/1/bin) with reflective bound handling.

The solver minimises a vectorised objective. Each generation builds one
trial vector per population member, evaluates all trials together and then
applies greedy selection, so the generation is a synchronisation barrier.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InvalidSettings

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], np.ndarray]


def reflect_into_bounds(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """
    Mirror coordinates at the bounds until they fall inside.

    Repeated reflection x -> 2*bound - x folds onto a triangle wave with period
    twice the box width; infinite bounds leave the coordinate untouched.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    finite = np.isfinite(lower) & np.isfinite(upper)
    if not finite.any():
        return x
    lo = np.broadcast_to(lower, x.shape)
    hi = np.broadcast_to(upper, x.shape)
    mask = np.broadcast_to(finite, x.shape) & ((x < lo) | (x > hi))
    if not mask.any():
        return x
    width = (hi - lo)[mask]
    y = np.mod(x[mask] - lo[mask], 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    # clip guards against one-ulp overshoot from lo + width
    x[mask] = np.clip(lo[mask] + y, lo[mask], hi[mask])
    return x


@dataclass
class DEResult:
    """Outcome of a differential evolution run."""

    x: np.ndarray
    fun: float
    trace: List[float] = field(default_factory=list)
    generations: int = 0
    nfev: int = 0


class DifferentialEvolutionSolver:
    """Minimises an objective over a box with DE/rand/1/bin."""

    def __init__(self, func: Objective, bounds: Sequence[Tuple[float, float]],
                 population_size: int = 50, mutation: float = 0.8, crossover: float = 0.9,
                 max_generations: int = 100, seed: Optional[int] = None,
                 init_bounds: Optional[Sequence[Tuple[float, float]]] = None):
        """
        Args:
            func: maps a (P, D) population to (P,) energies, lower is better
            bounds: (lower, upper) per dimension; infinite bounds disable reflection
            population_size: number of members, at least 4
            mutation: differential weight F in (0, 2]
            crossover: binomial crossover rate CR in [0, 1]
            max_generations: number of generations to run
            seed: seed for numpy's default_rng
            init_bounds: sampling box for the initial population, defaults to bounds
        """
        if population_size < 4:
            raise InvalidSettings(f"population_size must be >= 4, got {population_size}")
        if not 0 < mutation <= 2:
            raise InvalidSettings(f"mutation must be in (0, 2], got {mutation}")
        if not 0 <= crossover <= 1:
            raise InvalidSettings(f"crossover must be in [0, 1], got {crossover}")
        if max_generations < 0:
            raise InvalidSettings(f"max_generations must be >= 0, got {max_generations}")

        self.func = func
        limits = np.asarray(bounds, dtype=np.float64)
        self.lower, self.upper = limits[:, 0], limits[:, 1]
        init = np.asarray(init_bounds if init_bounds is not None else bounds, dtype=np.float64)
        if not np.all(np.isfinite(init)):
            raise InvalidSettings("initialisation bounds must be finite")
        self.init_lower, self.init_upper = init[:, 0], init[:, 1]

        self.parameter_count = limits.shape[0]
        self.num_population_members = population_size
        self.scale = mutation
        self.cross_over_probability = crossover
        self.max_generations = max_generations
        self.random_number_generator = np.random.default_rng(seed)

        self.population = self.random_number_generator.uniform(
            self.init_lower, self.init_upper, size=(population_size, self.parameter_count))
        self.population = reflect_into_bounds(self.population, self.lower, self.upper)
        self.population_energies = self._evaluate(self.population)
        self._nfev = population_size

    def _evaluate(self, population: np.ndarray) -> np.ndarray:
        energies = np.asarray(self.func(population), dtype=np.float64).reshape(-1)
        if energies.shape[0] != population.shape[0]:
            raise ValueError("objective must return one energy per population member")
        return energies

    @property
    def best_index(self) -> int:
        # argmin returns the first of tied minima, keeping selection deterministic
        return int(np.argmin(self.population_energies))

    @property
    def x(self) -> np.ndarray:
        return self.population[self.best_index].copy()

    @property
    def best_energy(self) -> float:
        return float(self.population_energies[self.best_index])

    def _select_samples(self, candidate: int) -> np.ndarray:
        """Three distinct member indices, none equal to the candidate."""
        picks = self.random_number_generator.choice(self.num_population_members - 1, 3, replace=False)
        return picks + (picks >= candidate)

    def _mutate(self, candidate: int) -> np.ndarray:
        """Build the rand/1/bin trial vector for one population member."""
        rng = self.random_number_generator
        r0, r1, r2 = self._select_samples(candidate)
        bprime = self.population[r0] + self.scale * (self.population[r1] - self.population[r2])

        crossovers = rng.uniform(size=self.parameter_count) < self.cross_over_probability
        crossovers[rng.integers(self.parameter_count)] = True
        return np.where(crossovers, bprime, self.population[candidate])

    def step(self) -> float:
        """Evolve the population by one generation and return the best energy."""
        trials = np.array([self._mutate(i) for i in range(self.num_population_members)])
        trials = reflect_into_bounds(trials, self.lower, self.upper)
        trial_energies = self._evaluate(trials)
        self._nfev += self.num_population_members

        improved = trial_energies < self.population_energies
        self.population = np.where(improved[:, None], trials, self.population)
        self.population_energies = np.where(improved, trial_energies, self.population_energies)
        return self.best_energy

    def solve(self, callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None) -> DEResult:
        """
        Run all generations.

        Args:
            callback: called as callback(generation, population, energies) after the
                initial evaluation (generation 0) and after every generation

        Returns:
            DEResult with the best member and the per-generation best energy trace
        """
        trace = [self.best_energy]
        if callback is not None:
            callback(0, self.population.copy(), self.population_energies.copy())
        for generation in range(1, self.max_generations + 1):
            trace.append(self.step())
            if callback is not None:
                callback(generation, self.population.copy(), self.population_energies.copy())
            if generation % 10 == 0:
                logger.debug(f"generation {generation}: best energy {trace[-1]:.6g}")
        return DEResult(x=self.x, fun=self.best_energy, trace=trace,
                        generations=self.max_generations, nfev=self._nfev)


def sphere_self_test(generations: int = 150, population_size: int = 50, seed: int = 42) -> DEResult:
    """
    Minimise f(x) = sum(x^2) over five unbounded variables.

    The population starts in a box centred on the origin with the widths of the
    anchor genome box; reflection is disabled.
    """
    half_widths = np.array([0.6, 0.6, 0.6, 0.5, 1.0])
    solver = DifferentialEvolutionSolver(
        lambda pop: np.sum(pop ** 2, axis=1),
        bounds=[(-np.inf, np.inf)] * 5,
        init_bounds=list(zip(-half_widths, half_widths)),
        population_size=population_size,
        max_generations=generations,
        seed=seed,
    )
    return solver.solve()
