"""
One-dimensional Gaussian mixtures for CT intensities.

Components are initialised with K-means seeded at evenly spread quantiles
(or at seeded random samples) and refined with EM. Variances never drop
below the configured floor, which keeps flat regions from producing
singular likelihoods.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from ..config import Config
from ..exceptions import TooFewSamples

logger = logging.getLogger(__name__)

HALF_LOG_TWO_PI = 0.5 * np.log(2.0 * np.pi)

InitMode = Literal['quantile', 'random']


@dataclass(frozen=True)
class MixtureComponents:
    """Weights, means and variances of one class's mixture."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_costs(self, values: np.ndarray) -> np.ndarray:
        """
        Negative log of weight times density, per component.

        Returns:
            (N, K) array; components with zero weight cost +inf
        """
        z = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        with np.errstate(divide='ignore'):
            log_w = np.log(self.weights)
        return (-log_w + HALF_LOG_TWO_PI + 0.5 * np.log(self.variances)
                + (z - self.means) ** 2 / (2.0 * self.variances))

    def best_component_cost(self, values: np.ndarray) -> np.ndarray:
        """Cost of the best single component for each value, (N,)."""
        return self.component_costs(values).min(axis=1)

    def assign(self, values: np.ndarray) -> np.ndarray:
        return self.component_costs(values).argmin(axis=1)

    def log_likelihood(self, values: np.ndarray) -> float:
        """Total mixture log-likelihood of the values."""
        return float(logsumexp(-self.component_costs(values), axis=1).sum())


@dataclass(frozen=True)
class GmmModel:
    """Foreground and background intensity mixtures."""

    foreground: MixtureComponents
    background: MixtureComponents

    def unary_costs(self, image: np.ndarray):
        """Per-pixel (foreground, background) data costs shaped like the image."""
        flat = np.asarray(image, dtype=np.float64).ravel()
        fg = self.foreground.best_component_cost(flat).reshape(image.shape)
        bg = self.background.best_component_cost(flat).reshape(image.shape)
        return fg, bg


def fit_components(values: np.ndarray, assignment: np.ndarray, n_components: int,
                   variance_floor: float = Config.VARIANCE_FLOOR,
                   previous: Optional[MixtureComponents] = None) -> MixtureComponents:
    """
    Maximum-likelihood parameters from a hard component assignment.

    Components that receive no sample get zero weight and keep their previous
    mean and variance (or the pooled statistics when there is no previous fit).
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    counts = np.bincount(assignment, minlength=n_components).astype(np.float64)
    sums = np.bincount(assignment, weights=values, minlength=n_components)
    squares = np.bincount(assignment, weights=values ** 2, minlength=n_components)

    if previous is not None:
        means, variances = previous.means.copy(), previous.variances.copy()
    else:
        means = np.full(n_components, values.mean())
        variances = np.full(n_components, max(values.var(), variance_floor))

    filled = counts > 0
    means[filled] = sums[filled] / counts[filled]
    raw_var = squares[filled] / counts[filled] - means[filled] ** 2
    variances[filled] = np.maximum(raw_var, variance_floor)
    return MixtureComponents(weights=counts / counts.sum(), means=means, variances=variances)


class GaussianMixture1D:
    """EM for a univariate Gaussian mixture with a variance floor."""

    def __init__(self, n_components: int = Config.GMM_COMPONENTS, seed: int = Config.DEFAULT_SEED,
                 init: InitMode = 'quantile', variance_floor: float = Config.VARIANCE_FLOOR,
                 max_iter: int = 100, tol: float = 1e-6):
        self.n_components = n_components
        self.seed = seed
        self.init = init
        self.variance_floor = variance_floor
        self.max_iter = max_iter
        self.tol = tol
        self.components_: Optional[MixtureComponents] = None
        self.log_likelihood_trace_: List[float] = []

    def _initial_centers(self, values: np.ndarray) -> np.ndarray:
        if self.init == 'quantile':
            return np.quantile(values, (np.arange(self.n_components) + 0.5) / self.n_components)
        if self.init == 'random':
            rng = np.random.default_rng(self.seed)
            return rng.choice(values, size=self.n_components, replace=False)
        raise ValueError(f"unknown init mode {self.init!r}")

    def _kmeans_init(self, values: np.ndarray) -> MixtureComponents:
        centers = self._initial_centers(values).reshape(-1, 1)
        with warnings.catch_warnings():
            # duplicate seeds on flat data collapse clusters; that is expected here
            warnings.simplefilter('ignore', ConvergenceWarning)
            kmeans = KMeans(n_clusters=self.n_components, init=centers, n_init=1,
                            max_iter=Config.KMEANS_ITERATIONS, random_state=self.seed)
            labels = kmeans.fit_predict(values.reshape(-1, 1))
        return fit_components(values, labels, self.n_components, self.variance_floor)

    def _em_step(self, values: np.ndarray, current: MixtureComponents) -> MixtureComponents:
        log_joint = -current.component_costs(values)
        log_resp = log_joint - logsumexp(log_joint, axis=1, keepdims=True)
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)

        weights = nk / nk.sum()
        means = current.means.copy()
        variances = current.variances.copy()
        alive = nk > 0
        means[alive] = (resp[:, alive] * values[:, None]).sum(axis=0) / nk[alive]
        spread = (resp[:, alive] * (values[:, None] - means[alive]) ** 2).sum(axis=0) / nk[alive]
        variances[alive] = np.maximum(spread, self.variance_floor)
        return MixtureComponents(weights=weights, means=means, variances=variances)

    def fit(self, samples) -> 'GaussianMixture1D':
        """
        Fit the mixture.

        Args:
            samples: 1-D intensity samples

        Returns:
            self, with components_ and log_likelihood_trace_ set

        Raises:
            TooFewSamples: if there are fewer samples than components
        """
        values = np.asarray(samples, dtype=np.float64).ravel()
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if values.size < self.n_components:
            raise TooFewSamples(f"{values.size} samples for {self.n_components} components")

        current = self._kmeans_init(values)
        trace = [current.log_likelihood(values)]
        for _ in range(self.max_iter):
            current = self._em_step(values, current)
            trace.append(current.log_likelihood(values))
            if abs(trace[-1] - trace[-2]) <= self.tol * max(1.0, abs(trace[-2])):
                break

        self.components_ = current
        self.log_likelihood_trace_ = trace
        logger.debug(f"GMM fit: K={self.n_components}, {len(trace) - 1} EM steps, "
                     f"log-likelihood {trace[-1]:.4f}")
        return self


def fit_gmm(samples, n_components: int = Config.GMM_COMPONENTS, seed: int = Config.DEFAULT_SEED,
            init: InitMode = 'quantile', variance_floor: float = Config.VARIANCE_FLOOR) -> MixtureComponents:
    """
    Fit a K-component mixture to one class's intensities.

    Args:
        samples: Intensity samples in HU
        n_components: Number of components K
        seed: Seed for the random init mode and K-means
        init: 'quantile' or 'random' initial centers
        variance_floor: Lower bound on every component variance

    Returns:
        MixtureComponents with normalised weights

    Raises:
        TooFewSamples: if len(samples) < K
    """
    return GaussianMixture1D(n_components, seed, init, variance_floor).fit(samples).components_
