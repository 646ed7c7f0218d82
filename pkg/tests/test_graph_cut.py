import itertools
import math

import numpy as np
import pytest

from src.segmentation.gmm import GmmModel, MixtureComponents
from src.segmentation.graph_cut import (
    CAPACITY_RESOLUTION, _quantize, compute_beta, graph_cut_segment, pairwise_weights, segmentation_energy,
)
from src.segmentation.trimap import Trimap, TrimapLabel


def single(mean, variance):
    return MixtureComponents(np.array([1.0]), np.array([float(mean)]), np.array([float(variance)]))


def corner_trimap(shape):
    """Top-left pixel hard foreground, bottom-right hard background, rest unknown."""
    labels = np.full(shape, TrimapLabel.UNKNOWN, dtype=np.uint8)
    labels[0, 0] = TrimapLabel.FG_HARD
    labels[-1, -1] = TrimapLabel.BG_HARD
    return Trimap(labels)


def quantized_energies(image, labels, gmm, gamma, beta):
    """Cut cost of each labelling in a (n, h, w) batch, on the network's quantized capacities."""
    fg_cost, bg_cost = gmm.unary_costs(image)
    shift = np.minimum(fg_cost, bg_cost)
    energy = np.where(labels, _quantize(fg_cost - shift), _quantize(bg_cost - shift)).sum(axis=(1, 2))
    h, w = image.shape
    for (dy, dx), weight in pairwise_weights(image, gamma, beta).items():
        first = labels[:, :h - dy, max(0, -dx):w - max(0, dx)]
        second = labels[:, dy:, max(0, dx):w - max(0, -dx)]
        energy += ((first != second) * _quantize(weight)).sum(axis=(1, 2))
    return energy


def brute_force_minimum(image, trimap, gmm, gamma, beta):
    """Minimum quantized energy over every labelling of the unknown pixels."""
    free = np.flatnonzero(trimap.unknown.ravel())
    combos = np.array(list(itertools.product([False, True], repeat=free.size)), dtype=bool)
    labels = np.repeat(trimap.fg_hard.ravel()[None, :], len(combos), axis=0)
    labels[:, free] = combos
    labels = labels.reshape(len(combos), *image.shape)
    return float(quantized_energies(image, labels, gmm, gamma, beta).min())


def test_beta_constant_image_is_zero():
    assert compute_beta(np.full((5, 5), 7.0)) == 0.0
    assert compute_beta(np.array([[3.0]])) == 0.0


def test_beta_two_pixels():
    assert compute_beta(np.array([[0.0, 10.0]])) == pytest.approx(0.005)


@pytest.mark.parametrize('a', [1.0, 4.0, 25.0])
def test_beta_alternating_row(a):
    row = np.array([[a, 0.0] * 4])
    assert compute_beta(row) == pytest.approx(1.0 / (2.0 * a * a))


def test_pairwise_weights_scale_diagonals():
    weights = pairwise_weights(np.zeros((3, 3)), gamma=50.0, beta=0.0)
    np.testing.assert_allclose(weights[(0, 1)], 50.0)
    np.testing.assert_allclose(weights[(1, 1)], 50.0 / math.sqrt(2.0))
    assert weights[(1, -1)].shape == (2, 2)


def test_all_hard_labels_are_returned_unchanged():
    labels = np.zeros((4, 4), dtype=np.uint8)
    labels[1:3, 1:3] = TrimapLabel.FG_HARD
    trimap = Trimap(labels)
    image = np.random.default_rng(0).normal(0, 50, (4, 4))
    gmm = GmmModel(single(0, 100), single(0, 100))
    np.testing.assert_array_equal(graph_cut_segment(image, trimap, gmm), trimap.fg_hard)


def test_hard_labels_survive_strong_opposing_data():
    image = np.full((3, 3), 200.0)
    image[1, 1] = -100.0
    labels = np.full((3, 3), TrimapLabel.UNKNOWN, dtype=np.uint8)
    labels[1, 1] = TrimapLabel.FG_HARD
    labels[0, 0] = TrimapLabel.BG_HARD
    labels[2, 2] = TrimapLabel.BG_HARD
    gmm = GmmModel(foreground=single(200, 10), background=single(-100, 10))
    mask = graph_cut_segment(image, Trimap(labels), gmm, gamma=50.0)
    assert mask[1, 1]
    assert not mask[0, 0] and not mask[2, 2]


def test_cut_matches_brute_force_minimum():
    rng = np.random.default_rng(0)
    trimap = corner_trimap((3, 4))
    for _ in range(200):
        image = rng.normal(0, 50, (3, 4))
        gmm = GmmModel(foreground=single(rng.normal(30, 30), rng.uniform(100, 3000)),
                       background=single(rng.normal(-30, 30), rng.uniform(100, 3000)))
        gamma = rng.uniform(0, 20)
        beta = compute_beta(image)
        mask = graph_cut_segment(image, trimap, gmm, gamma, beta)
        found = float(quantized_energies(image, mask[None], gmm, gamma, beta)[0])
        assert abs(found - brute_force_minimum(image, trimap, gmm, gamma, beta)) < CAPACITY_RESOLUTION / 2
        # quantization moves the true energy by at most half a step per term
        terms = mask.size + sum(w.size for w in pairwise_weights(image, gamma, beta).values())
        shift = float(np.minimum(*gmm.unary_costs(image)).sum())
        exact = segmentation_energy(image, mask, gmm, gamma, beta) - shift
        assert abs(found - exact) <= terms * CAPACITY_RESOLUTION / 2 + 1e-9


def test_zero_gamma_decides_each_pixel_independently():
    rng = np.random.default_rng(1)
    image = rng.normal(0, 100, (6, 6))
    trimap = corner_trimap((6, 6))
    gmm = GmmModel(foreground=single(50, 900), background=single(-50, 2500))
    mask = graph_cut_segment(image, trimap, gmm, gamma=0.0)
    fg_cost, bg_cost = gmm.unary_costs(image)
    expected = fg_cost < bg_cost
    expected[trimap.fg_hard] = True
    expected[trimap.bg_hard] = False
    np.testing.assert_array_equal(mask, expected)


def test_shape_mismatch_is_rejected():
    gmm = GmmModel(single(0, 1), single(1, 1))
    with pytest.raises(ValueError):
        graph_cut_segment(np.zeros((4, 4)), corner_trimap((3, 4)), gmm)
