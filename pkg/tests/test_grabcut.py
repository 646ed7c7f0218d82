import warnings

import numpy as np
import pytest

from src.exceptions import (
    AllForegroundCollapsed, EmptyMask, EndpointOutsideBox, InvalidSettings, InvalidTrimap,
)
from src.geometry.boxes import Box
from src.geometry.recist import RecistDiameters
from src.segmentation.grabcut import GrabCutSettings, dice, grabcut, mask_to_box
from src.segmentation.trimap import Trimap, TrimapLabel, build_trimap

from .conftest import PHANTOM_SIZE, make_disk_phantom


def phantom_trimap(recist, bbox):
    return build_trimap(recist, bbox, (PHANTOM_SIZE, PHANTOM_SIZE))


@pytest.mark.parametrize('seed', range(20))
def test_phantom_disk_is_recovered(seed):
    image, disk, recist, bbox = make_disk_phantom(seed=seed)
    result = grabcut(image, phantom_trimap(recist, bbox), seed=seed)
    assert not result.fallback
    assert dice(result.mask, disk) >= 0.95
    assert all(b <= a for a, b in zip(result.energy_trace, result.energy_trace[1:]))


def test_more_iterations_never_raise_energy(disk_phantom):
    image, _, recist, bbox = disk_phantom
    trimap = phantom_trimap(recist, bbox)
    one = grabcut(image, trimap, iterations=1)
    five = grabcut(image, trimap, iterations=5)
    assert len(five.energy_trace) == 5
    assert five.energy_trace[-1] <= one.energy_trace[-1]


def test_hard_labels_preserved(disk_phantom):
    image, _, recist, bbox = disk_phantom
    trimap = phantom_trimap(recist, bbox)
    mask = grabcut(image, trimap).mask
    assert mask[trimap.fg_hard].all()
    assert not mask[trimap.bg_hard].any()


def test_constant_image_respects_hard_labels(disk_phantom):
    _, _, recist, bbox = disk_phantom
    trimap = phantom_trimap(recist, bbox)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        result = grabcut(np.zeros((PHANTOM_SIZE, PHANTOM_SIZE)), trimap)
    assert result.mask[trimap.fg_hard].all()
    assert not result.mask[trimap.bg_hard].any()
    assert np.all(np.isfinite(result.energy_trace))


def test_collapse_falls_back_to_quadrilateral(disk_phantom):
    _, _, recist, bbox = disk_phantom
    trimap = phantom_trimap(recist, bbox)
    image = np.where(trimap.fg_hard, 200.0, -100.0)
    with pytest.warns(AllForegroundCollapsed):
        result = grabcut(image, trimap)
    assert result.fallback
    np.testing.assert_array_equal(result.mask, trimap.fg_hard)


def test_components_reduced_for_tiny_regions():
    labels = np.zeros((6, 6), dtype=np.uint8)
    labels[2:4, 2:4] = TrimapLabel.UNKNOWN
    labels[2, 2] = TrimapLabel.FG_HARD
    image = np.random.default_rng(0).normal(0, 10, (6, 6))
    result = grabcut(image, Trimap(labels), components=5)
    assert result.mask[2, 2]


@pytest.mark.parametrize('field, value', [('iterations', 0), ('components', 0), ('gamma', -1.0),
                                          ('variance_floor', 0.0)])
def test_invalid_settings(field, value):
    with pytest.raises(InvalidSettings):
        GrabCutSettings(**{field: value}).validate_settings()


def test_trimap_partitions_image(disk_phantom):
    _, disk, recist, bbox = disk_phantom
    trimap = phantom_trimap(recist, bbox)
    counts = trimap.counts()
    assert sum(counts.values()) == PHANTOM_SIZE * PHANTOM_SIZE
    assert not (trimap.fg_hard & trimap.bg_hard).any()
    assert disk[trimap.fg_hard].all()
    assert counts['bg_hard'] == PHANTOM_SIZE ** 2 - 68 * 68


def test_trimap_rejects_endpoint_outside_box():
    recist = RecistDiameters(long_axis=((2, 5), (12, 5)), short_axis=((7, 3), (7, 7)))
    with pytest.raises(EndpointOutsideBox):
        build_trimap(recist, Box(x1=3, y1=2, x2=11, y2=9), (20, 20))


def test_trimap_rejects_box_covering_image():
    recist = RecistDiameters(long_axis=((2, 5), (12, 5)), short_axis=((7, 3), (7, 7)))
    with pytest.raises(InvalidTrimap):
        build_trimap(recist, Box(x1=0, y1=0, x2=14, y2=12), (14, 10))


def test_trimap_requires_both_hard_classes():
    with pytest.raises(InvalidTrimap):
        Trimap(np.full((3, 3), TrimapLabel.UNKNOWN, dtype=np.uint8))


def test_thin_quadrilateral_seeds_centroid_pixel():
    recist = RecistDiameters(long_axis=((10, 10), (20, 10)), short_axis=((15, 9.9), (15, 10.1)))
    trimap = build_trimap(recist, Box(x1=8, y1=8, x2=22, y2=12), (30, 30))
    assert trimap.counts()['fg_hard'] == 1
    assert trimap.fg_hard[10, 15]


def test_mask_to_box():
    mask = np.zeros((8, 8), dtype=bool)
    mask[2, 3] = True
    assert mask_to_box(mask) == Box(x1=3, y1=2, x2=4, y2=3)
    mask[5, 6] = True
    assert mask_to_box(mask).as_tuple() == (3.0, 2.0, 7.0, 6.0)


def test_mask_to_box_empty():
    with pytest.raises(EmptyMask):
        mask_to_box(np.zeros((4, 4), dtype=bool))


def test_dice():
    a = np.array([[1, 1, 0, 0]], dtype=bool)
    b = np.array([[0, 1, 1, 0]], dtype=bool)
    assert dice(a, b) == pytest.approx(0.5)
    assert dice(a, a) == 1.0
    assert dice(np.zeros(4, bool), np.zeros(4, bool)) == 1.0
