"""
Shared fixtures: a synthetic disk phantom, DeepLesion-style CSV writer and slice writer.
"""
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
import pytest

from src.geometry.boxes import Box
from src.geometry.recist import RecistDiameters
from src.ingestion.ct_preprocessing import save_slice

PHANTOM_SIZE = 128
PHANTOM_CENTER = 64.0
PHANTOM_RADIUS = 30.0
PHANTOM_FG_HU = 200.0
PHANTOM_BG_HU = -100.0
PHANTOM_NOISE = 15.0

CSV_COLUMNS = [
    'File_name', 'Patient_index', 'Study_index', 'Series_ID', 'Key_slice_index',
    'Measurement_coordinates', 'Bounding_boxes', 'Lesion_diameters_Pixel_', 'Normalized_lesion_location',
    'Coarse_lesion_type', 'Possibly_noisy', 'Slice_range', 'Spacing_mm_px_', 'Image_size',
    'DICOM_windows', 'Patient_gender', 'Patient_age', 'Train_Val_Test',
]


def make_disk_phantom(seed: int = 0, size: int = PHANTOM_SIZE, radius: float = PHANTOM_RADIUS):
    """
    Noisy disk on a flat background.

    Returns:
        (image HU, true disk mask, RECIST diameters across the disk, bbox = disk bounds + 4 px)
    """
    c = size / 2.0
    ys, xs = np.mgrid[0:size, 0:size]
    disk = (xs + 0.5 - c) ** 2 + (ys + 0.5 - c) ** 2 <= radius ** 2
    rng = np.random.default_rng(seed)
    image = np.where(disk, PHANTOM_FG_HU, PHANTOM_BG_HU) + rng.normal(0.0, PHANTOM_NOISE, (size, size))
    recist = RecistDiameters(long_axis=((c - radius, c), (c + radius, c)),
                             short_axis=((c, c - radius), (c, c + radius)))
    bbox = Box(x1=c - radius - 4, y1=c - radius - 4, x2=c + radius + 4, y2=c + radius + 4)
    return image, disk, recist, bbox


@pytest.fixture
def disk_phantom():
    return make_disk_phantom(seed=0)


def annotation_row(file_name: str, bbox: Sequence[float], recist: Sequence[float], split: int = 3,
                   spacing=(0.8, 0.8, 2.0), size=(512, 512), lesion_type: int = -1,
                   key_slice: int = None) -> Dict[str, str]:
    """One DeepLesion DL_info row with list-valued cells written as comma-separated strings."""
    def join(values):
        return ', '.join(f"{v:g}" for v in values)

    slice_number = key_slice if key_slice is not None else int(Path(file_name).stem.rsplit('_', 1)[1])
    return {
        'File_name': file_name,
        'Patient_index': '1', 'Study_index': '1', 'Series_ID': '1',
        'Key_slice_index': str(slice_number),
        'Measurement_coordinates': join(recist),
        'Bounding_boxes': join(bbox),
        'Lesion_diameters_Pixel_': '10, 5',
        'Normalized_lesion_location': '0.5, 0.5, 0.5',
        'Coarse_lesion_type': str(lesion_type),
        'Possibly_noisy': '0',
        'Slice_range': f"{slice_number - 5}, {slice_number + 5}",
        'Spacing_mm_px_': join(spacing),
        'Image_size': join(size),
        'DICOM_windows': '-175, 275',
        'Patient_gender': 'F', 'Patient_age': '60',
        'Train_Val_Test': str(split),
    }


def write_annotations(path: Path, rows: List[Dict[str, str]], columns: List[str] = CSV_COLUMNS) -> Path:
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


@pytest.fixture
def annotations_writer(tmp_path):
    def _write(rows, name='DL_info.csv', columns=CSV_COLUMNS):
        return write_annotations(tmp_path / name, rows, columns)
    return _write


def write_study_slice(images_dir: Path, file_name: str, hu: np.ndarray) -> Path:
    """Write a slice at <images>/<study>/<NNN>.png for a DeepLesion file name."""
    stem = Path(file_name).stem
    study, number = stem.rsplit('_', 1)
    return save_slice(images_dir / study / f"{int(number):03d}.png", hu)
