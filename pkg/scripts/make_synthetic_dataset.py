#!/usr/bin/env python
"""
Write a small synthetic DeepLesion-style dataset: DL_info.csv, 16-bit PNG
slices under Images_png/<study>/<NNN>.png and a detections.jsonl file.

Lesions are noisy ellipses on a soft-tissue background, so every command of
the CLI can be tried without the real data.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.config import Config
from src.evaluation.detections import Detection, write_detections
from src.geometry.boxes import Box
from src.ingestion.ct_preprocessing import save_slice

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

IMAGE_SIZE = 256
BACKGROUND_HU = 40.0
NOISE_HU = 12.0


def make_slice(rng, cx, cy, a, b, angle, lesion_hu):
    """One HU slice with an elliptical lesion; returns (hu, lesion mask)."""
    ys, xs = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE] + 0.5
    c, s = np.cos(angle), np.sin(angle)
    u = (xs - cx) * c + (ys - cy) * s
    v = -(xs - cx) * s + (ys - cy) * c
    lesion = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    hu = np.where(lesion, lesion_hu, BACKGROUND_HU) + rng.normal(0, NOISE_HU, (IMAGE_SIZE, IMAGE_SIZE))
    return np.rint(hu).astype(int), lesion


def recist_axes(cx, cy, a, b, angle):
    """Endpoints of the major and minor ellipse axes, shrunk slightly inside the lesion."""
    c, s = np.cos(angle), np.sin(angle)
    la, lb = 0.95 * a, 0.95 * b
    long_axis = (cx - la * c, cy - la * s, cx + la * c, cy + la * s)
    short_axis = (cx + lb * s, cy - lb * c, cx - lb * s, cy + lb * c)
    return long_axis + short_axis


def create_sample_data(out_dir: Path, n_studies: int = 12, seed: int = 0):
    """Create the dataset and return the annotation frame."""
    rng = np.random.default_rng(seed)
    images_dir = out_dir / 'Images_png'
    rows, detections = [], []

    for study in range(1, n_studies + 1):
        key = int(rng.integers(10, 60))
        spacing = float(rng.uniform(0.6, 0.9))
        thickness = float(rng.choice([1.0, 2.0, 5.0]))
        a = min(float(rng.lognormal(np.log(14), 0.5)), 45.0)
        b = a * float(rng.uniform(0.5, 1.0))
        angle = float(rng.uniform(0, np.pi))
        cx, cy = rng.uniform(60, IMAGE_SIZE - 60, 2)
        lesion_hu = float(rng.uniform(120, 260))
        file_name = f"{study:06d}_01_01_{key:03d}.png"
        stem = Path(file_name).stem

        for offset in range(-3, 4):
            hu, lesion = make_slice(rng, cx, cy, a * (1 - 0.08 * abs(offset)), b * (1 - 0.08 * abs(offset)),
                                    angle, lesion_hu)
            save_slice(images_dir / f"{study:06d}_01_01" / f"{key + offset:03d}.png", hu)
            if offset == 0:
                mask = lesion

        ys, xs = np.nonzero(mask)
        x1, y1 = max(int(xs.min()) - 3, 0), max(int(ys.min()) - 3, 0)
        x2, y2 = min(int(xs.max()) + 4, IMAGE_SIZE), min(int(ys.max()) + 4, IMAGE_SIZE)
        recist = recist_axes(cx, cy, a, b, angle)
        split = 1 + study % 3
        rows.append({
            'File_name': file_name,
            'Patient_index': study, 'Study_index': 1, 'Series_ID': 1,
            'Key_slice_index': key,
            'Measurement_coordinates': ', '.join(f"{v:.3f}" for v in recist),
            'Bounding_boxes': f"{x1}, {y1}, {x2}, {y2}",
            'Lesion_diameters_Pixel_': f"{2 * a:.3f}, {2 * b:.3f}",
            'Normalized_lesion_location': '0.5, 0.5, 0.5',
            'Coarse_lesion_type': -1,
            'Possibly_noisy': 0,
            'Slice_range': f"{key - 3}, {key + 3}",
            'Spacing_mm_px_': f"{spacing:.4f}, {spacing:.4f}, {thickness:g}",
            'Image_size': f"{IMAGE_SIZE}, {IMAGE_SIZE}",
            'DICOM_windows': '-175, 275',
            'Patient_gender': 'F' if study % 2 else 'M',
            'Patient_age': int(rng.integers(30, 80)),
            'Train_Val_Test': split,
        })

        # one jittered hit most of the time plus a few false positives
        if rng.uniform() < 0.85:
            jitter = rng.normal(0, 2.0, 4).tolist()
            hit = Box(x1=x1 + jitter[0], y1=y1 + jitter[1], x2=x2 + jitter[2], y2=y2 + jitter[3])
            detections.append(Detection(image_id=stem, box=hit, score=float(rng.uniform(0.5, 1.0)),
                                        mask_box=Box(x1=x1, y1=y1, x2=x2, y2=y2)))
        for _ in range(int(rng.integers(0, 4))):
            fx, fy = rng.uniform(0, IMAGE_SIZE - 30, 2).tolist()
            detections.append(Detection(image_id=stem, box=Box(x1=fx, y1=fy, x2=fx + 20, y2=fy + 20),
                                        score=float(rng.uniform(0.0, 0.7))))

    frame = pd.DataFrame(rows)
    frame.to_csv(out_dir / 'DL_info.csv', index=False)
    write_detections(detections, out_dir / 'detections.jsonl')
    logger.info(f"Wrote {len(rows)} lesions and {len(detections)} detections to {out_dir}")
    return frame


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().split('\n')[0])
    parser.add_argument('--out', type=Path, default=Path('data/synthetic'))
    parser.add_argument('--studies', type=int, default=12)
    parser.add_argument('--seed', type=int, default=Config.DEFAULT_SEED)
    args = parser.parse_args()

    try:
        args.out.mkdir(parents=True, exist_ok=True)
        create_sample_data(args.out, args.studies, args.seed)
        print("✅ Synthetic dataset created")
        print(f"   annotations: {args.out / 'DL_info.csv'}")
        print(f"   images:      {args.out / 'Images_png'}")
        print(f"   detections:  {args.out / 'detections.jsonl'}")
    except Exception as e:
        logger.error(f"Error creating synthetic dataset: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
