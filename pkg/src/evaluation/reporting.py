"""
Text and CSV reports for detection evaluation.
"""
import logging
import math
from pathlib import Path
from typing import Dict, Mapping, Sequence, Union

import pandas as pd

from ..config import Config
from .froc import SIZE_GROUPS, FrocCurve, GroupSensitivity

logger = logging.getLogger(__name__)

COLUMN_WIDTH = 10


def fp_label(target: float) -> str:
    return f"FP@{target:g}"


def format_sensitivity_table(results: Mapping[str, Sequence[float]],
                             targets: Sequence[float] = Config.FP_TARGETS) -> str:
    """
    Sensitivity (%) at each FP-per-image target, one row per method.

    Args:
        results: method name -> sensitivities in target order
        targets: FP-per-image targets

    Returns:
        Fixed-width table text ending with a newline
    """
    name_width = max([len('Method')] + [len(name) for name in results])
    header = 'Method'.ljust(name_width) + ''.join(f"{fp_label(t):>{COLUMN_WIDTH}}" for t in targets)
    lines = [header, '-' * len(header)]
    for name, values in results.items():
        lines.append(name.ljust(name_width) + ''.join(f"{100.0 * v:>{COLUMN_WIDTH}.2f}" for v in values))
    return '\n'.join(lines) + '\n'


def format_size_group_table(results: Mapping[str, Mapping[str, GroupSensitivity]],
                            fp_rate: float = Config.SIZE_GROUP_FP) -> str:
    """Per-size-group sensitivity (%) at one FP rate, with lesion counts in the header."""
    labels = [label for label, _, _ in SIZE_GROUPS]
    counts = {}
    for groups in results.values():
        for label in labels:
            counts[label] = groups[label].count
    name_width = max([len('Method')] + [len(name) for name in results])
    columns = [f"{label} (n={counts.get(label, 0)})" for label in labels]
    width = max(COLUMN_WIDTH, *(len(c) + 2 for c in columns))
    header = 'Method'.ljust(name_width) + ''.join(f"{c:>{width}}" for c in columns)
    lines = [f"Sensitivity (%) by lesion size at {fp_label(fp_rate)}", header, '-' * len(header)]
    for name, groups in results.items():
        cells = []
        for label in labels:
            value = groups[label].sensitivity
            cells.append(f"{'n/a':>{width}}" if math.isnan(value) else f"{100.0 * value:>{width}.2f}")
        lines.append(name.ljust(name_width) + ''.join(cells))
    return '\n'.join(lines) + '\n'


def froc_to_frame(curves: Mapping[str, FrocCurve]) -> pd.DataFrame:
    """Long-format table of all operating points."""
    rows = []
    for method, curve in curves.items():
        for point in curve.points:
            rows.append({'method': method, 'threshold': point.threshold,
                         'fp_per_image': point.fp_per_image, 'sensitivity': point.sensitivity})
    return pd.DataFrame(rows, columns=['method', 'threshold', 'fp_per_image', 'sensitivity'])


def write_froc_csv(curves: Mapping[str, FrocCurve], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    froc_to_frame(curves).to_csv(path, index=False, float_format='%.6f', lineterminator='\n')
    return path


def summarize(results: Mapping[str, Sequence[float]], groups: Mapping[str, Mapping[str, GroupSensitivity]],
              curves: Mapping[str, FrocCurve], targets: Sequence[float] = Config.FP_TARGETS,
              fp_rate: float = Config.SIZE_GROUP_FP) -> str:
    """Full evaluation summary: the sensitivity table, dataset counts and the size-group table."""
    first = next(iter(curves.values()))
    parts = [
        format_sensitivity_table(results, targets),
        f"images: {first.n_images}, lesions: {first.n_ground_truths}\n",
        format_size_group_table(groups, fp_rate),
    ]
    return '\n'.join(parts)


def write_summary(text: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def sensitivity_records(results: Mapping[str, Sequence[float]],
                        targets: Sequence[float] = Config.FP_TARGETS) -> Dict[str, Dict[str, float]]:
    """Sensitivities keyed by method then FP label, for JSON output."""
    return {name: {fp_label(t): float(v) for t, v in zip(targets, values)} for name, values in results.items()}
