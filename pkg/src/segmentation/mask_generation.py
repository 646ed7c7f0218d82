"""
Batch generation of lesion masks from annotation records.
"""
import json
import logging
import warnings
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np

from ..exceptions import AllForegroundCollapsed, LesionKitError
from ..ingestion.deeplesion_ingestion import DeepLesionIngestion, LesionRecord
from .grabcut import GrabCutSettings, dice, grabcut, mask_to_box
from .trimap import build_trimap

logger = logging.getLogger(__name__)


@dataclass
class MaskOutcome:
    """Result of segmenting one record; mask is None when the record failed."""

    record_position: int
    file_name: str
    lesion_index: int
    mask: Optional[np.ndarray] = None
    sidecar: Dict = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class MaskGenerationSummary:
    written: int = 0
    failed: int = 0
    fallbacks: int = 0
    dice_values: List[float] = field(default_factory=list)
    outputs: List[Path] = field(default_factory=list)

    @property
    def mean_dice(self) -> float:
        return float(np.mean(self.dice_values)) if self.dice_values else 0.0

    def summary_line(self) -> str:
        return (f"masks written: {self.written}, failed: {self.failed}, "
                f"fallbacks: {self.fallbacks}, mean quadrilateral Dice: {self.mean_dice:.4f}")


def mask_file_name(file_name: str, lesion_index: int) -> str:
    return f"{Path(file_name).stem}_lesion{lesion_index}_mask.png"


def lesion_indices(records: Sequence[LesionRecord]) -> List[int]:
    """1-based lesion number of each record within its image, in record order."""
    seen: Dict[str, int] = defaultdict(int)
    indices = []
    for record in records:
        seen[record.file_name] += 1
        indices.append(seen[record.file_name])
    return indices


def segment_record(image: np.ndarray, record: LesionRecord, settings: GrabCutSettings) -> Tuple[np.ndarray, Dict]:
    """
    Run GrabCut for one lesion.

    Returns:
        (boolean mask, sidecar metadata)
    """
    height, width = image.shape
    trimap = build_trimap(record.recist, record.bbox, (width, height))
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', AllForegroundCollapsed)
        result = grabcut(image, trimap, settings.iterations, settings.components,
                         settings.gamma, settings.seed, settings.variance_floor)
    box = mask_to_box(result.mask)
    sidecar = {
        'file_name': record.file_name,
        'bbox': list(record.bbox.as_tuple()),
        'mask_box': list(box.as_tuple()),
        'energy_trace': result.energy_trace,
        'dice_vs_quadrilateral': dice(result.mask, trimap.fg_hard),
        'fallback': result.fallback,
        'foreground_pixels': int(result.mask.sum()),
        'trimap': trimap.counts(),
        'iterations': settings.iterations,
        'components': settings.components,
        'gamma': settings.gamma,
        'seed': settings.seed,
    }
    return result.mask, sidecar


def _segment_task(task) -> MaskOutcome:
    position, lesion_index, record, images_dir, settings = task
    outcome = MaskOutcome(record_position=position, file_name=record.file_name, lesion_index=lesion_index)
    try:
        image = DeepLesionIngestion(images_dir).load_key_slice(record)
        outcome.mask, outcome.sidecar = segment_record(image, record, settings)
    except (LesionKitError, ValueError, OSError) as e:
        outcome.error = f"{type(e).__name__}: {e}"
    return outcome


class MaskGenerator:
    """Generates one mask PNG and JSON sidecar per lesion record."""

    def __init__(self, images_dir: Union[str, Path], output_dir: Union[str, Path],
                 settings: Optional[GrabCutSettings] = None, jobs: int = 1):
        self.images_dir = Path(images_dir)
        self.output_dir = Path(output_dir)
        self.settings = settings or GrabCutSettings()
        self.settings.validate_settings()
        self.jobs = max(int(jobs), 1)

    def missing_images(self, records: Iterable[LesionRecord]) -> List[str]:
        ingestion = DeepLesionIngestion(self.images_dir)
        return sorted({r.file_name for r in records if not ingestion.has_key_slice(r)})

    def _outcomes(self, records: Sequence[LesionRecord]) -> Iterable[MaskOutcome]:
        tasks = [(i, k, record, self.images_dir, self.settings)
                 for i, (record, k) in enumerate(zip(records, lesion_indices(records)))]
        if self.jobs == 1:
            return map(_segment_task, tasks)
        executor = ProcessPoolExecutor(max_workers=self.jobs)
        try:
            # map yields in submission order, so files are written in record order
            return list(executor.map(_segment_task, tasks))
        finally:
            executor.shutdown()

    def write_outcome(self, outcome: MaskOutcome, on_output: Optional[Callable[[Path], None]] = None) -> Path:
        name = mask_file_name(outcome.file_name, outcome.lesion_index)
        png_path = self.output_dir / name
        if on_output is not None:
            on_output(png_path)
            on_output(png_path.with_suffix('.json'))
        if not cv2.imwrite(str(png_path), outcome.mask.astype(np.uint8) * 255):
            raise OSError(f"failed to write {png_path}")
        sidecar = dict(outcome.sidecar, mask_file=name, lesion_index=outcome.lesion_index)
        png_path.with_suffix('.json').write_text(json.dumps(sidecar, indent=2, sort_keys=True) + '\n')
        return png_path

    def generate(self, records: Sequence[LesionRecord],
                 on_output: Optional[Callable[[Path], None]] = None) -> MaskGenerationSummary:
        """
        Segment every record and write its outputs.

        Per-record failures are logged and counted; the batch keeps going.

        Args:
            records: Lesion records, all with key slices under images_dir
            on_output: Called with each output path just before it is written

        Returns:
            MaskGenerationSummary
        """
        records = list(records)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Generating masks for {len(records)} lesions with {self.jobs} worker(s)")

        summary = MaskGenerationSummary()
        for outcome in self._outcomes(records):
            if outcome.error is not None:
                summary.failed += 1
                logger.error(f"Mask generation failed for {outcome.file_name} "
                             f"lesion {outcome.lesion_index}: {outcome.error}")
                continue
            summary.outputs.append(self.write_outcome(outcome, on_output))
            summary.written += 1
            summary.dice_values.append(outcome.sidecar['dice_vs_quadrilateral'])
            if outcome.sidecar['fallback']:
                summary.fallbacks += 1
                logger.warning(f"{outcome.file_name} lesion {outcome.lesion_index}: "
                               f"GrabCut fell back to the RECIST quadrilateral")

        logger.info(summary.summary_line())
        return summary
