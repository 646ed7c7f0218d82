"""
Detections and ground-truth lesions for evaluation.
"""
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from ..geometry.boxes import Box, iou

logger = logging.getLogger(__name__)


def normalize_image_id(image_id: str) -> str:
    """Image ids are compared without directory or extension."""
    return Path(str(image_id)).stem


class Detection(BaseModel):
    """Scored box predicted for one image, optionally with the box around its predicted mask."""

    model_config = ConfigDict(frozen=True)

    image_id: str
    box: Box
    score: float
    mask_box: Optional[Box] = None

    @field_validator('score')
    @classmethod
    def _check_score(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {value}")
        return value

    @field_validator('image_id')
    @classmethod
    def _normalize_id(cls, value: str) -> str:
        return normalize_image_id(value)

    @property
    def coherence_iou(self) -> float:
        """IoU between the regressed box and the mask box; 0 without a mask."""
        return iou(self.box, self.mask_box) if self.mask_box is not None else 0.0


class GroundTruthLesion(BaseModel):
    """Annotated lesion box with its RECIST diameters in mm."""

    model_config = ConfigDict(frozen=True)

    image_id: str
    box: Box
    long_diameter_mm: float
    short_diameter_mm: Optional[float] = None

    @field_validator('long_diameter_mm')
    @classmethod
    def _check_diameter(cls, value: float) -> float:
        if value <= 0:
            raise ValueError(f"lesion diameter must be positive, got {value}")
        return value

    @field_validator('image_id')
    @classmethod
    def _normalize_id(cls, value: str) -> str:
        return normalize_image_id(value)

    def diameter(self, short: bool = False) -> float:
        if short and self.short_diameter_mm is not None:
            return self.short_diameter_mm
        return self.long_diameter_mm


def detection_from_dict(payload: Dict) -> Detection:
    """Build a Detection from one JSON-lines object (x1, y1, x2, y2 at top level)."""
    mask_box = payload.get('mask_box')
    return Detection(
        image_id=payload['image_id'],
        box=Box.from_xyxy([payload['x1'], payload['y1'], payload['x2'], payload['y2']]),
        score=payload['score'],
        mask_box=Box.from_xyxy(mask_box) if mask_box else None,
    )


def load_detections(path: Union[str, Path]) -> List[Detection]:
    """
    Read detections from a JSON-lines file.

    Raises:
        ValueError: naming the offending line when a line cannot be parsed
    """
    detections = []
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                detections.append(detection_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
                raise ValueError(f"{path}:{line_number}: invalid detection ({e})") from e
    logger.info(f"Loaded {len(detections)} detections from {path}")
    return detections


def write_detections(detections: Iterable[Detection], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        for d in detections:
            payload = {'image_id': d.image_id, 'x1': d.box.x1, 'y1': d.box.y1,
                       'x2': d.box.x2, 'y2': d.box.y2, 'score': d.score}
            if d.mask_box is not None:
                payload['mask_box'] = list(d.mask_box.as_tuple())
            f.write(json.dumps(payload, sort_keys=True) + '\n')
    return path


def ground_truths_from_records(records) -> List[GroundTruthLesion]:
    """Ground-truth lesions from annotation records, keyed by image stem."""
    return [GroundTruthLesion(image_id=r.file_name, box=r.bbox,
                              long_diameter_mm=r.long_diameter_mm,
                              short_diameter_mm=r.short_diameter_mm)
            for r in records]


def group_by_image(items: Iterable) -> Dict[str, list]:
    grouped: Dict[str, list] = defaultdict(list)
    for item in items:
        grouped[item.image_id].append(item)
    return dict(grouped)
