"""
DeepLesion annotation ingestion.

Reads the DL_info-style CSV into validated lesion records and resolves slice
images in the <images>/<study>/<NNN>.png layout.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError

from ..config import Config
from ..exceptions import ImageNotFound, MalformedHeader, RecordRejected
from ..geometry.boxes import Box
from ..geometry.recist import RecistDiameters
from .ct_preprocessing import SliceStack, assemble_context, context_offset, load_slice, preprocess_slice

logger = logging.getLogger(__name__)

Split = Literal['train', 'val', 'test']

REQUIRED_COLUMNS = (
    'File_name', 'Bounding_boxes', 'Measurement_coordinates', 'Spacing_mm_px_',
    'Image_size', 'Train_Val_Test', 'Coarse_lesion_type',
)
SPLIT_CODES: Dict[str, Split] = {'1': 'train', '2': 'val', '3': 'test'}


class LesionRecord(BaseModel):
    """One annotated lesion on its key slice."""

    model_config = ConfigDict(frozen=True)

    file_name: str
    bbox: Box
    recist: RecistDiameters
    spacing_mm: Tuple[float, float, float]
    image_size: Tuple[int, int]
    split: Split
    lesion_type: Optional[int] = None
    key_slice_index: Optional[int] = None
    slice_range: Optional[Tuple[int, int]] = None
    row_index: int = -1

    @property
    def image_stem(self) -> str:
        return Path(self.file_name).stem

    @property
    def study(self) -> str:
        """Patient/study/series prefix, e.g. 000001_01_01."""
        return self.image_stem.rsplit('_', 1)[0]

    @property
    def slice_number(self) -> int:
        if self.key_slice_index is not None:
            return self.key_slice_index
        return int(self.image_stem.rsplit('_', 1)[1])

    @property
    def long_diameter_mm(self) -> float:
        return self.recist.length_mm(self.spacing_mm[:2])

    @property
    def short_diameter_mm(self) -> float:
        return self.recist.length_mm(self.spacing_mm[:2], short=True)


@dataclass
class RejectedRow:
    row_index: int
    file_name: str
    reason: str


@dataclass
class ParseResult:
    """Accepted records plus the reject report; together they cover every row."""

    records: List[LesionRecord] = field(default_factory=list)
    rejected: List[RejectedRow] = field(default_factory=list)

    def __iter__(self) -> Iterator[LesionRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def row_count(self) -> int:
        return len(self.records) + len(self.rejected)


def _floats(cell, column: str, expected: Optional[int] = None) -> List[float]:
    try:
        values = [float(v) for v in str(cell).replace(';', ',').split(',') if v.strip()]
    except ValueError:
        raise RecordRejected(f"malformed {column}")
    if expected is not None and len(values) != expected:
        raise RecordRejected(f"malformed {column}: expected {expected} values, got {len(values)}")
    if not all(math.isfinite(v) for v in values):
        raise RecordRejected(f"non-finite {column}")
    return values


def _optional_cell(row: pd.Series, column: str) -> Optional[str]:
    value = row.get(column)
    if value is None or pd.isna(value) or not str(value).strip():
        return None
    return str(value).strip()


def record_from_row(row: pd.Series, row_index: int = -1) -> LesionRecord:
    """
    Convert one CSV row into a LesionRecord.

    Raises:
        RecordRejected: with the reason the row violates a record invariant
    """
    file_name = str(row['File_name']).strip()
    bbox_values = _floats(row['Bounding_boxes'], 'Bounding_boxes', 4)
    recist_values = _floats(row['Measurement_coordinates'], 'Measurement_coordinates', 8)
    spacing = _floats(row['Spacing_mm_px_'], 'Spacing_mm_px_', 3)
    size = _floats(row['Image_size'], 'Image_size', 2)

    split = SPLIT_CODES.get(str(row['Train_Val_Test']).strip())
    if split is None:
        raise RecordRejected(f"unknown split code {row['Train_Val_Test']!r}")
    if any(s <= 0 for s in spacing):
        raise RecordRejected("non-positive spacing")
    if any(s <= 0 or s != int(s) for s in size):
        raise RecordRejected("invalid Image_size")

    width, height = int(size[0]), int(size[1])
    x1, y1, x2, y2 = bbox_values
    if not (x1 < x2 and y1 < y2):
        raise RecordRejected("degenerate bbox")
    if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
        raise RecordRejected("bbox out of bounds")
    bbox = Box(x1=x1, y1=y1, x2=x2, y2=y2)

    try:
        recist = RecistDiameters.from_coordinates(recist_values)
    except ValidationError:
        raise RecordRejected("duplicate RECIST endpoints")
    if not all(bbox.contains_point(x, y) for x, y in recist.endpoints):
        raise RecordRejected("RECIST endpoint outside bbox")

    lesion_type = None
    type_cell = _optional_cell(row, 'Coarse_lesion_type')
    if type_cell is not None:
        try:
            code = int(float(type_cell))
        except (ValueError, OverflowError):
            raise RecordRejected("malformed Coarse_lesion_type")
        lesion_type = None if code == -1 else code

    key_slice = _optional_cell(row, 'Key_slice_index')
    slice_range = _optional_cell(row, 'Slice_range')
    try:
        return LesionRecord(
            file_name=file_name,
            bbox=bbox,
            recist=recist,
            spacing_mm=tuple(spacing),
            image_size=(width, height),
            split=split,
            lesion_type=lesion_type,
            key_slice_index=int(float(key_slice)) if key_slice else None,
            slice_range=tuple(int(v) for v in _floats(slice_range, 'Slice_range', 2)) if slice_range else None,
            row_index=row_index,
        )
    except (ValidationError, ValueError, OverflowError) as e:
        raise RecordRejected(f"invalid record: {e}")


def parse_annotations(source: Union[str, Path, IO]) -> ParseResult:
    """
    Parse a DeepLesion annotation CSV.

    Args:
        source: Path or open text stream

    Returns:
        ParseResult with one record per valid row and one reject per invalid row

    Raises:
        MalformedHeader: if a required column is missing
    """
    frame = pd.read_csv(source, dtype=str, skipinitialspace=True, keep_default_na=False)
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise MalformedHeader(f"annotation CSV is missing columns: {', '.join(missing)}")

    result = ParseResult()
    for row_index, row in frame.iterrows():
        try:
            result.records.append(record_from_row(row, int(row_index)))
        except RecordRejected as e:
            file_name = str(row.get('File_name', ''))
            result.rejected.append(RejectedRow(int(row_index), file_name, e.reason))
            logger.warning(f"Rejected annotation row {row_index} ({file_name}): {e.reason}")

    logger.info(f"Parsed {len(result.records)} lesion records, rejected {len(result.rejected)}")
    return result


def split_records(records, split: Split) -> List[LesionRecord]:
    return [r for r in records if r.split == split]


def records_to_frame(records) -> pd.DataFrame:
    """Tabular summary of records, one row per lesion."""
    rows = []
    for r in records:
        rows.append({
            'file_name': r.file_name,
            'split': r.split,
            'x1': r.bbox.x1, 'y1': r.bbox.y1, 'x2': r.bbox.x2, 'y2': r.bbox.y2,
            'width': r.bbox.width,
            'height': r.bbox.height,
            'long_diameter_mm': r.long_diameter_mm,
            'short_diameter_mm': r.short_diameter_mm,
            'lesion_type': r.lesion_type,
        })
    return pd.DataFrame(rows, columns=['file_name', 'split', 'x1', 'y1', 'x2', 'y2', 'width', 'height',
                                       'long_diameter_mm', 'short_diameter_mm', 'lesion_type'])


class DeepLesionIngestion:
    """Resolves and loads slice images for annotation records."""

    def __init__(self, images_dir: Union[str, Path], hu_offset: int = Config.HU_OFFSET):
        self.images_dir = Path(images_dir)
        self.hu_offset = hu_offset

    def slice_path(self, record: LesionRecord, slice_number: Optional[int] = None) -> Path:
        """
        Path of a slice of the record's series.

        The DeepLesion layout <study>/<NNN>.png is preferred; for the key slice a
        flat <images>/<File_name> is accepted as well.
        """
        number = record.slice_number if slice_number is None else slice_number
        nested = self.images_dir / record.study / f"{number:03d}.png"
        if number == record.slice_number and not nested.exists():
            flat = self.images_dir / record.file_name
            if flat.exists():
                return flat
        return nested

    def has_key_slice(self, record: LesionRecord) -> bool:
        return self.slice_path(record).exists()

    def load_key_slice(self, record: LesionRecord) -> np.ndarray:
        """
        HU grid of the annotated slice.

        Raises:
            ImageNotFound: if the slice image does not exist
        """
        return load_slice(self.slice_path(record), self.hu_offset)

    def load_context_stack(self, record: LesionRecord, target: int = Config.TARGET_SIZE) -> SliceStack:
        """Preprocessed three-slice detector input around the key slice."""
        key = record.slice_number
        thickness = record.spacing_mm[2]
        slices = {key: preprocess_slice(self.load_key_slice(record), target)}
        step = context_offset(thickness)
        neighbours = (key - step, key + step) if step else ()
        for neighbour in neighbours:
            try:
                slices[neighbour] = preprocess_slice(load_slice(self.slice_path(record, neighbour),
                                                                self.hu_offset), target)
            except ImageNotFound:
                logger.debug(f"{record.study}: slice {neighbour} not on disk")
        return assemble_context(slices, key, thickness)
