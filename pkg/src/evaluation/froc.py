"""
FROC analysis with coherence-calibrated scores.

A detection is correct when its IoU with a ground-truth box is strictly
greater than the threshold. Under the default 'any' protocol every correct
detection counts as a true positive, including duplicates on a lesion that is
already hit; the 'strict' protocol matches greedily one-to-one and counts the
duplicates as false positives.
"""
import logging
import math
from dataclasses import dataclass, field
from itertools import groupby
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from ..config import Config
from ..exceptions import MixedImageIds, NoGroundTruth
from ..geometry.boxes import boxes_to_array, iou_matrix
from .detections import Detection, GroundTruthLesion

logger = logging.getLogger(__name__)

Protocol = Literal['any', 'strict']

SIZE_GROUPS: Tuple[Tuple[str, float, float], ...] = (
    ('<10 mm', 0.0, 10.0),
    ('10-30 mm', 10.0, 30.0),
    ('>30 mm', 30.0, math.inf),
)


def calibrate(p: float, coherence_iou: float) -> float:
    """
    Coherence-calibrated score p * (1 + IoU).

    The result lies in [0, 2] and is only used for ranking.
    """
    return p * (1.0 + coherence_iou)


def detection_score(detection: Detection, calibrated: bool = True) -> float:
    return calibrate(detection.score, detection.coherence_iou) if calibrated else detection.score


@dataclass
class ImageMatch:
    """Matching outcome for one image, detections in ranking order."""

    image_id: str
    detections: List[Detection]
    scores: np.ndarray
    hits: List[Tuple[int, ...]]
    gt_hit: np.ndarray

    @property
    def is_tp(self) -> np.ndarray:
        return np.array([bool(h) for h in self.hits], dtype=bool)

    @property
    def is_fp(self) -> np.ndarray:
        return ~self.is_tp


def _ranking_order(detections: Sequence[Detection], scores: Sequence[float]) -> List[int]:
    return sorted(range(len(detections)),
                  key=lambda i: (-scores[i], *detections[i].box.as_tuple()))


def match_image(detections: Sequence[Detection], gts: Sequence[GroundTruthLesion],
                iou_threshold: float = Config.IOU_THRESHOLD, protocol: Protocol = 'any',
                calibrated: bool = True) -> ImageMatch:
    """
    Match one image's detections against its ground truths.

    Args:
        detections: Detections of a single image
        gts: Ground-truth lesions of the same image
        iou_threshold: IoU must exceed this value for a match
        protocol: 'any' (duplicates are redundant, not FPs) or 'strict' (greedy one-to-one)
        calibrated: Rank by p * (1 + coherence IoU) instead of the raw score

    Returns:
        ImageMatch with each detection's hit ground-truth indices

    Raises:
        MixedImageIds: if the inputs span more than one image
    """
    ids = {d.image_id for d in detections} | {g.image_id for g in gts}
    if len(ids) > 1:
        raise MixedImageIds(f"match_image got several image ids: {sorted(ids)}")
    image_id = ids.pop() if ids else ''

    raw_scores = [detection_score(d, calibrated) for d in detections]
    order = _ranking_order(detections, raw_scores)
    ranked = [detections[i] for i in order]
    scores = np.array([raw_scores[i] for i in order], dtype=np.float64)

    overlaps = iou_matrix(boxes_to_array([d.box for d in ranked]), boxes_to_array([g.box for g in gts]))
    correct = overlaps > iou_threshold
    gt_hit = np.zeros(len(gts), dtype=bool)
    hits: List[Tuple[int, ...]] = []

    if protocol == 'any':
        for row in correct:
            matched = tuple(int(j) for j in np.flatnonzero(row))
            gt_hit[list(matched)] = True
            hits.append(matched)
    elif protocol == 'strict':
        for row, candidate in zip(overlaps, correct):
            free = candidate & ~gt_hit
            if free.any():
                # argmax picks the lowest index among tied IoUs
                j = int(np.argmax(np.where(free, row, -1.0)))
                gt_hit[j] = True
                hits.append((j,))
            else:
                hits.append(())
    else:
        raise ValueError(f"unknown matching protocol {protocol!r}")

    return ImageMatch(image_id=image_id, detections=ranked, scores=scores, hits=hits, gt_hit=gt_hit)


@dataclass(frozen=True)
class FrocPoint:
    fp_per_image: float
    sensitivity: float
    threshold: float


@dataclass
class FrocCurve:
    """Operating points sorted by FP rate; sensitivity never decreases along the curve."""

    points: List[FrocPoint] = field(default_factory=list)
    n_images: int = 0
    n_ground_truths: int = 0

    @property
    def fp_per_image(self) -> np.ndarray:
        return np.array([p.fp_per_image for p in self.points])

    @property
    def sensitivity(self) -> np.ndarray:
        return np.array([p.sensitivity for p in self.points])

    def as_pairs(self) -> List[Tuple[float, float]]:
        return [(p.fp_per_image, p.sensitivity) for p in self.points]


def match_all(detections_by_image: Mapping[str, Sequence[Detection]],
              gts_by_image: Mapping[str, Sequence[GroundTruthLesion]],
              iou_threshold: float = Config.IOU_THRESHOLD, protocol: Protocol = 'any',
              calibrated: bool = True) -> Dict[str, ImageMatch]:
    """Per-image matching over the union of image ids."""
    image_ids = sorted(set(detections_by_image) | set(gts_by_image))
    return {image_id: match_image(detections_by_image.get(image_id, []), gts_by_image.get(image_id, []),
                                  iou_threshold, protocol, calibrated)
            for image_id in image_ids}


def curve_from_matches(matches: Mapping[str, ImageMatch], counted: Set[Tuple[str, int]],
                       n_images: int) -> FrocCurve:
    """
    Sweep the score threshold over matched detections.

    Args:
        matches: Per-image matching results
        counted: (image_id, gt_index) pairs that count towards sensitivity
        n_images: Images the FP rate is averaged over

    Returns:
        FrocCurve with one point per distinct score, consecutive duplicates removed
    """
    if not counted:
        raise NoGroundTruth("FROC analysis needs at least one ground-truth lesion")
    if n_images <= 0:
        raise ValueError("n_images must be positive")

    entries = []
    for image_id, match in matches.items():
        for score, hits in zip(match.scores, match.hits):
            keys = [(image_id, j) for j in hits]
            entries.append((float(score), not hits, [k for k in keys if k in counted]))
    entries.sort(key=lambda e: -e[0])

    if not entries:
        return FrocCurve(points=[FrocPoint(0.0, 0.0, math.inf)], n_images=n_images,
                         n_ground_truths=len(counted))

    hit: Set[Tuple[str, int]] = set()
    false_positives = 0
    points: List[FrocPoint] = []
    for score, group in groupby(entries, key=lambda e: e[0]):
        for _, is_fp, keys in group:
            false_positives += int(is_fp)
            hit.update(keys)
        point = FrocPoint(false_positives / n_images, len(hit) / len(counted), score)
        if points and (points[-1].fp_per_image, points[-1].sensitivity) == (point.fp_per_image, point.sensitivity):
            continue
        points.append(point)
    return FrocCurve(points=points, n_images=n_images, n_ground_truths=len(counted))


def froc_curve(detections_by_image: Mapping[str, Sequence[Detection]],
               gts_by_image: Mapping[str, Sequence[GroundTruthLesion]],
               iou_threshold: float = Config.IOU_THRESHOLD, protocol: Protocol = 'any',
               calibrated: bool = True, n_images: Optional[int] = None) -> FrocCurve:
    """
    FROC curve over a set of images.

    Args:
        detections_by_image: Detections keyed by image id
        gts_by_image: Ground truths keyed by image id; images without lesions still add FPs
        iou_threshold: Matching threshold (strict '>')
        protocol: Duplicate handling, 'any' or 'strict'
        calibrated: Rank by coherence-calibrated scores
        n_images: FP-rate denominator, defaults to the number of distinct image ids

    Returns:
        FrocCurve

    Raises:
        NoGroundTruth: if there are no ground-truth lesions
    """
    matches = match_all(detections_by_image, gts_by_image, iou_threshold, protocol, calibrated)
    counted = {(image_id, j) for image_id, gts in gts_by_image.items() for j in range(len(gts))}
    return curve_from_matches(matches, counted, n_images or len(matches))


def sensitivity_at_fp(curve: FrocCurve, targets: Sequence[float] = Config.FP_TARGETS) -> List[float]:
    """Best sensitivity among operating points with at most t FPs per image, for each target t."""
    results = []
    for target in targets:
        feasible = [p.sensitivity for p in curve.points if p.fp_per_image <= target]
        results.append(max(feasible) if feasible else 0.0)
    return results


def threshold_at_fp(curve: FrocCurve, target: float) -> Optional[float]:
    """
    Score threshold that operates the detector at no more than `target` FPs per image.

    Returns the lowest threshold reaching the best feasible sensitivity, or None
    when no operating point qualifies.
    """
    feasible = [p for p in curve.points if p.fp_per_image <= target]
    if not feasible:
        return None
    best = max(p.sensitivity for p in feasible)
    return min(p.threshold for p in feasible if p.sensitivity == best)


def size_group(diameter_mm: float) -> str:
    for label, low, high in SIZE_GROUPS:
        if low <= diameter_mm < high:
            return label
    raise ValueError(f"diameter {diameter_mm} outside every size group")


def stratify_by_diameter(gts: Sequence[GroundTruthLesion], short: bool = False) -> Dict[str, List[GroundTruthLesion]]:
    """Partition lesions into <10 mm, 10-30 mm and >30 mm groups by RECIST diameter."""
    groups: Dict[str, List[GroundTruthLesion]] = {label: [] for label, _, _ in SIZE_GROUPS}
    for gt in gts:
        groups[size_group(gt.diameter(short))].append(gt)
    return groups


@dataclass(frozen=True)
class GroupSensitivity:
    count: int
    sensitivity: float


def stratified_sensitivity(detections_by_image: Mapping[str, Sequence[Detection]],
                           gts_by_image: Mapping[str, Sequence[GroundTruthLesion]],
                           fp_rate: float = Config.SIZE_GROUP_FP,
                           iou_threshold: float = Config.IOU_THRESHOLD, protocol: Protocol = 'any',
                           calibrated: bool = True, short: bool = False,
                           n_images: Optional[int] = None) -> Dict[str, GroupSensitivity]:
    """
    Sensitivity per lesion size group at a fixed FP rate.

    Detections are matched against all lesions first; each group's curve then
    counts only its own lesions as hits while keeping every false positive.
    Empty groups report NaN sensitivity.
    """
    matches = match_all(detections_by_image, gts_by_image, iou_threshold, protocol, calibrated)
    denominator = n_images or len(matches)
    labels = {label: set() for label, _, _ in SIZE_GROUPS}
    for image_id, gts in gts_by_image.items():
        for j, gt in enumerate(gts):
            labels[size_group(gt.diameter(short))].add((image_id, j))

    results = {}
    for label, counted in labels.items():
        if not counted:
            results[label] = GroupSensitivity(0, math.nan)
            continue
        curve = curve_from_matches(matches, counted, denominator)
        results[label] = GroupSensitivity(len(counted), sensitivity_at_fp(curve, [fp_rate])[0])
    return results
