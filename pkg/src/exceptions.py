"""
Error types raised across lesionkit.
"""


class LesionKitError(Exception):
    """Base class for all lesionkit errors."""


# geometry
class DegenerateQuadrilateral(LesionKitError, ValueError):
    """Three RECIST endpoints are collinear, so no simple quadrilateral exists."""


# anchor search
class BoundsViolation(LesionKitError, ValueError):
    """An anchor genome lies outside its box constraints."""


class EmptyCorpus(LesionKitError, ValueError):
    """No ground-truth boxes to optimise anchors against."""


class InvalidSettings(LesionKitError, ValueError):
    """Optimizer or segmentation parameters are out of range."""


# mask generation
class EndpointOutsideBox(LesionKitError, ValueError):
    """A RECIST endpoint falls outside the lesion bounding box."""


class InvalidTrimap(LesionKitError, ValueError):
    """Trimap lacks hard foreground or hard background pixels."""


class TooFewSamples(LesionKitError, ValueError):
    """Fewer intensity samples than mixture components."""


class EmptyMask(LesionKitError, ValueError):
    """Mask has no foreground pixel."""


class AllForegroundCollapsed(UserWarning):
    """GrabCut assigned every unknown pixel to background."""


# evaluation
class MixedImageIds(LesionKitError, ValueError):
    """Detections or ground truths passed to per-image matching span several images."""


class NoGroundTruth(LesionKitError, ValueError):
    """FROC analysis requested with zero ground-truth lesions."""


# ingestion
class MalformedHeader(LesionKitError, ValueError):
    """Annotation CSV is missing required columns."""


class RecordRejected(LesionKitError, ValueError):
    """A single annotation row violates a record invariant."""

    def __init__(self, reason: str, row_index: int = -1, file_name: str = ''):
        super().__init__(reason)
        self.reason = reason
        self.row_index = row_index
        self.file_name = file_name


class KeySliceMissing(LesionKitError, ValueError):
    """The key slice of a lesion is not available."""


class ImageNotFound(LesionKitError, FileNotFoundError):
    """A slice image referenced by an annotation does not exist."""
