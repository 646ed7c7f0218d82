"""
Configuration settings for the lesionkit pipeline.
"""
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _float_list(value: str):
    return tuple(float(v) for v in value.split(',') if v.strip())


class Config:
    """Pipeline configuration."""

    # Output / logging
    OUTPUT_DIR = os.getenv('LESIONKIT_OUTPUT_DIR', './outputs')
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    DEFAULT_SEED = int(os.getenv('LESIONKIT_SEED', '0'))

    # CT intensity handling
    HU_OFFSET = int(os.getenv('HU_OFFSET', '32768'))
    HU_MIN = float(os.getenv('HU_MIN', '-1024'))
    HU_MAX = float(os.getenv('HU_MAX', '1050'))
    TARGET_SIZE = int(os.getenv('TARGET_SIZE', '512'))
    CONTEXT_SPACING_MM = float(os.getenv('CONTEXT_SPACING_MM', '2.0'))

    # Anchors (P2-P6)
    ANCHOR_SIZES = _float_list(os.getenv('ANCHOR_SIZES', '32,64,128,256,512'))
    ANCHOR_STRIDES = _float_list(os.getenv('ANCHOR_STRIDES', '4,8,16,32,64'))

    # Differential evolution
    DE_POPULATION = int(os.getenv('DE_POPULATION', '50'))
    DE_MUTATION = float(os.getenv('DE_MUTATION', '0.8'))
    DE_CROSSOVER = float(os.getenv('DE_CROSSOVER', '0.9'))
    DE_GENERATIONS = int(os.getenv('DE_GENERATIONS', '100'))

    # GrabCut
    GMM_COMPONENTS = int(os.getenv('GMM_COMPONENTS', '5'))
    GRABCUT_GAMMA = float(os.getenv('GRABCUT_GAMMA', '50'))
    GRABCUT_ITERATIONS = int(os.getenv('GRABCUT_ITERATIONS', '5'))
    VARIANCE_FLOOR = 0.01
    KMEANS_ITERATIONS = 10

    # Evaluation
    IOU_THRESHOLD = float(os.getenv('IOU_THRESHOLD', '0.5'))
    FP_TARGETS = _float_list(os.getenv('FP_TARGETS', '0.5,1,2,4,8,16'))
    SIZE_GROUP_FP = 4.0

    @classmethod
    def validate(cls):
        """Validate configuration consistency."""
        if cls.HU_MIN >= cls.HU_MAX:
            raise ValueError("HU_MIN must be below HU_MAX")
        if cls.TARGET_SIZE <= 0:
            raise ValueError("TARGET_SIZE must be positive")
        if cls.CONTEXT_SPACING_MM <= 0:
            raise ValueError("CONTEXT_SPACING_MM must be positive")
        if len(cls.ANCHOR_SIZES) != len(cls.ANCHOR_STRIDES):
            raise ValueError("ANCHOR_SIZES and ANCHOR_STRIDES must have the same length")
        return True
