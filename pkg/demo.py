"""
Demo script for lesionkit - runs every pipeline stage on a synthetic dataset
"""
import sys
import os
import logging
import tempfile
from pathlib import Path

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from scripts.make_synthetic_dataset import create_sample_data
from src.config import Config
from src.geometry.anchors import AnchorConfig
from src.ingestion.deeplesion_ingestion import DeepLesionIngestion, parse_annotations, split_records
from src.optimization.anchor_search import AnchorOptimizer, DeSettings, coverage_objective
from src.segmentation.mask_generation import MaskGenerator
from src.evaluation.detections import group_by_image, ground_truths_from_records, load_detections
from src.evaluation.froc import froc_curve, sensitivity_at_fp
from src.evaluation.reporting import format_sensitivity_table

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def demo_pipeline(workdir: Path):
    """Demonstrate anchor search, mask generation and FROC evaluation."""

    print("🩻 lesionkit Demo - CT lesion detection toolkit")
    print("=" * 50)

    try:
        print("Creating synthetic dataset...")
        create_sample_data(workdir, n_studies=12, seed=Config.DEFAULT_SEED)
        records = parse_annotations(workdir / 'DL_info.csv')
        print(f"✅ {len(records)} lesion records parsed, {len(records.rejected)} rejected")

        # Anchor search
        print("\n📐 Anchor search")
        print("-" * 30)
        boxes = [r.bbox for r in records]
        settings = DeSettings(population_size=20, max_generations=20)
        result = AnchorOptimizer(boxes, Config.ANCHOR_SIZES, settings).optimize()
        default = coverage_objective(AnchorConfig.retinanet_default(), boxes)
        print(f"Default anchors:   mean best IoU {default:.4f}")
        print(f"Optimised anchors: mean best IoU {result.objective:.4f}")
        print(f"  scales {', '.join(f'{s:.3f}' for s in result.config.scales)}")
        print(f"  ratios {', '.join(f'{r:.3f}' for r in result.config.ratios)}")

        # Mask generation
        print("\n🎭 Mask generation")
        print("-" * 30)
        generator = MaskGenerator(workdir / 'Images_png', workdir / 'masks')
        summary = generator.generate(records.records)
        print(summary.summary_line())

        # Detector inputs
        stack = DeepLesionIngestion(workdir / 'Images_png').load_context_stack(records.records[0], target=128)
        print(f"\n🧱 3-slice input for {records.records[0].file_name}: shape {stack.shape}")

        # FROC
        print("\n📊 FROC evaluation (all splits)")
        print("-" * 30)
        gts = group_by_image(ground_truths_from_records(records))
        detections = group_by_image(load_detections(workdir / 'detections.jsonl'))
        table = {}
        for name, calibrated in (('raw', False), ('calibrated', True)):
            curve = froc_curve(detections, gts, calibrated=calibrated)
            table[name] = sensitivity_at_fp(curve)
        print(format_sensitivity_table(table))

        test_count = len(split_records(records, 'test'))
        print(f"Test split holds {test_count} lesions; use `python -m src.cli evaluate` for split-wise reports.")
        print("\n🎉 Demo completed successfully!")

    except Exception as e:
        print(f"❌ Demo failed: {e}")
        logger.error(f"Demo error: {e}")


def main():
    """Main demo function."""
    print("lesionkit Demo - anchors, weak-label masks and FROC")
    print("=" * 60)

    try:
        Config.validate()
        print("✅ Configuration validated")
    except Exception as e:
        print(f"❌ Configuration error: {e}")
        print("Please check your .env file")
        return

    with tempfile.TemporaryDirectory(prefix='lesionkit-demo-') as workdir:
        demo_pipeline(Path(workdir))


if __name__ == "__main__":
    main()
