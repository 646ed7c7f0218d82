"""
Command-line entry point.

    python -m src.cli optimize-anchors annotations.csv --split val --out anchors.cfg
    python -m src.cli generate-masks annotations.csv --images Images_png --out masks/
    python -m src.cli evaluate detections.jsonl annotations.csv --split test --out results/
    python -m src.cli prepare-inputs annotations.csv --images Images_png --out tensors/

Exit codes: 0 success, 2 bad or unresolvable input, 3 empty split or no ground truth.
"""
import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, Field

from . import __version__
from .config import Config
from .evaluation.detections import (
    Detection, group_by_image, ground_truths_from_records, load_detections, normalize_image_id,
)
from .evaluation.froc import froc_curve, sensitivity_at_fp, stratified_sensitivity, threshold_at_fp
from .evaluation.reporting import sensitivity_records, summarize, write_froc_csv, write_summary
from .exceptions import LesionKitError
from .geometry.anchors import AnchorConfig
from .geometry.boxes import Box
from .ingestion.ct_preprocessing import write_tensor
from .ingestion.deeplesion_ingestion import DeepLesionIngestion, parse_annotations, split_records
from .optimization.anchor_search import (
    AnchorOptimizer, DeSettings, coverage_fraction, coverage_objective, write_anchor_config, write_trace,
)
from .segmentation.grabcut import GrabCutSettings
from .segmentation.mask_generation import MaskGenerator
from .visualization.froc_plots import FROCVisualizer, save_froc_svg

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_EMPTY = 3


class CommandFailed(Exception):
    """Stops a command with a specific exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class RunManifest(BaseModel):
    """Provenance record written by every command, on success and on failure."""

    command: str
    inputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    parameters: Dict[str, Any] = Field(default_factory=dict)
    version: str = __version__
    started_at: str = ''
    finished_at: str = ''
    exit_code: Optional[int] = None
    outputs: List[str] = Field(default_factory=list)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


class Run:
    """Tracks outputs of one command so a failed run can mark them partial."""

    def __init__(self, command: str, output_dir: Path, args: argparse.Namespace, inputs: Sequence[str]):
        self.output_dir = Path(output_dir)
        self.outputs: List[Path] = []
        parameters = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                      if k not in ('handler', 'command')}
        self.manifest = RunManifest(command=command, inputs=[str(i) for i in inputs],
                                    seed=getattr(args, 'seed', None), parameters=parameters,
                                    started_at=_now())

    def add(self, path: Path) -> Path:
        self.outputs.append(Path(path))
        return path

    def finish(self, code: int) -> None:
        if code != EXIT_OK:
            for path in self.outputs:
                if path.exists():
                    path.rename(path.with_name(path.name + '.partial'))
        self.manifest.exit_code = code
        self.manifest.finished_at = _now()
        self.manifest.outputs = [str(p) if code == EXIT_OK else f"{p}.partial" for p in self.outputs]
        self.output_dir.mkdir(parents=True, exist_ok=True)
        manifest_path = self.output_dir / f"{self.manifest.command}.manifest.json"
        manifest_path.write_text(self.manifest.model_dump_json(indent=2) + '\n')


def _load_records(path: str):
    try:
        return parse_annotations(path)
    except (LesionKitError, ValueError, OSError, pd.errors.ParserError) as e:
        raise CommandFailed(EXIT_BAD_INPUT, f"cannot parse annotations {path}: {e}")


def _read_box_list(path: str) -> List[Box]:
    try:
        frame = pd.read_csv(path)
        return [Box.from_xyxy(row) for row in frame[['x1', 'y1', 'x2', 'y2']].itertuples(index=False)]
    except (KeyError, ValueError, OSError, pd.errors.ParserError) as e:
        raise CommandFailed(EXIT_BAD_INPUT, f"cannot read box list {path}: {e}")


def cmd_optimize_anchors(args: argparse.Namespace, run: Run) -> int:
    if args.box_list:
        boxes = _read_box_list(args.box_list)
    elif args.annotations:
        boxes = [r.bbox for r in split_records(_load_records(args.annotations), args.split)]
    else:
        raise CommandFailed(EXIT_BAD_INPUT, "either an annotation CSV or --box-list is required")
    if not boxes:
        raise CommandFailed(EXIT_EMPTY, f"split '{args.split}' has no lesion boxes")

    settings = DeSettings(population_size=args.population, mutation=args.mutation,
                          crossover=args.crossover, max_generations=args.generations,
                          seed=args.seed, objective_mode=args.objective, placement=args.placement)
    try:
        result = AnchorOptimizer(boxes, args.sizes, settings).optimize()
    except LesionKitError as e:
        raise CommandFailed(EXIT_BAD_INPUT, str(e))

    default = AnchorConfig.retinanet_default(args.sizes)
    config = result.config.with_scale_multiplier(args.scale_multiplier)
    run.add(write_anchor_config(config, args.out))
    extra = {
        'n_boxes': len(boxes),
        'split': args.split,
        'scale_multiplier': args.scale_multiplier,
        'default_objective': coverage_objective(default, boxes, args.objective, args.placement),
        'coverage_at_0.5': {
            'optimized': coverage_fraction(result.config, boxes, 0.5, args.placement),
            'default': coverage_fraction(default, boxes, 0.5, args.placement),
        },
    }
    run.add(write_trace(result, Path(args.out).with_suffix('.trace.json'), extra))
    print(f"objective {result.objective:.6f} (default {extra['default_objective']:.6f}); "
          f"scales {', '.join(f'{s:.4f}' for s in config.scales)}; "
          f"ratios {', '.join(f'{r:.4f}' for r in config.ratios)}")
    return EXIT_OK


def cmd_generate_masks(args: argparse.Namespace, run: Run) -> int:
    records = list(_load_records(args.annotations))
    if args.split:
        records = split_records(records, args.split)
    generator = MaskGenerator(args.images, args.out,
                              GrabCutSettings(iterations=args.iters, components=args.components,
                                              gamma=args.gamma, seed=args.seed),
                              jobs=args.jobs)
    missing = generator.missing_images(records)
    if missing:
        raise CommandFailed(EXIT_BAD_INPUT, f"{len(missing)} referenced image(s) missing, e.g. {missing[0]}")

    summary = generator.generate(records, on_output=run.add)
    print(summary.summary_line())
    return EXIT_OK


def _method_name(path: str, names: Optional[List[str]], index: int) -> str:
    if names and index < len(names):
        return names[index]
    return Path(path).stem


def cmd_evaluate(args: argparse.Namespace, run: Run) -> int:
    records = list(_load_records(args.annotations))
    known_images = {normalize_image_id(r.file_name) for r in records}
    split = split_records(records, args.split)
    split_images = {normalize_image_id(r.file_name) for r in split}
    gts_by_image = group_by_image(ground_truths_from_records(split))
    if not gts_by_image:
        raise CommandFailed(EXIT_EMPTY, f"split '{args.split}' has no ground-truth lesions")

    methods: Dict[str, Dict[str, List[Detection]]] = {}
    for i, path in enumerate(args.detections):
        try:
            detections = load_detections(path)
        except (ValueError, OSError) as e:
            raise CommandFailed(EXIT_BAD_INPUT, str(e))
        unknown = sorted({d.image_id for d in detections} - known_images)
        if unknown:
            raise CommandFailed(EXIT_BAD_INPUT, f"{path}: {len(unknown)} unknown image id(s), e.g. {unknown[0]}")
        outside = [d for d in detections if d.image_id not in split_images]
        if outside:
            logger.warning(f"{path}: ignoring {len(outside)} detections on images outside split '{args.split}'")
        methods[_method_name(path, args.names, i)] = group_by_image(
            d for d in detections if d.image_id in split_images)

    calibrated = not args.no_calibration
    n_images = len(split_images)
    curves, results, groups, thresholds = {}, {}, {}, {}
    for name, dets in methods.items():
        curves[name] = froc_curve(dets, gts_by_image, args.iou, args.protocol, calibrated, n_images)
        results[name] = sensitivity_at_fp(curves[name], args.fp)
        groups[name] = stratified_sensitivity(dets, gts_by_image, args.size_fp, args.iou, args.protocol,
                                              calibrated, args.size_axis == 'short', n_images)
        threshold = threshold_at_fp(curves[name], min(args.fp))
        # inf (no detections) is written as null
        thresholds[name] = threshold if threshold is not None and math.isfinite(threshold) else None

    out = Path(args.out)
    text = summarize(results, groups, curves, args.fp, args.size_fp)
    print(text, end='')
    run.add(write_froc_csv(curves, out / 'froc.csv'))
    run.add(save_froc_svg(curves, out / 'froc.svg', args.fp))
    run.add(write_summary(text, out / 'summary.txt'))
    sensitivities = {'sensitivity': sensitivity_records(results, args.fp),
                     'threshold_at_min_fp': thresholds}
    summary_json = out / 'summary.json'
    summary_json.write_text(json.dumps(sensitivities, indent=2, sort_keys=True, allow_nan=False) + '\n')
    run.add(summary_json)
    if args.html:
        visualizer = FROCVisualizer()
        figures = [visualizer.create_froc_figure(curves, args.fp),
                   visualizer.create_size_group_chart(groups, args.size_fp)]
        run.add(visualizer.save_html(figures, out / 'froc.html'))
    return EXIT_OK


def cmd_prepare_inputs(args: argparse.Namespace, run: Run) -> int:
    records = list(_load_records(args.annotations))
    if args.split:
        records = split_records(records, args.split)
    ingestion = DeepLesionIngestion(args.images)
    missing = sorted({r.file_name for r in records if not ingestion.has_key_slice(r)})
    if missing:
        raise CommandFailed(EXIT_BAD_INPUT, f"{len(missing)} referenced image(s) missing, e.g. {missing[0]}")

    seen = set()
    for record in records:
        if record.image_stem in seen:
            continue
        seen.add(record.image_stem)
        stack = ingestion.load_context_stack(record, args.target)
        bin_path = write_tensor(stack, Path(args.out) / record.image_stem,
                                {'file_name': record.file_name, 'slice_thickness_mm': record.spacing_mm[2]})
        run.add(bin_path)
        run.add(bin_path.with_suffix('.json'))
    print(f"tensors written: {len(seen)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='lesionkit', description=__doc__.split('\n')[1].strip() or None)
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)
    output_dir = Path(Config.OUTPUT_DIR)

    p = sub.add_parser('optimize-anchors', help='search anchor scales and ratios with differential evolution')
    p.add_argument('annotations', nargs='?', help='DeepLesion annotation CSV')
    p.add_argument('--box-list', help='CSV with x1,y1,x2,y2 columns instead of annotations')
    p.add_argument('--split', default='val', choices=['train', 'val', 'test'])
    p.add_argument('--sizes', type=_float_list, default=list(Config.ANCHOR_SIZES))
    p.add_argument('--seed', type=int, default=Config.DEFAULT_SEED)
    p.add_argument('--out', type=Path, default=output_dir / 'anchors.cfg')
    p.add_argument('--population', type=int, default=Config.DE_POPULATION)
    p.add_argument('--generations', type=int, default=Config.DE_GENERATIONS)
    p.add_argument('--mutation', type=float, default=Config.DE_MUTATION)
    p.add_argument('--crossover', type=float, default=Config.DE_CROSSOVER)
    p.add_argument('--objective', default='mean_iou', choices=['mean_iou', 'focal_weighted'])
    p.add_argument('--placement', default='center', choices=['center', 'stride'])
    p.add_argument('--scale-multiplier', type=float, default=1.0,
                   help='applied to the emitted scales, e.g. 2 for heads on P2-P6')
    p.set_defaults(handler=cmd_optimize_anchors)

    p = sub.add_parser('generate-masks', help='GrabCut lesion masks from RECIST annotations')
    p.add_argument('annotations')
    p.add_argument('--images', required=True, type=Path)
    p.add_argument('--out', type=Path, default=output_dir / 'masks')
    p.add_argument('--iters', type=int, default=Config.GRABCUT_ITERATIONS)
    p.add_argument('--gamma', type=float, default=Config.GRABCUT_GAMMA)
    p.add_argument('--components', type=int, default=Config.GMM_COMPONENTS)
    p.add_argument('--seed', type=int, default=Config.DEFAULT_SEED)
    p.add_argument('--split', choices=['train', 'val', 'test'])
    p.add_argument('--jobs', type=int, default=1)
    p.set_defaults(handler=cmd_generate_masks)

    p = sub.add_parser('evaluate', help='FROC evaluation of detection files')
    p.add_argument('detections', nargs='+', help='JSON-lines detection file(s), one per method')
    p.add_argument('annotations')
    p.add_argument('--split', default='test', choices=['train', 'val', 'test'])
    p.add_argument('--fp', type=_float_list, default=list(Config.FP_TARGETS))
    p.add_argument('--iou', type=float, default=Config.IOU_THRESHOLD)
    p.add_argument('--protocol', default='any', choices=['any', 'strict'])
    p.add_argument('--size-axis', default='long', choices=['long', 'short'])
    p.add_argument('--size-fp', type=float, default=Config.SIZE_GROUP_FP)
    p.add_argument('--no-calibration', action='store_true', help='rank by the raw score')
    p.add_argument('--names', type=lambda s: [n.strip() for n in s.split(',')], help='method names')
    p.add_argument('--html', action='store_true', help='also write an interactive froc.html')
    p.add_argument('--out', type=Path, default=output_dir / 'evaluation')
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser('prepare-inputs', help='dump normalised 3-slice detector inputs')
    p.add_argument('annotations')
    p.add_argument('--images', required=True, type=Path)
    p.add_argument('--out', type=Path, default=output_dir / 'tensors')
    p.add_argument('--split', choices=['train', 'val', 'test'])
    p.add_argument('--target', type=int, default=Config.TARGET_SIZE)
    p.set_defaults(handler=cmd_prepare_inputs)
    return parser


def _inputs(args: argparse.Namespace) -> List[str]:
    inputs = []
    for key in ('detections', 'annotations', 'box_list', 'images'):
        value = getattr(args, key, None)
        if value:
            inputs.extend(str(v) for v in (value if isinstance(value, list) else [value]))
    return inputs


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else Config.LOG_LEVEL,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )

    out = Path(args.out)
    output_dir = out.parent if args.command == 'optimize-anchors' else out
    run = Run(args.command, output_dir, args, _inputs(args))
    code = EXIT_BAD_INPUT
    try:
        Config.validate()
        code = args.handler(args, run)
    except CommandFailed as e:
        logger.error(str(e))
        code = e.code
    except (LesionKitError, ValueError, OverflowError) as e:
        logger.error(f"{args.command} failed: {e}")
        code = EXIT_BAD_INPUT
    except OSError as e:
        logger.error(f"{args.command} failed on file access: {e}")
        code = EXIT_BAD_INPUT
    finally:
        run.finish(code)
    return code


if __name__ == '__main__':
    sys.exit(main())
