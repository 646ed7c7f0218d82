import argparse
import json

import numpy as np
import pandas as pd
import pytest

from src.cli import EXIT_BAD_INPUT, EXIT_EMPTY, EXIT_OK, Run, main
from src.evaluation.detections import Detection, write_detections
from src.geometry.boxes import Box
from src.ingestion.ct_preprocessing import read_tensor
from src.segmentation import mask_generation

from .conftest import PHANTOM_SIZE, annotation_row, make_disk_phantom, write_study_slice

PHANTOM_BOX = (30, 30, 98, 98)
PHANTOM_RECIST = (34, 64, 94, 64, 64, 34, 64, 94)
COLLINEAR_RECIST = (34, 64, 94, 64, 44, 64, 84, 64)


def manifest(directory, command):
    return json.loads((directory / f"{command}.manifest.json").read_text())


@pytest.fixture
def box_list(tmp_path):
    rng = np.random.default_rng(0)
    xy = rng.uniform(0, 400, size=(20, 2))
    frame = pd.DataFrame({'x1': xy[:, 0], 'y1': xy[:, 1], 'x2': xy[:, 0] + 32, 'y2': xy[:, 1] + 32})
    path = tmp_path / 'boxes.csv'
    frame.to_csv(path, index=False)
    return path


def optimize(box_list, out):
    return main(['optimize-anchors', '--box-list', str(box_list), '--sizes', '32', '--population', '12',
                 '--generations', '30', '--seed', '1', '--out', str(out)])


def test_optimize_anchors_on_uniform_boxes(tmp_path, box_list):
    out = tmp_path / 'run1' / 'anchors.cfg'
    assert optimize(box_list, out) == EXIT_OK
    trace = json.loads(out.with_suffix('.trace.json').read_text())
    assert trace['best_objective'] > 0.95
    assert trace['n_boxes'] == 20
    assert 'scales = ' in out.read_text()
    assert manifest(out.parent, 'optimize-anchors')['exit_code'] == 0


def test_optimize_anchors_is_reproducible(tmp_path, box_list):
    first, second = tmp_path / 'a' / 'anchors.cfg', tmp_path / 'b' / 'anchors.cfg'
    assert optimize(box_list, first) == EXIT_OK
    assert optimize(box_list, second) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    assert first.with_suffix('.trace.json').read_bytes() == second.with_suffix('.trace.json').read_bytes()


def test_optimize_anchors_empty_split(tmp_path, annotations_writer):
    csv = annotations_writer([annotation_row('000001_01_01_012.png', PHANTOM_BOX, PHANTOM_RECIST, split=3)])
    out = tmp_path / 'anchors' / 'anchors.cfg'
    assert main(['optimize-anchors', str(csv), '--split', 'val', '--out', str(out)]) == EXIT_EMPTY
    assert not out.exists()
    assert manifest(out.parent, 'optimize-anchors')['exit_code'] == EXIT_EMPTY


@pytest.fixture
def phantom_dataset(tmp_path, annotations_writer):
    images = tmp_path / 'Images_png'
    rows = []
    for seed, name in enumerate(['000001_01_01_012.png', '000002_01_01_020.png']):
        image, _, _, _ = make_disk_phantom(seed=seed)
        write_study_slice(images, name, np.rint(image).astype(int))
        rows.append(annotation_row(name, PHANTOM_BOX, PHANTOM_RECIST, size=(PHANTOM_SIZE, PHANTOM_SIZE)))
    rows.append(annotation_row('000002_01_01_020.png', PHANTOM_BOX, COLLINEAR_RECIST,
                               size=(PHANTOM_SIZE, PHANTOM_SIZE)))
    return images, annotations_writer(rows)


def test_generate_masks(tmp_path, phantom_dataset, capsys):
    images, csv = phantom_dataset
    out = tmp_path / 'masks'
    assert main(['generate-masks', str(csv), '--images', str(images), '--out', str(out)]) == EXIT_OK
    assert 'masks written: 2, failed: 1' in capsys.readouterr().out
    assert sorted(p.name for p in out.glob('*.png')) == [
        '000001_01_01_012_lesion1_mask.png', '000002_01_01_020_lesion1_mask.png']
    sidecar = json.loads((out / '000001_01_01_012_lesion1_mask.json').read_text())
    assert sidecar['lesion_index'] == 1
    assert not sidecar['fallback']
    assert all(b <= a for a, b in zip(sidecar['energy_trace'], sidecar['energy_trace'][1:]))
    assert len(manifest(out, 'generate-masks')['outputs']) == 4


def test_generate_masks_is_deterministic(tmp_path, phantom_dataset):
    images, csv = phantom_dataset
    for name in ('a', 'b'):
        assert main(['generate-masks', str(csv), '--images', str(images), '--out', str(tmp_path / name)]) == EXIT_OK
    mask = '000002_01_01_020_lesion1_mask.png'
    assert (tmp_path / 'a' / mask).read_bytes() == (tmp_path / 'b' / mask).read_bytes()


def test_generate_masks_missing_image(tmp_path, annotations_writer):
    csv = annotations_writer([annotation_row('000009_01_01_001.png', PHANTOM_BOX, PHANTOM_RECIST)])
    out = tmp_path / 'masks'
    code = main(['generate-masks', str(csv), '--images', str(tmp_path / 'nowhere'), '--out', str(out)])
    assert code == EXIT_BAD_INPUT
    assert not list(out.glob('*.png'))
    assert manifest(out, 'generate-masks')['exit_code'] == EXIT_BAD_INPUT


GT_BOXES = {
    '000001_01_01_012.png': (100, 100, 140, 130),
    '000002_01_01_020.png': (200, 220, 260, 270),
    '000003_01_01_033.png': (50, 60, 70, 90),
}


def box_recist(b):
    x1, y1, x2, y2 = b
    cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
    return (x1 + 2, cy, x2 - 2, cy, cx, y1 + 2, cx, y2 - 2)


@pytest.fixture
def evaluation_csv(annotations_writer):
    rows = [annotation_row(name, b, box_recist(b), split=3) for name, b in GT_BOXES.items()]
    rows.append(annotation_row('000004_01_01_004.png', (10, 10, 30, 30), box_recist((10, 10, 30, 30)), split=1))
    return annotations_writer(rows)


def test_evaluate_perfect_detector(tmp_path, evaluation_csv, capsys):
    detections = [Detection(image_id=name, box=Box.from_xyxy(b), score=0.9) for name, b in GT_BOXES.items()]
    dets = write_detections(detections, tmp_path / 'perfect.jsonl')
    out = tmp_path / 'eval'
    assert main(['evaluate', str(dets), str(evaluation_csv), '--out', str(out), '--html']) == EXIT_OK
    printed = capsys.readouterr().out
    assert printed.splitlines()[2].split() == ['perfect'] + ['100.00'] * 6
    summary = json.loads((out / 'summary.json').read_text())
    assert set(summary['sensitivity']['perfect'].values()) == {1.0}
    for name in ('froc.csv', 'froc.svg', 'summary.txt', 'froc.html'):
        assert (out / name).exists()
    assert (out / 'summary.txt').read_text() == printed


def test_evaluate_two_methods_and_outside_split(tmp_path, evaluation_csv, capsys):
    perfect = [Detection(image_id=name, box=Box.from_xyxy(b), score=0.9) for name, b in GT_BOXES.items()]
    perfect.append(Detection(image_id='000004_01_01_004', box=Box(x1=10, y1=10, x2=30, y2=30), score=0.95))
    misses = [Detection(image_id=name, box=Box(x1=400, y1=400, x2=420, y2=420), score=0.5) for name in GT_BOXES]
    a = write_detections(perfect, tmp_path / 'a.jsonl')
    b = write_detections(misses, tmp_path / 'b.jsonl')
    out = tmp_path / 'eval'
    code = main(['evaluate', str(a), str(b), str(evaluation_csv), '--names', 'good,bad', '--out', str(out)])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[2].split()[0] == 'good' and lines[3].split() == ['bad'] + ['0.00'] * 6
    frame = pd.read_csv(out / 'froc.csv')
    assert sorted(frame['method'].unique()) == ['bad', 'good']


def test_evaluate_unknown_image(tmp_path, evaluation_csv):
    dets = write_detections([Detection(image_id='999999_01_01_001', box=Box(x1=0, y1=0, x2=5, y2=5), score=0.5)],
                            tmp_path / 'd.jsonl')
    out = tmp_path / 'eval'
    assert main(['evaluate', str(dets), str(evaluation_csv), '--out', str(out)]) == EXIT_BAD_INPUT
    assert manifest(out, 'evaluate')['exit_code'] == EXIT_BAD_INPUT


def test_evaluate_split_without_lesions(tmp_path, evaluation_csv):
    dets = write_detections([], tmp_path / 'empty.jsonl')
    out = tmp_path / 'eval'
    assert main(['evaluate', str(dets), str(evaluation_csv), '--split', 'val', '--out', str(out)]) == EXIT_EMPTY


def test_prepare_inputs(tmp_path, phantom_dataset):
    images, csv = phantom_dataset
    out = tmp_path / 'tensors'
    assert main(['prepare-inputs', str(csv), '--images', str(images), '--out', str(out), '--target', '64']) == EXIT_OK
    tensor = read_tensor(out / '000002_01_01_020')
    assert tensor.shape == (3, 64, 64)
    np.testing.assert_array_equal(tensor[0], tensor[1])
    assert len(list(out.glob('*.bin'))) == 2


def test_failed_run_marks_outputs_partial(tmp_path):
    produced = tmp_path / 'froc.csv'
    produced.write_text('x\n')
    args = argparse.Namespace(command='evaluate', seed=None, out=tmp_path)
    run = Run('evaluate', tmp_path, args, ['dets.jsonl'])
    run.add(produced)
    run.finish(EXIT_BAD_INPUT)
    assert not produced.exists()
    assert (tmp_path / 'froc.csv.partial').exists()
    record = manifest(tmp_path, 'evaluate')
    assert record['outputs'] == [f"{produced}.partial"]
    assert record['parameters']['out'] == str(tmp_path)


def test_bad_arguments_exit_code():
    assert main(['evaluate']) == 2


def test_write_failure_marks_written_masks_partial(tmp_path, phantom_dataset, monkeypatch):
    images, csv = phantom_dataset
    out = tmp_path / 'masks'
    real_imwrite = mask_generation.cv2.imwrite
    calls = []

    def imwrite_once(path, image):
        calls.append(path)
        if len(calls) > 1:
            raise OSError(f"no space left for {path}")
        return real_imwrite(path, image)

    monkeypatch.setattr(mask_generation.cv2, 'imwrite', imwrite_once)
    code = main(['generate-masks', str(csv), '--images', str(images), '--out', str(out)])
    assert code == EXIT_BAD_INPUT
    assert not list(out.glob('*.png')) and not list(out.glob('*.json'))
    assert (out / '000001_01_01_012_lesion1_mask.png.partial').exists()
    assert (out / '000001_01_01_012_lesion1_mask.json.partial').exists()
    record = manifest(out, 'generate-masks')
    assert record['exit_code'] == EXIT_BAD_INPUT
    assert all(p.endswith('.partial') for p in record['outputs'])


TWO_IMAGES = ['000001_01_01_012.png', '000002_01_01_020.png']


@pytest.fixture
def two_image_csv(annotations_writer):
    rows = [annotation_row(name, GT_BOXES[name], box_recist(GT_BOXES[name]), split=3) for name in TWO_IMAGES]
    return annotations_writer(rows)


def two_image_detections(path):
    first, second = (GT_BOXES[name] for name in TWO_IMAGES)
    detections = [
        Detection(image_id='000001_01_01_012', box=Box.from_xyxy(first), score=0.9),
        Detection(image_id='000002_01_01_020', box=Box(x1=400, y1=400, x2=440, y2=440), score=0.8),
        Detection(image_id='000002_01_01_020', box=Box.from_xyxy(second), score=0.7),
    ]
    return write_detections(detections, path)


def test_evaluate_two_image_table(tmp_path, two_image_csv, capsys):
    dets = two_image_detections(tmp_path / 'dets.jsonl')
    out = tmp_path / 'eval'
    code = main(['evaluate', str(dets), str(two_image_csv), '--fp', '0.25,0.5,1,2', '--out', str(out)])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ['Method', 'FP@0.25', 'FP@0.5', 'FP@1', 'FP@2']
    assert lines[2].split() == ['dets', '50.00', '100.00', '100.00', '100.00']
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['sensitivity']['dets'] == {'FP@0.25': 0.5, 'FP@0.5': 1.0, 'FP@1': 1.0, 'FP@2': 1.0}
    assert summary['threshold_at_min_fp']['dets'] == pytest.approx(0.9)


def test_evaluate_rerun_is_byte_identical(tmp_path, two_image_csv):
    dets = two_image_detections(tmp_path / 'dets.jsonl')
    for name in ('a', 'b'):
        assert main(['evaluate', str(dets), str(two_image_csv), '--out', str(tmp_path / name)]) == EXIT_OK
    for output in ('froc.csv', 'froc.svg', 'summary.txt', 'summary.json'):
        assert (tmp_path / 'a' / output).read_bytes() == (tmp_path / 'b' / output).read_bytes()


def test_evaluate_without_detections_writes_strict_json(tmp_path, two_image_csv):
    dets = write_detections([], tmp_path / 'none.jsonl')
    out = tmp_path / 'eval'
    assert main(['evaluate', str(dets), str(two_image_csv), '--out', str(out)]) == EXIT_OK
    text = (out / 'summary.json').read_text()
    assert 'Infinity' not in text and 'NaN' not in text
    summary = json.loads(text)
    assert summary['threshold_at_min_fp'] == {'none': None}
    assert set(summary['sensitivity']['none'].values()) == {0.0}


def test_non_finite_annotation_cells_are_rejected_not_fatal(tmp_path, annotations_writer):
    rows = [annotation_row(name, GT_BOXES[name], box_recist(GT_BOXES[name]), split=3) for name in TWO_IMAGES]
    rows.append(annotation_row('000003_01_01_033.png', GT_BOXES['000003_01_01_033.png'],
                               box_recist(GT_BOXES['000003_01_01_033.png']), split=3, size=(float('inf'), 512)))
    csv = annotations_writer(rows)
    dets = two_image_detections(tmp_path / 'dets.jsonl')
    assert main(['evaluate', str(dets), str(csv), '--out', str(tmp_path / 'eval')]) == EXIT_OK
