import math

import pandas as pd
import pytest

from src.evaluation.froc import FrocCurve, FrocPoint, GroupSensitivity
from src.evaluation.reporting import (
    format_sensitivity_table, format_size_group_table, froc_to_frame, sensitivity_records, write_froc_csv,
)
from src.visualization.froc_plots import FROCVisualizer, save_froc_svg

TARGETS = (0.5, 1, 2, 4, 8, 16)


@pytest.fixture
def curves():
    return {
        'baseline': FrocCurve(points=[FrocPoint(0.0, 0.5, 0.9), FrocPoint(0.5, 0.5, 0.8), FrocPoint(0.5, 1.0, 0.7)],
                              n_images=2, n_ground_truths=2),
    }


def test_sensitivity_table_layout():
    table = format_sensitivity_table({'RetinaNet': [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]}, TARGETS)
    assert table == (
        "Method       FP@0.5      FP@1      FP@2      FP@4      FP@8     FP@16\n"
        "---------------------------------------------------------------------\n"
        "RetinaNet     50.00     60.00     70.00     80.00     90.00    100.00\n"
    )


def test_size_group_table_marks_empty_groups():
    groups = {'m': {'<10 mm': GroupSensitivity(3, 1 / 3), '10-30 mm': GroupSensitivity(0, math.nan),
                    '>30 mm': GroupSensitivity(1, 1.0)}}
    table = format_size_group_table(groups, 4)
    assert table.splitlines()[0] == 'Sensitivity (%) by lesion size at FP@4'
    assert '<10 mm (n=3)' in table
    assert table.splitlines()[-1].split() == ['m', '33.33', 'n/a', '100.00']


def test_froc_csv(tmp_path, curves):
    path = write_froc_csv(curves, tmp_path / 'froc.csv')
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['method', 'threshold', 'fp_per_image', 'sensitivity']
    assert frame['sensitivity'].tolist() == [0.5, 0.5, 1.0]
    assert path.read_text().splitlines()[1] == 'baseline,0.900000,0.000000,0.500000'
    assert len(froc_to_frame({})) == 0


def test_sensitivity_records():
    assert sensitivity_records({'m': [0.25, 1.0]}, (0.5, 1)) == {'m': {'FP@0.5': 0.25, 'FP@1': 1.0}}


def test_svg_is_byte_stable(tmp_path, curves):
    first = save_froc_svg(curves, tmp_path / 'a.svg').read_bytes()
    second = save_froc_svg(curves, tmp_path / 'b.svg').read_bytes()
    assert first == second
    assert first.lstrip().startswith(b'<?xml')


def test_interactive_figures(tmp_path, curves):
    viz = FROCVisualizer()
    froc = viz.create_froc_figure(curves)
    assert [t.name for t in froc.data] == ['baseline']
    groups = {'baseline': {'<10 mm': GroupSensitivity(1, 0.0), '10-30 mm': GroupSensitivity(1, 1.0),
                           '>30 mm': GroupSensitivity(0, math.nan)}}
    bars = viz.create_size_group_chart(groups)
    assert list(bars.data[0].y) == [0.0, 1.0, None]
    assert len(viz.create_froc_figure({}).layout.annotations) == 1
    html = viz.save_html([froc, bars], tmp_path / 'froc.html').read_text()
    assert html.count('plotly-graph-div') >= 2
