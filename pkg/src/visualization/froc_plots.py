"""
FROC and lesion-size plots using Plotly (interactive) and Matplotlib (SVG).
"""
import logging
import math
from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib
import numpy as np
import plotly.express as px
import plotly.graph_objects as go
from matplotlib.figure import Figure

from ..config import Config
from ..evaluation.froc import SIZE_GROUPS, FrocCurve, GroupSensitivity

logger = logging.getLogger(__name__)


def _curve_xy(curve: FrocCurve):
    """Curve points with the fp axis clipped away from zero for log scaling."""
    fp = np.maximum(curve.fp_per_image, 1e-3)
    return fp, curve.sensitivity


class FROCVisualizer:
    """Creates visualizations for detection evaluation results."""

    def __init__(self):
        self.color_palette = px.colors.qualitative.Set2

    def _empty_figure(self, text: str) -> go.Figure:
        fig = go.Figure()
        fig.add_annotation(
            text=text,
            xref="paper", yref="paper",
            x=0.5, y=0.5, showarrow=False
        )
        return fig

    def create_froc_figure(self, curves: Mapping[str, FrocCurve],
                           targets: Sequence[float] = Config.FP_TARGETS) -> go.Figure:
        """
        Create an FROC plot overlaying one curve per method.

        Args:
            curves: method name -> FROC curve
            targets: FP-per-image values marked on the x axis

        Returns:
            Plotly figure object
        """
        try:
            if not curves:
                return self._empty_figure("No FROC curves to plot")

            fig = go.Figure()
            for i, (name, curve) in enumerate(curves.items()):
                fp, sens = _curve_xy(curve)
                fig.add_trace(go.Scatter(
                    x=fp,
                    y=sens,
                    mode='lines',
                    line=dict(color=self.color_palette[i % len(self.color_palette)], width=2, shape='hv'),
                    name=name,
                    hovertemplate="<b>FPs/image:</b> %{x:.3f}<br><b>Sensitivity:</b> %{y:.3f}<extra></extra>"
                ))

            fig.update_layout(
                title="FROC",
                xaxis=dict(type='log', tickvals=list(targets), ticktext=[f"{t:g}" for t in targets]),
                xaxis_title="False positives per image",
                yaxis_title="Sensitivity",
                yaxis=dict(range=[0, 1.02]),
                template='plotly_white',
                height=500
            )
            return fig

        except Exception as e:
            logger.error(f"Error creating FROC plot: {e}")
            return self._empty_figure(f"Error creating plot: {str(e)}")

    def create_size_group_chart(self, groups: Mapping[str, Mapping[str, GroupSensitivity]],
                                fp_rate: float = Config.SIZE_GROUP_FP) -> go.Figure:
        """
        Create a grouped bar chart of sensitivity per lesion size group.

        Args:
            groups: method name -> size group label -> sensitivity
            fp_rate: FP rate the sensitivities were read at

        Returns:
            Plotly figure object
        """
        try:
            if not groups:
                return self._empty_figure("No size-group results to plot")

            labels = [label for label, _, _ in SIZE_GROUPS]
            fig = go.Figure()
            for i, (name, values) in enumerate(groups.items()):
                fig.add_trace(go.Bar(
                    x=labels,
                    y=[None if math.isnan(values[label].sensitivity) else values[label].sensitivity for label in labels],
                    name=name,
                    marker_color=self.color_palette[i % len(self.color_palette)],
                    text=[f"n={values[label].count}" for label in labels],
                ))

            fig.update_layout(
                title=f"Sensitivity by lesion size at {fp_rate:g} FPs per image",
                xaxis_title="RECIST diameter",
                yaxis_title="Sensitivity",
                yaxis=dict(range=[0, 1.02]),
                barmode='group',
                template='plotly_white',
                height=450
            )
            return fig

        except Exception as e:
            logger.error(f"Error creating size-group chart: {e}")
            return self._empty_figure(f"Error creating plot: {str(e)}")

    def save_html(self, figures: Sequence[go.Figure], path: Union[str, Path]) -> Path:
        """Write figures into one standalone HTML page."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        parts = [fig.to_html(full_html=False, include_plotlyjs='cdn' if i == 0 else False)
                 for i, fig in enumerate(figures)]
        path.write_text("<html><head><meta charset='utf-8'></head><body>\n"
                        + "\n".join(parts) + "\n</body></html>\n")
        return path


def save_froc_svg(curves: Mapping[str, FrocCurve], path: Union[str, Path],
                  targets: Sequence[float] = Config.FP_TARGETS) -> Path:
    """
    Render FROC curves to SVG with Matplotlib.

    Output is byte-stable for identical inputs: ids are salted with a fixed
    string and the date metadata is omitted.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({'svg.hashsalt': 'lesionkit', 'svg.fonttype': 'none'}):
        fig = Figure(figsize=(6, 4.5))
        ax = fig.add_subplot(1, 1, 1)
        for name, curve in curves.items():
            fp, sens = _curve_xy(curve)
            ax.step(fp, sens, where='post', label=name, linewidth=1.5)
        ax.set_xscale('log')
        ax.set_xticks(list(targets))
        ax.set_xticklabels([f"{t:g}" for t in targets])
        ax.set_xlim(min(targets) / 2, max(targets) * 2)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel('False positives per image')
        ax.set_ylabel('Sensitivity')
        ax.grid(True, which='major', alpha=0.3)
        ax.legend(loc='lower right')
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
    return path
