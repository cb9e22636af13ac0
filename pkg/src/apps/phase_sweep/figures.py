"""Plotly figures for a sweep: geometric phases and dressed energies against omega_r."""

import logging
from pathlib import Path

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from core.spectrum import CANONICAL_LABELS

logger = logging.getLogger(__name__)

# one colour per |M|, dashed lines for e parity
COLOURS = {1: "#3498db", 3: "#e74c3c"}
GHZ = 1e9


def _trace_name(m_twice: int, parity: str) -> str:
    return f"M={m_twice:+d}/2, {parity}"


def create_sweep_figure(rows: pd.DataFrame, title: str, hbar: float) -> go.Figure:
    """Two stacked panels sharing the omega_r axis (in 1e9 rad/s)."""
    fig = make_subplots(
        rows=2,
        cols=1,
        shared_xaxes=True,
        vertical_spacing=0.06,
        subplot_titles=("Geometric phase", "Dressed energy"),
    )

    for index, label in enumerate(CANONICAL_LABELS):
        state = rows[rows["state_index"] == index]
        x = state["omega_r_rad_s"] / GHZ
        style = {
            "color": COLOURS[abs(label.m_twice)],
            "dash": "dash" if label.parity == "e" else "solid",
            "width": 2 if label.m_twice > 0 else 1,
        }
        name = _trace_name(label.m_twice, label.parity)
        fig.add_trace(
            go.Scatter(x=x, y=state["geometric_phase_rad"], mode="lines", name=name, line=style, legendgroup=name),
            row=1,
            col=1,
        )
        fig.add_trace(
            go.Scatter(
                x=x,
                y=state["energy_joule"] / (hbar * GHZ),
                mode="lines",
                name=name,
                line=style,
                legendgroup=name,
                showlegend=False,
            ),
            row=2,
            col=1,
        )

    fig.add_hline(y=0.0, line_width=1, line_color="#7f8c8d", row=1, col=1)
    fig.update_yaxes(title_text="phase (rad)", row=1, col=1)
    fig.update_yaxes(title_text="E / hbar (1e9 rad/s)", row=2, col=1)
    fig.update_xaxes(title_text="omega_r (1e9 rad/s)", row=2, col=1)
    fig.update_layout(
        title={"text": title, "x": 0.5, "xanchor": "center", "font": {"size": 20}},
        showlegend=True,
        height=800,
    )
    return fig


def write_figure(rows: pd.DataFrame, path: Path, title: str, hbar: float) -> Path:
    """Standalone HTML with the plotly bundle inlined."""
    path.parent.mkdir(parents=True, exist_ok=True)
    create_sweep_figure(rows, title, hbar).write_html(str(path), include_plotlyjs=True, full_html=True)
    logger.info("wrote %s", path)
    return path
