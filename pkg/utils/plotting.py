"""
Interactive HTML figures of posterior summaries.
"""
import logging
from pathlib import Path
from typing import Optional

import pandas as pd
import plotly.graph_objects as go

logger = logging.getLogger(__name__)

BAND_COLOR = "rgba(31, 119, 180, {alpha})"


def _band(fig: go.Figure, frame: pd.DataFrame, lower: str, upper: str, alpha: float, name: str):
    fig.add_trace(go.Scatter(x=frame["date"], y=frame[upper], mode="lines", line=dict(width=0),
                             showlegend=False, hoverinfo="skip"))
    fig.add_trace(go.Scatter(x=frame["date"], y=frame[lower], mode="lines", line=dict(width=0),
                             fill="tonexty", fillcolor=BAND_COLOR.format(alpha=alpha), name=name))


def summary_figure(summary: pd.DataFrame, column: str, title: str,
                   observed: Optional[pd.DataFrame] = None) -> go.Figure:
    """
    Posterior mean with 50% and 95% credible bands.

    Args:
        summary: Output of ``summarize_draws`` for ``column``
        column: Prefix of the summary columns (e.g. "R", "I", "cases")
        title: Figure title
        observed: Optional frame with ``date`` and ``cases`` columns drawn as markers
    """
    fig = go.Figure()
    _band(fig, summary, f"{column}_q2.5", f"{column}_q97.5", 0.2, "95% CrI")
    _band(fig, summary, f"{column}_q25", f"{column}_q75", 0.4, "50% CrI")
    fig.add_trace(go.Scatter(x=summary["date"], y=summary[f"{column}_mean"], mode="lines",
                             line=dict(color=BAND_COLOR.format(alpha=1.0)), name="Posterior mean"))
    if observed is not None:
        fig.add_trace(go.Scatter(x=observed["date"], y=observed["cases"], mode="markers",
                                 marker=dict(color="black", size=4), name="Reported"))
    fig.update_layout(title=title, xaxis_title="Date", yaxis_title=column, template="plotly_white")
    return fig


def elimination_figure(frame: pd.DataFrame) -> go.Figure:
    fig = go.Figure(go.Scatter(x=frame["date"], y=frame["elimination_probability"], mode="lines"))
    fig.update_layout(title="Probability of elimination", xaxis_title="Date", yaxis_title="Probability",
                      yaxis_range=[0, 1], template="plotly_white")
    return fig


def write_figure(fig: go.Figure, path: Path) -> str:
    fig.write_html(str(path), include_plotlyjs="cdn")
    logger.info(f"Wrote figure {path}")
    return str(path)
