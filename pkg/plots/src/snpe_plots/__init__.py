"""Figure rendering for solver benchmark traces."""

from .render import KINDS, PlotSpec, RenderResult, median_band, render
from .traces import Trace, TraceSet, load_traces, parse_trace_csv

__all__ = [
    "KINDS",
    "PlotSpec",
    "RenderResult",
    "median_band",
    "render",
    "Trace",
    "TraceSet",
    "load_traces",
    "parse_trace_csv",
]

__version__ = "0.1.0"
