"""Batch figure rendering for relform trace and summary files."""

from .reader import CompareSummary, RunSummary, SchemaError, TraceData, load_input
from .render import render_error_bands, render_paths, render_trace

__version__ = "0.1.0"
