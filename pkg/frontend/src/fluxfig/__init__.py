"""Scripted rendering of fluxlab CLI result files into paper-style figures.

The package never recomputes physics: it reads only the CSV/JSON files
the ``fluxlab`` command publishes and turns them into deterministic
images (fixed fonts, DPI and layout, so identical inputs yield identical
bytes).
"""

from .render import FigureSpec, render
from .tables import SchemaError, read_json_result, read_table

__all__ = ["FigureSpec", "render", "SchemaError", "read_table",
           "read_json_result"]
