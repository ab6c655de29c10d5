"""Figure scripts for threshold-mech sweep CSVs."""

from .render import FIGURES, RenderError, render

__version__ = "0.1.0"

__all__ = ["FIGURES", "RenderError", "render"]
