"""CSV-driven figure renderer for hho2d runs."""

from .cli import fit_slope, main  # noqa: F401
