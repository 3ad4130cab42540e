"""Render impulsive-iss CSV outputs into publication-style figures."""

__version__ = "0.1.0"

from .render import FigureSpec, build_figure, render
