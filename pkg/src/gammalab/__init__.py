"""Numerical laboratory for a weighted phase-transition energy with line tension and its sharp-interface limit."""

__version__ = "0.1.0"
