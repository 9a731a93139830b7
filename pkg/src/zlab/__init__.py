"""Numerical laboratory for Zeno dynamics, ergodic means and adiabatic limits of contractions."""

from .curves import CurveRow, ErrorCurve, fit_rate
from .errors import ZlabError
from .harness import ExperimentConfig, preset, run_experiment

__all__ = ["CurveRow", "ErrorCurve", "ExperimentConfig", "ZlabError", "fit_rate", "preset", "run_experiment"]
__version__ = "0.1.0"
