"""Unambiguous discrimination of symmetric coherent states with linear optics."""

from .analytics import (
    PhaseAlphabet,
    asymptotic,
    bs4_feedback_finite_M,
    closed_form,
    elimination_click_prob,
    feedback_finite_M,
    feedback_limit,
    optimal_usd_prob,
    symmetric_coefficients,
)
from .errors import NumericalHealthWarning, ParameterError
from .montecarlo import CurveTable, Estimate, compare_to_analytic, estimate, sweep
from .optics import Beamsplitter, CoherentMode, Detector, RandomStream
from .qkd import run_session
from .strategies import FeedbackConfig, Scheme, StrategyOutcome, TrueState

__version__ = "0.1.0"
