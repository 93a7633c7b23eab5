"""Simulation and analysis of Gaussian energy-time entangled photon pairs."""
from __future__ import annotations

__version__ = "0.1.0"

from .estimate import FitSummary, Hist1D, ResolutionLimitedError, analyze, deconvolve_summary, deconvolve_width
from .model import BiphotonState, GatePulse, MomentSummary, make_state, spectral_moments, temporal_moments
from .simulate import CountGrid, Grid2D, InstrumentResponse, blur, draw_counts, make_grid
from .witness import (
    WitnessReport,
    classical_dispersion_bound,
    heralded_tbp_witness,
    mirrored_uncertainty_witness,
    uncertainty_witness,
)

__all__ = [
    "BiphotonState", "CountGrid", "FitSummary", "GatePulse", "Grid2D", "Hist1D", "InstrumentResponse",
    "MomentSummary", "ResolutionLimitedError", "WitnessReport", "analyze", "blur",
    "classical_dispersion_bound", "deconvolve_summary", "deconvolve_width", "draw_counts",
    "heralded_tbp_witness", "make_grid", "make_state", "mirrored_uncertainty_witness",
    "spectral_moments", "temporal_moments", "uncertainty_witness",
]
