"""Gradient-bound experiments for degenerate parabolic equations on the torus.

Models, structural-condition certification, an explicit monotone solver, and
run diagnostics for ``u_t = F(D^2u, Du, u)`` in one and two dimensions.
"""
from .certify import CertReport, QuadraticForm, certify_model, check_differential_inequality_A
from .grid import PeriodicGrid, ScalarField
from .models import (
    PME,
    AdmissibilityBox,
    DoublyNonlinear,
    GDiffusion,
    HydrologyFull,
    HydrologySimplified,
    ModelSpec,
    builtin_model,
)
from .solver import SolverConfig, comparison_run, run
from .thresholds import doubly_nonlinear_window, hydrology_delta, pme_m_max

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityBox",
    "CertReport",
    "DoublyNonlinear",
    "GDiffusion",
    "HydrologyFull",
    "HydrologySimplified",
    "ModelSpec",
    "PME",
    "PeriodicGrid",
    "QuadraticForm",
    "ScalarField",
    "SolverConfig",
    "builtin_model",
    "certify_model",
    "check_differential_inequality_A",
    "comparison_run",
    "doubly_nonlinear_window",
    "hydrology_delta",
    "pme_m_max",
    "run",
]
