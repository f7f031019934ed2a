"""Closed-form admissible parameter limits for the shipped model families."""
from __future__ import annotations

import math


def _check_dim(dim: int) -> None:
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")


def pme_m_max(dim: int) -> float:
    """Largest porous-medium exponent m for which the gradient bound is certified."""
    _check_dim(dim)
    return 1.0 + 4.0 / (3 + dim)


def hydrology_delta(dim: int) -> float:
    """Half-width of the admissible interval around 1/2 for the hydrology models."""
    _check_dim(dim)
    return 1.0 / math.sqrt(2 + 2 * dim)


def doubly_nonlinear_window(dim: int) -> float:
    """Largest admissible alpha = (m - 1)(p - 1) for u_t = Delta_p(u^m)."""
    _check_dim(dim)
    return 4.0 / (3 + dim)
