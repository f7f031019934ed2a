"""Explicit conservative time stepping on the periodic grid.

The update is forward Euler on the divergence of face fluxes. G-form models use
``(G(u_{i+1}) - G(u_i)) / h``, the standard Laplacian of G(u), which is monotone
for ``dt <= h^2 / (2 d max G')``. psi-form models use
``psi(u_face, |g_face|^2) g_face[axis]`` with an arithmetic face average of u and
a face gradient built from the normal difference plus averaged tangential
centered differences.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import RunDiagnostics, record_row
from .grid import PeriodicGrid, ScalarField, divergence_of_face_flux, field_minmax, sup_grad_norm
from .models import ModelSpec, _GForm

logger = logging.getLogger(__name__)

BOX_EXIT_TOL = 1e-12
CFL_SLACK = 1e-12
MAX_STEPS = 50_000_000


class SolverError(RuntimeError):
    pass


class CFLViolation(SolverError):
    """Requested step exceeds the monotonicity bound."""


class InstabilityError(SolverError):
    """A step produced non-finite values."""


class BoxExitError(SolverError):
    """The solution (or initial data) left the model's admissibility box."""


@dataclass
class SolverConfig:
    n: int
    dim: int
    t_end: float
    cfl_safety: float = 0.9
    output_every: float | None = None
    snapshot_times: list[float] = field(default_factory=list)
    track_w_rate: bool = True

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.output_every is None:
            self.output_every = self.t_end / 100
        if not self.output_every > 0:
            raise ValueError("output_every must be positive")


def face_gradients(u: ScalarField, axis: int) -> tuple[np.ndarray, ...]:
    """Gradient on faces ``i + 1/2`` normal to ``axis``."""
    v, h, dim = u.values, u.grid.h, u.grid.dim
    right = np.roll(v, -1, axis=axis)
    comps = []
    for ax in range(dim):
        if ax == axis:
            comps.append((right - v) / h)
        else:
            centered = (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) / (2.0 * h)
            comps.append(0.5 * (centered + np.roll(centered, -1, axis=axis)))
    return tuple(comps)


def face_fluxes(model: ModelSpec, u: ScalarField) -> list[np.ndarray]:
    h = u.grid.h
    fluxes = []
    for axis in range(u.grid.dim):
        right = np.roll(u.values, -1, axis=axis)
        grad = None if isinstance(model, _GForm) else face_gradients(u, axis)
        fluxes.append(model.face_flux(u.values, right, grad, axis, h))
    return fluxes


def max_diffusivity(model: ModelSpec, u: ScalarField) -> float:
    """Largest effective diffusivity over nodes (G-form) or faces (psi-form)."""
    if isinstance(model, _GForm):
        tang, rad = model.diffusivities(u.values, 0.0)
        return float(max(np.max(tang), np.max(rad)))
    best = 0.0
    for axis in range(u.grid.dim):
        grad = face_gradients(u, axis)
        s = sum(g * g for g in grad)
        u_face = 0.5 * (u.values + np.roll(u.values, -1, axis=axis))
        tang, rad = model.diffusivities(u_face, s)
        best = max(best, float(np.max(tang)), float(np.max(rad)))
    return best


def compute_dt_cfl(model: ModelSpec, u: ScalarField, cfl_safety: float = 0.9) -> float:
    h2 = u.grid.h ** 2
    d_max = max_diffusivity(model, u)
    if not np.isfinite(d_max):
        raise InstabilityError(f"non-finite diffusivity {d_max}")
    if d_max <= 0:
        return cfl_safety * h2
    return cfl_safety * h2 / (2 * u.grid.dim * d_max)


def step_explicit(model: ModelSpec, u: ScalarField, dt: float, step_index: int | None = None) -> ScalarField:
    """One forward-Euler step; raises if ``dt`` breaks the CFL bound or the result is not finite."""
    limit = compute_dt_cfl(model, u, 1.0)
    if dt > limit * (1 + CFL_SLACK):
        raise CFLViolation(f"dt={dt:.6g} exceeds CFL limit {limit:.6g}")
    div = divergence_of_face_flux(u.grid, face_fluxes(model, u))
    new = ScalarField(u.grid, u.values + dt * div.values)
    if not new.is_finite():
        where = "" if step_index is None else f" at step {step_index}"
        raise InstabilityError(f"non-finite values{where}")
    return new


def _check_box(model: ModelSpec, u: ScalarField, t: float) -> None:
    lo, hi = field_minmax(u)
    box = model.box
    if lo < box.u_lo - BOX_EXIT_TOL or hi > box.u_hi + BOX_EXIT_TOL:
        raise BoxExitError(
            f"u range [{lo:.17g}, {hi:.17g}] leaves box [{box.u_lo:.17g}, {box.u_hi:.17g}] at t={t:.17g}"
        )


def validate_initial(model: ModelSpec, u0: ScalarField) -> None:
    if u0.grid.dim != model.dim:
        raise ValueError(f"field has dim {u0.grid.dim}, model has dim {model.dim}")
    if not u0.is_finite():
        raise InstabilityError("initial data not finite")
    _check_box(model, u0, 0.0)
    g = sup_grad_norm(u0)
    if g * g > model.box.grad_sq_max * (1 + 1e-12):
        raise BoxExitError(
            f"initial |Du|^2 = {g * g:.17g} exceeds grad_sq_max = {model.box.grad_sq_max:.17g}"
        )


def _schedule(config: SolverConfig) -> list[float]:
    """Times at which the step length is clipped: outputs, snapshots, and t_end."""
    n_out = int(math.floor(config.t_end / config.output_every + 1e-9))
    stops = {round(k * config.output_every, 15) for k in range(1, n_out + 1)}
    stops.update(t for t in config.snapshot_times if 0 < t <= config.t_end)
    stops.add(config.t_end)
    return sorted(t for t in stops if 0 < t <= config.t_end)


def run(model: ModelSpec, u0: ScalarField, config: SolverConfig) -> tuple[ScalarField, RunDiagnostics]:
    """Advance ``u0`` to ``config.t_end`` recording diagnostics at the output cadence."""
    validate_initial(model, u0)
    diag = RunDiagnostics()
    record_row(diag, 0.0, 0.0, u0, model, config.track_w_rate)
    snap_times = set(config.snapshot_times)
    if 0.0 in snap_times:
        diag.snapshots.append((0.0, u0))
    u, t = u0, 0.0
    for stop in _schedule(config):
        last_dt = 0.0
        while t < stop:
            dt = min(compute_dt_cfl(model, u, config.cfl_safety), stop - t)
            u = step_explicit(model, u, dt, diag.steps)
            t = stop if dt == stop - t else t + dt
            last_dt = dt
            diag.steps += 1
            diag.observe(u)
            _check_box(model, u, t)
            if diag.steps > MAX_STEPS:
                raise SolverError("step budget exhausted")
        record_row(diag, t, last_dt, u, model, config.track_w_rate)
        if stop in snap_times:
            diag.snapshots.append((stop, u))
    logger.info("%s: %d steps to t=%g", model.name, diag.steps, t)
    return u, diag


@dataclass
class ComparisonReport:
    max_gap: float
    gaps: list[tuple[float, float]]
    u: ScalarField
    v: ScalarField
    steps: int

    @property
    def ordered(self) -> bool:
        return self.max_gap <= 1e-12


def comparison_run(
    model: ModelSpec, u0: ScalarField, v0: ScalarField, config: SolverConfig
) -> ComparisonReport:
    """Co-evolve ``u0 <= v0`` on a shared step sequence and track ``max(u - v)``."""
    if np.any(u0.values > v0.values):
        raise ValueError("comparison requires u0 <= v0 at every node")
    validate_initial(model, u0)
    validate_initial(model, v0)
    u, v, t, steps = u0, v0, 0.0, 0
    gaps = [(0.0, float(np.max(u.values - v.values)))]
    for stop in _schedule(config):
        while t < stop:
            dt = min(
                compute_dt_cfl(model, u, config.cfl_safety),
                compute_dt_cfl(model, v, config.cfl_safety),
                stop - t,
            )
            u = step_explicit(model, u, dt, steps)
            v = step_explicit(model, v, dt, steps)
            t = stop if dt == stop - t else t + dt
            steps += 1
            _check_box(model, u, t)
            _check_box(model, v, t)
        gaps.append((t, float(np.max(u.values - v.values))))
    return ComparisonReport(max(g for _, g in gaps), gaps, u, v, steps)


def initial_sine(grid: PeriodicGrid, mean: float, amplitude: float, mode: int = 1) -> ScalarField:
    """``mean + amplitude * avg_axes sin(2 pi mode x_axis)``."""
    coords = grid.coords()
    waves = sum(np.sin(2 * np.pi * mode * x) for x in coords) / grid.dim
    return ScalarField(grid, mean + amplitude * waves)


def initial_bump(grid: PeriodicGrid, center: float, width: float, height: float, floor: float = 0.0) -> ScalarField:
    """Cosine-squared bump of diameter ``width`` on a constant floor; periodic distance."""
    r2 = np.zeros(grid.shape)
    for x in grid.coords():
        dx = np.abs(x - center)
        dx = np.minimum(dx, 1.0 - dx)
        r2 = r2 + dx * dx
    r = np.sqrt(r2)
    inside = r < 0.5 * width
    bump = np.where(inside, np.cos(np.pi * r / width) ** 2, 0.0)
    return ScalarField(grid, floor + height * bump)
