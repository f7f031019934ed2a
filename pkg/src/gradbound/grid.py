"""Uniform periodic grids on the unit torus and the discrete operators built on them.

Fields are stored as numpy arrays of shape ``(n,) * dim``; flattening in C order
gives the row-major layout used by snapshot files. All stencils wrap with
``np.roll`` so no ghost cells are needed.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MIN_POINTS = 4


@dataclass(frozen=True)
class PeriodicGrid:
    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates ``x_i = i h`` broadcast to the full grid (ij indexing)."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def face_coords(self, axis: int) -> tuple[np.ndarray, ...]:
        """Coordinates of the faces ``i + 1/2`` normal to ``axis``."""
        coords = list(self.coords())
        coords[axis] = coords[axis] + 0.5 * self.h
        return tuple(coords)


@dataclass(frozen=True)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            values = values.reshape(self.grid.shape)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func) -> ScalarField:
        return cls(grid, np.broadcast_to(func(*grid.coords()), grid.shape).astype(float))

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> ScalarField:
        return cls(grid, np.full(grid.shape, float(c)))

    def shifted(self, k: int, axis: int = 0) -> ScalarField:
        return ScalarField(self.grid, np.roll(self.values, k, axis=axis))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def flat(self) -> np.ndarray:
        return self.values.ravel(order="C")


@dataclass(frozen=True)
class VectorField:
    grid: PeriodicGrid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError(
                f"expected {self.grid.dim} components, got {len(self.components)}"
            )

    def norm(self) -> np.ndarray:
        total = np.zeros(self.grid.shape)
        for comp in self.components:
            total = total + comp * comp
        return np.sqrt(total)


def gradient_centered(f: ScalarField) -> VectorField:
    """Second-order centered gradient with periodic wrap."""
    u, h = f.values, f.grid.h
    comps = tuple(
        (np.roll(u, -1, axis=ax) - np.roll(u, 1, axis=ax)) / (2.0 * h)
        for ax in range(f.grid.dim)
    )
    return VectorField(f.grid, comps)


def hessian_centered(f: ScalarField) -> np.ndarray:
    """Centered second differences, returned with shape ``(dim, dim) + grid.shape``."""
    u, h, dim = f.values, f.grid.h, f.grid.dim
    out = np.empty((dim, dim) + f.grid.shape)
    for i in range(dim):
        out[i, i] = (np.roll(u, -1, axis=i) - 2.0 * u + np.roll(u, 1, axis=i)) / (h * h)
        for j in range(i + 1, dim):
            pp = np.roll(np.roll(u, -1, axis=i), -1, axis=j)
            pm = np.roll(np.roll(u, -1, axis=i), 1, axis=j)
            mp = np.roll(np.roll(u, 1, axis=i), -1, axis=j)
            mm = np.roll(np.roll(u, 1, axis=i), 1, axis=j)
            out[i, j] = out[j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
    return out


def sup_grad_norm(f: ScalarField) -> float:
    return float(np.max(gradient_centered(f).norm()))


def divergence_of_face_flux(grid: PeriodicGrid, fluxes: Sequence[np.ndarray]) -> ScalarField:
    """Conservative divergence; ``fluxes[ax][i]`` lives on face ``i + 1/2`` of axis ``ax``."""
    if len(fluxes) != grid.dim:
        raise ValueError(f"expected {grid.dim} flux arrays, got {len(fluxes)}")
    div = np.zeros(grid.shape)
    for ax, flux in enumerate(fluxes):
        flux = np.asarray(flux, dtype=float).reshape(grid.shape)
        div = div + (flux - np.roll(flux, 1, axis=ax)) / grid.h
    return ScalarField(grid, div)


def field_minmax(f: ScalarField) -> tuple[float, float]:
    return float(np.min(f.values)), float(np.max(f.values))


def mass(f: ScalarField) -> float:
    return float(f.grid.h**f.grid.dim * np.sum(f.values))


def write_snapshot(path, f: ScalarField, t: float) -> None:
    lines = [f"# d={f.grid.dim} n={f.grid.n} t={t:.17g}"]
    lines.extend(f"{v:.17g}" for v in f.flat())
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> tuple[ScalarField, float]:
    text = Path(path).read_text().splitlines()
    header = text[0].lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    grid = PeriodicGrid(int(meta["d"]), int(meta["n"]))
    values = np.array([float(line) for line in text[1:] if line.strip()])
    if values.size != grid.size:
        raise ValueError(f"snapshot holds {values.size} values, expected {grid.size}")
    return ScalarField(grid, values.reshape(grid.shape)), float(meta["t"])
