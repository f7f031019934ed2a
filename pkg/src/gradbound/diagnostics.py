"""Run diagnostics: per-time statistics, bound verdicts, and the w-rate probe."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, field_minmax, gradient_centered, hessian_centered, mass, sup_grad_norm
from .models import ModelSpec

CSV_COLUMNS = ("t", "dt", "max_grad", "u_min", "u_max", "mass", "w_rate")
RANGE_TOL = 1e-12
MASS_TOL = 1e-10


class OrderingError(ValueError):
    """Diagnostics rows must be recorded at strictly increasing times."""


@dataclass(frozen=True)
class Row:
    t: float
    dt: float
    max_grad: float
    u_min: float
    u_max: float
    mass: float
    w_rate: float | None = None


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    worst: float
    time: float | None
    detail: str = ""

    def line(self) -> str:
        when = "" if self.time is None else f" t={self.time:.17g}"
        status = "pass" if self.passed else "fail"
        return f"{self.name}: {status} worst={self.worst:.17g}{when} {self.detail}".rstrip()


@dataclass
class RunDiagnostics:
    rows: list[Row] = field(default_factory=list)
    verdicts: dict[str, Verdict] = field(default_factory=dict)
    # extremes over every accepted step, not just recorded rows
    u_min_seen: float = math.inf
    u_max_seen: float = -math.inf
    steps: int = 0
    snapshots: list[tuple[float, ScalarField]] = field(default_factory=list)

    def observe(self, u: ScalarField) -> None:
        lo, hi = field_minmax(u)
        self.u_min_seen = min(self.u_min_seen, lo)
        self.u_max_seen = max(self.u_max_seen, hi)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            vals = [r.t, r.dt, r.max_grad, r.u_min, r.u_max, r.mass]
            writer.writerow([f"{v:.17g}" for v in vals] + ["" if r.w_rate is None else f"{r.w_rate:.17g}"])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> RunDiagnostics:
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        diag = cls()
        for rec in reader:
            w = rec.pop("w_rate")
            diag.rows.append(Row(**{k: float(v) for k, v in rec.items()}, w_rate=float(w) if w else None))
        return diag


def w_rate_at_argmax(model: ModelSpec, u: ScalarField) -> float:
    """Right side of the w = |Du|^2/2 evolution inequality at the node where w peaks.

    Evaluates ``-D_X F : (D^2u)^2 + 2 w D_u F + D_x F . Du`` with centered
    differences; the first maximizing node in row-major order wins ties.
    """
    grad = gradient_centered(u)
    w = 0.5 * grad.norm() ** 2
    k = int(np.argmax(w.ravel()))
    idx = np.unravel_index(k, u.grid.shape)
    p = np.array([c[idx] for c in grad.components])
    X = hessian_centered(u)[(slice(None), slice(None)) + idx]
    uk = float(u.values[idx])
    A = model._dX_F(X, p, uk)
    rate = -float(np.sum(A * (X @ X))) + 2.0 * float(w[idx]) * model._du_F(X, p, uk)
    return rate + float(model.dx_F(X, p, uk) @ p)


def record_row(
    diag: RunDiagnostics,
    t: float,
    dt: float,
    u: ScalarField,
    model: ModelSpec | None = None,
    with_w_rate: bool = True,
) -> RunDiagnostics:
    if diag.rows and not t > diag.rows[-1].t:
        raise OrderingError(f"row time {t!r} does not follow {diag.rows[-1].t!r}")
    lo, hi = field_minmax(u)
    rate = w_rate_at_argmax(model, u) if (with_w_rate and model is not None) else None
    diag.rows.append(Row(t, dt, sup_grad_norm(u), lo, hi, mass(u), rate))
    diag.observe(u)
    return diag


def verdict_bounds(diag: RunDiagnostics, tol_grad: float = 0.01) -> dict[str, Verdict]:
    """Gradient non-expansion, range preservation, and mass conservation verdicts."""
    if not diag.rows:
        raise ValueError("no diagnostics rows recorded")
    first = diag.rows[0]
    t = diag.column("t")

    grads = diag.column("max_grad")
    k = int(np.argmax(grads))
    limit = first.max_grad * (1 + tol_grad)
    ratio = grads[k] / first.max_grad - 1.0 if first.max_grad > 0 else (0.0 if grads[k] == 0 else math.inf)
    gradient = Verdict("gradient", bool(grads[k] <= limit), float(ratio), float(t[k]),
                       f"max_grad={grads[k]:.17g} initial={first.max_grad:.17g}")

    lo_all = min(float(np.min(diag.column("u_min"))), diag.u_min_seen)
    hi_all = max(float(np.max(diag.column("u_max"))), diag.u_max_seen)
    below = first.u_min - lo_all
    above = hi_all - first.u_max
    excess = max(below, above, 0.0)
    lows, highs = first.u_min - diag.column("u_min"), diag.column("u_max") - first.u_max
    j = int(np.argmax(np.maximum(lows, highs)))
    rng = Verdict("range", bool(excess <= RANGE_TOL), float(excess), float(t[j]),
                  f"u in [{lo_all:.17g}, {hi_all:.17g}]")

    masses = diag.column("mass")
    drift = np.abs(masses - first.mass) / (abs(first.mass) or 1.0)
    i = int(np.argmax(drift))
    mass_v = Verdict("mass", bool(drift[i] <= MASS_TOL), float(drift[i]), float(t[i]))

    diag.verdicts = {"gradient": gradient, "range": rng, "mass": mass_v}
    return diag.verdicts


def verdicts_text(verdicts: dict[str, Verdict]) -> str:
    return "".join(v.line() + "\n" for v in verdicts.values())
