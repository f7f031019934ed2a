"""Sampling certification of the structural conditions behind the gradient bound.

Every check evaluates a slack (positive means the inequality holds) on a sample
set, divides it by ``1 + local magnitude`` so that exact equalities on a
threshold survive rounding, and reports the worst sample. A condition passes
iff its worst normalized slack is ``>= -tol``.

The differential inequality on ``{X p = 0}`` is checked twice: once through its
reduction to the scalar quadratic ``c + b sum(L) + a |L|^2`` (closed-form
minimum over ``L``), and once directly on random matrices ``X = Q diag(0, L) Q^T``
whose frame ``Q`` has ``p/|p|`` as first column, using only the model's
``D_X F`` and ``D_u F``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .models import (
    AdmissibilityBox,
    GTable,
    ModelSpec,
    PsiTable,
    UnsupportedModelError,
    _GForm,
    _PsiForm,
)
from .thresholds import doubly_nonlinear_window, hydrology_delta, pme_m_max

__all__ = [
    "TOL_CERT",
    "CertReport",
    "QuadraticForm",
    "quadratic_min_closed_form",
    "quadratic_min_brute_force",
    "check_differential_inequality_A",
    "check_G_condition",
    "check_psi_condition",
    "check_parabolicity",
    "check_constant_solutions",
    "certify_model",
    "pme_m_max",
    "hydrology_delta",
    "doubly_nonlinear_window",
]

logger = logging.getLogger(__name__)

TOL_CERT = 1e-9
DEFAULT_SAMPLES = 201
DEFAULT_MATRIX_SAMPLES = 400
XP_TOL = 1e-12


@dataclass(frozen=True)
class QuadraticForm:
    a: float
    b: float
    c: float
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def __call__(self, lam) -> np.ndarray:
        """Evaluate ``c + b sum(lam) + a sum(lam^2)`` along the last axis."""
        lam = np.asarray(lam, dtype=float)
        return self.c + self.b * lam.sum(axis=-1) + self.a * (lam * lam).sum(axis=-1)


@dataclass(frozen=True)
class CertReport:
    condition: str
    passed: bool
    worst_margin: float
    witness_u: float | None = None
    witness_s: float | None = None
    witness_lambda: tuple[float, ...] | None = None
    samples: int = 0
    seed: int | None = None
    details: tuple[CertReport, ...] = field(default=(), repr=False)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def find(self, condition: str) -> CertReport:
        for rep in self.details:
            if rep.condition == condition:
                return rep
            try:
                return rep.find(condition)
            except KeyError:
                pass
        raise KeyError(condition)

    def block(self, prefix: str = "") -> str:
        lam = "" if self.witness_lambda is None else ",".join(f"{v:.17g}" for v in self.witness_lambda)
        lines = [
            f"condition = {prefix}{self.condition}",
            f"verdict = {self.verdict}",
            f"worst_margin = {self.worst_margin:.17g}",
            f"witness_u = {'' if self.witness_u is None else format(self.witness_u, '.17g')}",
            f"witness_s = {'' if self.witness_s is None else format(self.witness_s, '.17g')}",
            f"witness_lambda = {lam}",
            f"samples = {self.samples}",
            f"seed = {'' if self.seed is None else self.seed}",
        ]
        return "\n".join(lines)

    def to_text(self) -> str:
        """All blocks, this report first, nested reports as ``parent/child``."""
        blocks = []

        def walk(rep, prefix):
            blocks.append(rep.block(prefix))
            for sub in rep.details:
                walk(sub, f"{prefix}{rep.condition}/")

        walk(self, "")
        return "\n\n".join(blocks) + "\n"


def parse_report_text(text: str) -> list[dict[str, str]]:
    blocks = []
    for chunk in text.strip().split("\n\n"):
        entry = {}
        for line in chunk.splitlines():
            key, _, value = line.partition("=")
            entry[key.strip()] = value.strip()
        blocks.append(entry)
    return blocks


def _combine(condition: str, reports, seed=None) -> CertReport:
    """Worst-of combination; ties go to the earliest report."""
    reports = tuple(reports)
    worst = min(reports, key=lambda r: r.worst_margin)
    return CertReport(
        condition=condition,
        passed=all(r.passed for r in reports),
        worst_margin=worst.worst_margin,
        witness_u=worst.witness_u,
        witness_s=worst.witness_s,
        witness_lambda=worst.witness_lambda,
        samples=sum(r.samples for r in reports),
        seed=seed,
        details=reports,
    )


def _grid_report(condition, margins, U, S, tol, seed=None, lam=None) -> CertReport:
    """Reduce an array of normalized margins; ``np.argmin`` picks the lowest index on ties."""
    margins = np.asarray(margins, dtype=float).ravel()
    bad = ~np.isfinite(margins)
    if bad.any():
        margins = np.where(bad, -np.inf, margins)
    k = int(np.argmin(margins))
    worst = float(margins[k])
    witness_lambda = None
    if lam is not None:
        witness_lambda = tuple(float(v) for v in np.atleast_1d(lam[k]))
    return CertReport(
        condition=condition,
        passed=worst >= -tol,
        worst_margin=worst,
        witness_u=float(np.ravel(U)[k]),
        witness_s=None if S is None else float(np.ravel(S)[k]),
        witness_lambda=witness_lambda,
        samples=margins.size,
        seed=seed,
    )


def _normalized(slack, scale):
    with np.errstate(invalid="ignore"):
        return np.asarray(slack, dtype=float) / (1.0 + np.abs(np.asarray(scale, dtype=float)))


def _box_grid(box: AdmissibilityBox, n_u: int, n_s: int):
    if n_u < 2 or n_s < 2:
        raise ValueError("sample counts must be >= 2")
    u = np.linspace(box.u_lo, box.u_hi, n_u)
    s = np.linspace(box.grad_sq_min, box.grad_sq_max, n_s)
    U, S = np.meshgrid(u, s, indexing="ij")
    return U.ravel(), S.ravel()


# ---------------------------------------------------------------------------
# scalar quadratic
# ---------------------------------------------------------------------------

def quadratic_min_closed_form(q: QuadraticForm) -> float:
    """Exact infimum over ``L in R^(d-1)`` of ``c + b sum(L) + a |L|^2``.

    Each coordinate sits at ``-b / (2a)``, giving ``c - (d-1) b^2 / (4a)``.
    Nonnegativity is the same statement as ``(d-1) b^2 <= 4ac``.
    """
    if q.dim == 1:
        return float(q.c)
    if not q.a > 0:
        raise ValueError(f"closed form needs a > 0, got a={q.a}")
    return float(q.c - (q.dim - 1) * q.b * q.b / (4.0 * q.a))


def quadratic_min_brute_force(
    q: QuadraticForm, radius: float, n_steps: int, zoom_levels: int = 0
) -> float:
    """Grid-search minimum of the quadratic over ``[-radius, radius]^(d-1)``.

    With ``zoom_levels > 0`` the search re-grids a shrinking box (two cells
    either side) around the incumbent, so high dimensions stay affordable.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_steps < 3:
        raise ValueError("n_steps must be >= 3")
    k = q.dim - 1
    if k == 0:
        return float(q.c)
    center = np.zeros(k)
    half = float(radius)
    best = np.inf
    for _ in range(zoom_levels + 1):
        axis = np.linspace(-half, half, n_steps)
        step = axis[1] - axis[0]
        best_pt, best_val = center, np.inf
        chunk = max(1, 2_000_000 // n_steps ** max(k - 1, 0))
        for start in range(0, n_steps, chunk):
            head = axis[start:start + chunk]
            pts = np.stack(np.meshgrid(head, *([axis] * (k - 1)), indexing="ij"), axis=-1)
            pts = pts.reshape(-1, k) + center
            vals = q(pts)
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val, best_pt = float(vals[j]), pts[j]
        best = min(best, best_val)
        center = best_pt
        half = 2.0 * step
    return float(best)


# ---------------------------------------------------------------------------
# differential inequality on {X p = 0}
# ---------------------------------------------------------------------------

def _require_tables(model: ModelSpec) -> None:
    if not isinstance(model, (_GForm, _PsiForm)):
        raise UnsupportedModelError(f"{type(model).__name__} has no derivative tables")


def _closed_form_layer(model: ModelSpec, n_u: int, n_s: int, tol: float) -> CertReport:
    d = model.dim
    U, S = _box_grid(model.box, n_u, n_s)
    with np.errstate(all="ignore"):
        a, b, c = (np.broadcast_to(x, U.shape).astype(float) for x in model.quadratic_coefficients(U, S))
        scale = np.abs(a) + np.abs(b) + np.abs(c)
        lam = None
        if d == 1:
            value = c
        else:
            positive = a > 0
            safe_a = np.where(positive, a, 1.0)
            value = np.where(
                positive,
                c - (d - 1) * b * b / (4.0 * safe_a),
                # a <= 0: the quadratic is bounded below only if b = 0 (and a = 0);
                # -|b| and a stand in for the unbounded infimum.
                np.minimum(c, np.minimum(a, -np.abs(b))),
            )
            lam = np.where(positive, -b / (2.0 * safe_a), np.nan)[:, None] * np.ones(d - 1)
    return _grid_report("closed_form", _normalized(value, scale), U, S, tol, lam=lam)


def _inequality_lhs(model: ModelSpec, X, p, u):
    """Raw left side ``-D_X F : X^2 + |p|^2 D_u F + D_x F . p`` and its magnitude."""
    A = model._dX_F(X, p, u)
    s = float(p @ p)
    t1 = -float(np.sum(A * (X @ X)))
    t2 = s * model._du_F(X, p, u)
    t3 = float(model.dx_F(X, p, u) @ p)
    return t1 + t2 + t3, abs(t1) + abs(t2) + abs(t3)


def _frame(p_hat: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    d = p_hat.size
    M = np.column_stack([p_hat, rng.standard_normal((d, d - 1))])
    Q, _ = np.linalg.qr(M)
    if Q[:, 0] @ p_hat < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def _random_matrix_layer(model: ModelSpec, n_samples: int, seed: int, tol: float) -> CertReport:
    d, box = model.dim, model.box
    rng = np.random.default_rng(seed)
    corners = list(itertools.product((box.u_lo, box.u_hi), (box.grad_sq_min, box.grad_sq_max)))
    best = None
    for k in range(n_samples):
        if k < len(corners):
            u, s = corners[k]
        else:
            u = rng.uniform(box.u_lo, box.u_hi)
            s = rng.uniform(box.grad_sq_min, box.grad_sq_max)
        direction = rng.standard_normal(d)
        p_hat = direction / np.linalg.norm(direction)
        p = np.sqrt(s) * p_hat
        Q = _frame(p_hat, rng)
        lam0 = rng.choice((-1.0, 1.0), d - 1) * 10.0 ** rng.uniform(-2, 2, d - 1)

        def build(lam):
            return (Q * np.concatenate(([0.0], lam))) @ Q.T

        def slack(lam):
            lhs, _ = _inequality_lhs(model, build(lam), p, u)
            return -lhs

        X = build(lam0)
        xp = np.linalg.norm(X @ p)
        if xp > XP_TOL * (1 + np.linalg.norm(X) * np.linalg.norm(p)):
            raise AssertionError(f"frame construction lost X p = 0 (|Xp| = {xp:g})")
        lam = lam0
        if d > 1:
            with np.errstate(all="ignore"):
                res = optimize.minimize(slack, lam0, method="BFGS")
            if np.all(np.isfinite(res.x)) and res.fun < slack(lam0):
                lam = res.x
        lhs, scale = _inequality_lhs(model, build(lam), p, u)
        margin = float(_normalized(-lhs, scale))
        if not np.isfinite(margin):
            margin = -np.inf
        if best is None or margin < best[0]:
            best = (margin, u, s, lam)
    margin, u, s, lam = best
    return CertReport(
        condition="random_matrix",
        passed=margin >= -tol,
        worst_margin=margin,
        witness_u=float(u),
        witness_s=float(s),
        witness_lambda=tuple(float(v) for v in lam),
        samples=n_samples,
        seed=seed,
    )


def check_differential_inequality_A(
    model: ModelSpec,
    n_u: int = DEFAULT_SAMPLES,
    n_s: int = DEFAULT_SAMPLES,
    n_matrix_samples: int = DEFAULT_MATRIX_SAMPLES,
    seed: int = 0,
    tol: float = TOL_CERT,
) -> CertReport:
    """Check ``-D_X F : X^2 + |p|^2 D_u F + D_x F . p <= 0`` on the box for ``X p = 0``."""
    _require_tables(model)
    if n_matrix_samples < 2:
        raise ValueError("n_matrix_samples must be >= 2")
    layer1 = _closed_form_layer(model, n_u, n_s, tol)
    layer2 = _random_matrix_layer(model, n_matrix_samples, seed, tol)
    return _combine("inequality_A", (layer1, layer2), seed=seed)


# ---------------------------------------------------------------------------
# G and psi conditions
# ---------------------------------------------------------------------------

def check_G_condition(
    g: GTable, dim: int, u_lo: float, u_hi: float, n_u: int = DEFAULT_SAMPLES, tol: float = TOL_CERT
) -> CertReport:
    """G' >= 0, (d-1)/4 G''^2 <= -G''' G', and the implied sign G''' <= 0."""
    if u_lo > u_hi:
        raise ValueError(f"empty interval [{u_lo}, {u_hi}]")
    u = np.linspace(u_lo, u_hi, n_u)
    with np.errstate(all="ignore"):
        g1, g2, g3 = (np.broadcast_to(f(u), u.shape) for f in (g.dg, g.d2g, g.d3g))
        quad = 0.25 * (dim - 1) * g2 * g2
        reports = (
            _grid_report("g_monotone", _normalized(g1, g1), u, None, tol),
            _grid_report("g_condition", _normalized(-quad - g3 * g1, quad + np.abs(g3 * g1)), u, None, tol),
            _grid_report("g_third_sign", _normalized(-g3, g3), u, None, tol),
        )
    return _combine("g_condition", reports)


def check_psi_condition(
    psi: PsiTable,
    dim: int,
    box: AdmissibilityBox,
    n_u: int = DEFAULT_SAMPLES,
    n_s: int = DEFAULT_SAMPLES,
    tol: float = TOL_CERT,
) -> CertReport:
    """psi >= 0, psi + 2 s D_s psi >= 0, and (d-1)/4 (D_u psi)^2 <= -psi D_uu psi."""
    U, S = _box_grid(box, n_u, n_s)
    with np.errstate(all="ignore"):
        val = np.broadcast_to(psi.psi(U, S), U.shape)
        radial = np.broadcast_to(psi.radial_diffusivity(U, S), U.shape)
        du = np.broadcast_to(psi.du(U, S), U.shape)
        duu = np.broadcast_to(psi.duu(U, S), U.shape)
        quad = 0.25 * (dim - 1) * du * du
        reports = (
            _grid_report("psi_nonneg", _normalized(val, val), U, S, tol),
            _grid_report("psi_radial", _normalized(radial, np.abs(val) + np.abs(radial)), U, S, tol),
            _grid_report(
                "psi_condition", _normalized(-val * duu - quad, np.abs(val * duu) + quad), U, S, tol
            ),
        )
    return _combine("psi_condition", reports)


def check_parabolicity(
    model: ModelSpec,
    n_samples: int = 200,
    seed: int = 0,
    tol: float = TOL_CERT,
    box: AdmissibilityBox | None = None,
) -> CertReport:
    """Monotonicity of F in X on random ordered pairs ``X <= Y = X + P^T P``.

    ``box`` overrides the sampling region, e.g. to probe beyond the model's own box.
    For psi-form models both diffusion eigenvalues are also scanned on a grid.
    """
    _require_tables(model)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    box = box or model.box
    d = model.dim
    rng = np.random.default_rng(seed)
    margins, us, ss = [], [], []
    for k in range(n_samples):
        u = rng.uniform(box.u_lo, box.u_hi)
        s = box.grad_sq_max if k == 0 else rng.uniform(box.grad_sq_min, box.grad_sq_max)
        direction = rng.standard_normal(d)
        p = np.sqrt(s) * direction / np.linalg.norm(direction)
        B = rng.standard_normal((d, d))
        X = 0.5 * (B + B.T)
        # rank one increment along p half of the time: the radial eigenvalue lives there
        v = p / max(np.linalg.norm(p), 1e-300) if k % 2 == 0 and s > 0 else rng.standard_normal(d)
        P = v[None, :]
        Y = X + P.T @ P
        fx, fy = model._F(X, p, u), model._F(Y, p, u)
        margins.append(float(_normalized(fy - fx, abs(fx) + abs(fy))))
        us.append(u)
        ss.append(s)
    reports = [_grid_report("ordered_pairs", margins, us, ss, tol, seed=seed)]
    if isinstance(model, _PsiForm):
        U, S = _box_grid(box, 51, 51)
        with np.errstate(all="ignore"):
            tang, rad = (np.broadcast_to(x, U.shape) for x in model.diffusivities(U, S))
        reports.append(_grid_report("tangential_diffusivity", _normalized(tang, tang), U, S, tol))
        reports.append(_grid_report("radial_diffusivity", _normalized(rad, rad), U, S, tol))
    return _combine("parabolicity", reports, seed=seed)


def check_constant_solutions(model: ModelSpec, n_u: int = DEFAULT_SAMPLES, tol: float = TOL_CERT) -> CertReport:
    """F(0, 0, C) = 0 for every constant C in the box."""
    d = model.dim
    u = np.linspace(model.box.u_lo, model.box.u_hi, n_u)
    zero_x, zero_p = np.zeros((d, d)), np.zeros(d)
    with np.errstate(all="ignore"):
        vals = np.array([model._F(zero_x, zero_p, float(c)) for c in u])
    return _grid_report("constant_solutions", _normalized(-np.abs(vals), 0.0), u, None, tol)


def certify_model(
    model: ModelSpec,
    n_u: int = DEFAULT_SAMPLES,
    n_s: int = DEFAULT_SAMPLES,
    n_matrix_samples: int = DEFAULT_MATRIX_SAMPLES,
    seed: int = 0,
    tol: float = TOL_CERT,
) -> list[CertReport]:
    """Run every applicable check on ``model`` over its own box."""
    _require_tables(model)
    box = model.box
    reports = [
        check_constant_solutions(model, n_u, tol),
        check_parabolicity(model, seed=seed, tol=tol),
    ]
    if isinstance(model, _GForm):
        reports.append(check_G_condition(model.table, model.dim, box.u_lo, box.u_hi, n_u, tol))
    else:
        reports.append(check_psi_condition(model.table, model.dim, box, n_u, n_s, tol))
    reports.append(check_differential_inequality_A(model, n_u, n_s, n_matrix_samples, seed, tol))
    logger.debug("certified %s: %s", model.name, [r.verdict for r in reports])
    return reports


def with_box(model: ModelSpec, **overrides) -> ModelSpec:
    """Copy of ``model`` with some box bounds replaced; model invariants are re-validated."""
    return replace(model, box=replace(model.box, **overrides))
