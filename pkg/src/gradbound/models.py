"""Model equations u_t = F(D^2u, Du, u) with closed-form coefficient derivatives.

Two families are supported:

* G-form, ``u_t = Lap G(u)`` with ``F = G'(u) tr X + G''(u)|p|^2`` (PME, polynomial G);
* psi-form, ``u_t = div(psi(u, |Du|^2) Du)`` with
  ``F = (psi Id + 2 D_s psi p p^T) : X + D_u psi |p|^2`` (hydrology models,
  doubly nonlinear diffusion).

Every model is autonomous, so ``D_x F`` is identically zero. Vectorized helpers
(``quadratic_coefficients``, ``diffusivities``, ``face_flux``) broadcast over numpy
arrays; the pointwise ``eval_F``/``dX_F``/``du_F`` accept one ``(X, p, u)`` triple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar, Sequence

import numpy as np

from .thresholds import hydrology_delta

BOX_TOL = 1e-12

Array = np.ndarray
ScalarFn = Callable[[Array], Array]
PairFn = Callable[[Array, Array], Array]


class DomainError(ValueError):
    """An evaluation point lies outside the model's admissibility box."""


class UnsupportedModelError(TypeError):
    """The model lacks the derivative tables a check needs."""


@dataclass(frozen=True)
class AdmissibilityBox:
    """Closed box of admissible states: ``u_lo <= u <= u_hi`` and
    ``grad_sq_min <= |Du|^2 <= grad_sq_max``."""

    u_lo: float
    u_hi: float
    grad_sq_max: float
    dim: int
    grad_sq_min: float = 0.0

    def __post_init__(self):
        if not self.u_lo <= self.u_hi:
            raise ValueError(f"empty u-range [{self.u_lo}, {self.u_hi}]")
        if not 0.0 <= self.grad_sq_min <= self.grad_sq_max:
            raise ValueError(
                f"invalid gradient range [{self.grad_sq_min}, {self.grad_sq_max}]"
            )
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def check(self, u: float, s: float) -> None:
        """Raise DomainError naming the first violated bound."""
        if u < self.u_lo - BOX_TOL * (1 + abs(self.u_lo)):
            raise DomainError(f"u={u!r} below u_lo={self.u_lo!r}")
        if u > self.u_hi + BOX_TOL * (1 + abs(self.u_hi)):
            raise DomainError(f"u={u!r} above u_hi={self.u_hi!r}")
        if s > self.grad_sq_max * (1 + BOX_TOL) + BOX_TOL:
            raise DomainError(f"|p|^2={s!r} above grad_sq_max={self.grad_sq_max!r}")
        if s < self.grad_sq_min * (1 - BOX_TOL) - BOX_TOL:
            raise DomainError(f"|p|^2={s!r} below grad_sq_min={self.grad_sq_min!r}")


def _mono(coef: float, u, expo: float):
    """``coef * u**expo`` that stays finite (zero) when ``coef == 0``."""
    u = np.asarray(u, dtype=float)
    if coef == 0.0:
        return np.zeros_like(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        return coef * u**expo


@dataclass(frozen=True)
class GTable:
    g: ScalarFn
    dg: ScalarFn
    d2g: ScalarFn
    d3g: ScalarFn
    label: str = "G"

    @classmethod
    def power(cls, m: float) -> GTable:
        return cls(
            g=lambda u: _mono(1.0, u, m),
            dg=lambda u: _mono(m, u, m - 1),
            d2g=lambda u: _mono(m * (m - 1), u, m - 2),
            d3g=lambda u: _mono(m * (m - 1) * (m - 2), u, m - 3),
            label=f"u^{m:g}",
        )

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> GTable:
        """G(u) = sum_k coeffs[k] u^k."""
        poly = np.polynomial.Polynomial([float(c) for c in coeffs])
        d1, d2, d3 = poly.deriv(1), poly.deriv(2), poly.deriv(3)
        return cls(
            g=lambda u: poly(np.asarray(u, dtype=float)),
            dg=lambda u: d1(np.asarray(u, dtype=float)),
            d2g=lambda u: d2(np.asarray(u, dtype=float)),
            d3g=lambda u: d3(np.asarray(u, dtype=float)),
            label="poly(" + ",".join(f"{c:g}" for c in coeffs) + ")",
        )


@dataclass(frozen=True)
class PsiTable:
    """psi(u, s) with s = |Du|^2 and its partials.

    ``radial`` is ``psi + 2 s D_s psi``; it defaults to that expression but can be
    given directly where ``D_s psi`` is singular at ``s = 0``.
    """

    psi: PairFn
    du: PairFn
    ds: PairFn
    duu: PairFn
    dus: PairFn
    label: str = "psi"
    radial: PairFn | None = None

    def radial_diffusivity(self, u, s):
        if self.radial is not None:
            return self.radial(u, s)
        return self.psi(u, s) + 2.0 * np.asarray(s) * self.ds(u, s)

    @classmethod
    def hydrology_full(cls) -> PsiTable:
        return cls(
            psi=lambda u, s: u * (1 - u) / (1 + s),
            du=lambda u, s: (1 - 2 * u) / (1 + s),
            ds=lambda u, s: -u * (1 - u) / (1 + s) ** 2,
            duu=lambda u, s: -2.0 / (1 + s) + 0 * u,
            dus=lambda u, s: -(1 - 2 * u) / (1 + s) ** 2,
            label="u(1-u)/(1+s)",
            radial=lambda u, s: u * (1 - u) * (1 - s) / (1 + s) ** 2,
        )

    @classmethod
    def hydrology_simplified(cls) -> PsiTable:
        zero = lambda u, s: 0.0 * u + 0.0 * s  # noqa: E731
        return cls(
            psi=lambda u, s: u * (1 - u) + 0.0 * s,
            du=lambda u, s: 1 - 2 * u + 0.0 * s,
            ds=zero,
            duu=lambda u, s: -2.0 + 0.0 * u + 0.0 * s,
            dus=zero,
            label="u(1-u)",
        )

    @classmethod
    def doubly_nonlinear(cls, m: float, p_exp: float) -> PsiTable:
        """psi = (m u^(m-1))^(p-1) s^((p-2)/2), the flux of Delta_p(u^m).

        ``D_s psi`` is reported as 0 at ``s = 0``; it only ever enters multiplied
        by ``p p^T`` or ``s``, both of which vanish there.
        """
        if p_exp < 1:
            raise ValueError(f"p_exp must be >= 1, got {p_exp}")
        k = m ** (p_exp - 1)
        alpha = (m - 1) * (p_exp - 1)
        beta = (p_exp - 2) / 2

        def s_pow(s, e):
            s = np.asarray(s, dtype=float)
            if e == 0:
                return np.ones_like(s)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(s > 0, s ** e, 0.0 if e > 0 else np.inf)

        def s_pow_reg(s, e):
            s = np.asarray(s, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(s > 0, s ** e, 0.0)

        psi = lambda u, s: _mono(k, u, alpha) * s_pow(s, beta)  # noqa: E731
        return cls(
            psi=psi,
            du=lambda u, s: _mono(k * alpha, u, alpha - 1) * s_pow(s, beta),
            ds=lambda u, s: beta * _mono(k, u, alpha) * s_pow_reg(s, beta - 1),
            duu=lambda u, s: _mono(k * alpha * (alpha - 1), u, alpha - 2) * s_pow(s, beta),
            dus=lambda u, s: beta * _mono(k * alpha, u, alpha - 1) * s_pow_reg(s, beta - 1),
            label=f"doubly_nonlinear(m={m:g},p={p_exp:g})",
            radial=lambda u, s: (p_exp - 1) * psi(u, s),
        )


class ModelSpec:
    """Common interface of the shipped models.

    Subclasses are frozen dataclasses carrying a ``box`` and either a G-table or a
    psi-table.
    """

    kind: ClassVar[str] = "abstract"
    box: AdmissibilityBox

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def name(self) -> str:
        return self.kind

    # pointwise interface -------------------------------------------------
    def _check_point(self, X, p, u):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if X.shape != (self.dim, self.dim) or p.shape != (self.dim,):
            raise ValueError(
                f"expected X of shape {(self.dim, self.dim)} and p of shape {(self.dim,)}"
            )
        self.box.check(float(u), float(p @ p))
        return X, p, float(u)

    def eval_F(self, X, p, u) -> float:
        X, p, u = self._check_point(X, p, u)
        return self._F(X, p, u)

    def dX_F(self, X, p, u) -> np.ndarray:
        X, p, u = self._check_point(X, p, u)
        return self._dX_F(X, p, u)

    def du_F(self, X, p, u) -> float:
        X, p, u = self._check_point(X, p, u)
        return self._du_F(X, p, u)

    def dx_F(self, X, p, u) -> np.ndarray:
        return np.zeros(self.dim)

    def effective_diffusivities(self, u: float, s: float) -> tuple[float, float]:
        """Tangential and radial eigenvalues of the diffusion tensor ``D_X F``."""
        self.box.check(float(u), float(s))
        a, b = self.diffusivities(u, s)
        return float(a), float(b)

    # vectorized interface ------------------------------------------------
    def diffusivities(self, u, s):
        raise NotImplementedError

    def quadratic_coefficients(self, u, s):
        """(a, b, c) with ``a tr(X^2) + b tr(X) + c >= 0`` equivalent to the
        differential inequality on ``{X p = 0}``, at ``|p|^2 = s``."""
        raise NotImplementedError

    def face_flux(self, u_left, u_right, grad_face, axis: int, h: float):
        raise NotImplementedError

    def _F(self, X, p, u):
        raise NotImplementedError

    def _dX_F(self, X, p, u):
        raise NotImplementedError

    def _du_F(self, X, p, u):
        raise NotImplementedError


class _GForm(ModelSpec):
    g: GTable

    @property
    def table(self) -> GTable:
        return self.g

    def _F(self, X, p, u):
        g = self.table
        return float(g.dg(u) * np.trace(X) + g.d2g(u) * (p @ p))

    def _dX_F(self, X, p, u):
        return float(self.table.dg(u)) * np.eye(self.dim)

    def _du_F(self, X, p, u):
        g = self.table
        return float(g.d2g(u) * np.trace(X) + g.d3g(u) * (p @ p))

    def diffusivities(self, u, s):
        d = self.table.dg(u) + 0.0 * np.asarray(s, dtype=float)
        return d, d

    def quadratic_coefficients(self, u, s):
        g = self.table
        s = np.asarray(s, dtype=float)
        a = g.dg(u) + 0.0 * s
        b = -s * g.d2g(u)
        c = -s * s * g.d3g(u)
        return a, b, c

    def face_flux(self, u_left, u_right, grad_face, axis: int, h: float):
        g = self.table.g
        return (g(u_right) - g(u_left)) / h


@dataclass(frozen=True)
class GDiffusion(_GForm):
    box: AdmissibilityBox
    g: GTable
    kind: ClassVar[str] = "gdiff"

    @property
    def name(self) -> str:
        return f"gdiff:{self.g.label}"


@dataclass(frozen=True)
class PME(_GForm):
    """Porous medium equation u_t = Lap(u^m), m >= 1."""

    box: AdmissibilityBox
    m: float
    kind: ClassVar[str] = "pme"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"PME requires m >= 1, got {self.m}")
        if self.box.u_lo < 0:
            raise ValueError("PME box must have u_lo >= 0")

    @property
    def name(self) -> str:
        return f"pme(m={self.m:g})"

    @cached_property
    def table(self) -> GTable:
        return GTable.power(self.m)

    def _F(self, X, p, u):
        m = self.m
        return float(_mono(m, u, m - 1) * np.trace(X) + _mono(m * (m - 1), u, m - 2) * (p @ p))


class _PsiForm(ModelSpec):
    psi: PsiTable

    @property
    def table(self) -> PsiTable:
        return self.psi

    def _F(self, X, p, u):
        t, s = self.table, float(p @ p)
        A = t.psi(u, s) * np.eye(self.dim) + 2.0 * t.ds(u, s) * np.outer(p, p)
        return float(np.sum(A * X) + t.du(u, s) * s)

    def _dX_F(self, X, p, u):
        t, s = self.table, float(p @ p)
        return float(t.psi(u, s)) * np.eye(self.dim) + 2.0 * float(t.ds(u, s)) * np.outer(p, p)

    def _du_F(self, X, p, u):
        t, s = self.table, float(p @ p)
        B = t.du(u, s) * np.eye(self.dim) + 2.0 * t.dus(u, s) * np.outer(p, p)
        return float(np.sum(B * X) + t.duu(u, s) * s)

    def diffusivities(self, u, s):
        t = self.table
        return t.psi(u, s), t.radial_diffusivity(u, s)

    def quadratic_coefficients(self, u, s):
        t = self.table
        s = np.asarray(s, dtype=float)
        a = t.psi(u, s)
        b = -s * t.du(u, s)
        c = -s * s * t.duu(u, s)
        return a, b, c

    def face_flux(self, u_left, u_right, grad_face, axis: int, h: float):
        u_face = 0.5 * (np.asarray(u_left, dtype=float) + np.asarray(u_right, dtype=float))
        s = sum(np.asarray(gc, dtype=float) ** 2 for gc in grad_face)
        return self.table.psi(u_face, s) * grad_face[axis]


@dataclass(frozen=True)
class PsiDiffusion(_PsiForm):
    box: AdmissibilityBox
    psi: PsiTable
    kind: ClassVar[str] = "psi"

    @property
    def name(self) -> str:
        return f"psi:{self.psi.label}"


@dataclass(frozen=True)
class HydrologyFull(_PsiForm):
    """u_t = div(u(1-u) Du / (1 + |Du|^2))."""

    box: AdmissibilityBox
    psi: PsiTable = field(default_factory=PsiTable.hydrology_full, repr=False)
    kind: ClassVar[str] = "psi:hydrology_full"

    def __post_init__(self):
        if self.box.grad_sq_max > 1.0:
            raise ValueError("hydrology_full requires grad_sq_max <= 1")


@dataclass(frozen=True)
class HydrologySimplified(_PsiForm):
    """u_t = div(u(1-u) Du)."""

    box: AdmissibilityBox
    psi: PsiTable = field(default_factory=PsiTable.hydrology_simplified, repr=False)
    kind: ClassVar[str] = "psi:hydrology_simple"


@dataclass(frozen=True)
class DoublyNonlinear(_PsiForm):
    """u_t = Delta_p(u^m) = div(|D u^m|^(p-2) D u^m)."""

    box: AdmissibilityBox
    m: float
    p_exp: float
    kind: ClassVar[str] = "doubly_nonlinear"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"doubly nonlinear model requires m >= 1, got {self.m}")
        if self.p_exp < 2:
            raise ValueError(f"doubly nonlinear model requires p_exp >= 2, got {self.p_exp}")

    @property
    def name(self) -> str:
        return f"doubly_nonlinear(m={self.m:g},p={self.p_exp:g})"

    @cached_property
    def table(self) -> PsiTable:
        return PsiTable.doubly_nonlinear(self.m, self.p_exp)

    @property
    def alpha(self) -> float:
        return (self.m - 1) * (self.p_exp - 1)


ALIASES = {
    "pme": "pme",
    "gdiff": "gdiff:poly",
    "gdiff:poly": "gdiff:poly",
    "hydrology_full": "psi:hydrology_full",
    "psi:hydrology_full": "psi:hydrology_full",
    "hydrology_simple": "psi:hydrology_simple",
    "hydrology_simplified": "psi:hydrology_simple",
    "psi:hydrology_simple": "psi:hydrology_simple",
    "doubly_nonlinear": "doubly_nonlinear",
}

MODEL_NAMES = tuple(sorted(set(ALIASES.values())))

# Default boxes; G-form models carry no gradient restriction so L is generous.
DEFAULT_U_RANGE = (0.01, 1.0)
DEFAULT_GRAD_SQ_MAX = 100.0
DN_U_RANGE = (0.1, 1.0)
DN_GRAD_SQ_RANGE = (0.01, 1.0)


def canonical_name(name: str) -> str:
    try:
        return ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}"
        ) from None


def builtin_model(
    name: str,
    params: Sequence[float] = (),
    dim: int = 1,
    *,
    u_lo: float | None = None,
    u_hi: float | None = None,
    grad_sq_max: float | None = None,
    grad_sq_min: float | None = None,
) -> ModelSpec:
    """Construct a shipped model with its default admissibility box.

    ``params``: ``pme`` -> [m]; ``gdiff:poly`` -> polynomial coefficients of G
    (constant term first); ``psi:hydrology_simple`` -> optional [M] (gradient
    bound, default 1); ``doubly_nonlinear`` -> [m, p_exp]; ``psi:hydrology_full``
    takes none. Keyword overrides replace individual box bounds.
    """
    key = canonical_name(name)
    params = [float(v) for v in params]

    def box(lo, hi, smax, smin=0.0):
        return AdmissibilityBox(
            u_lo=lo if u_lo is None else float(u_lo),
            u_hi=hi if u_hi is None else float(u_hi),
            grad_sq_max=smax if grad_sq_max is None else float(grad_sq_max),
            dim=dim,
            grad_sq_min=smin if grad_sq_min is None else float(grad_sq_min),
        )

    if key == "pme":
        if len(params) != 1:
            raise ValueError("pme takes exactly one parameter: m")
        return PME(box(*DEFAULT_U_RANGE, DEFAULT_GRAD_SQ_MAX), params[0])
    if key == "gdiff:poly":
        if not params:
            raise ValueError("gdiff:poly needs at least one coefficient")
        return GDiffusion(box(*DEFAULT_U_RANGE, DEFAULT_GRAD_SQ_MAX), GTable.polynomial(params))
    delta = hydrology_delta(dim)
    if key == "psi:hydrology_full":
        if params:
            raise ValueError("hydrology_full takes no parameters")
        return HydrologyFull(box(0.5 - delta, 0.5 + delta, 1.0))
    if key == "psi:hydrology_simple":
        if len(params) > 1:
            raise ValueError("hydrology_simple takes at most one parameter: M")
        bound = params[0] if params else 1.0
        if not bound > 0 or not math.isfinite(bound):
            raise ValueError(f"gradient bound M must be positive, got {bound}")
        return HydrologySimplified(box(0.5 - delta, 0.5 + delta, bound * bound))
    if key == "doubly_nonlinear":
        if len(params) != 2:
            raise ValueError("doubly_nonlinear takes two parameters: m, p_exp")
        return DoublyNonlinear(box(*DN_U_RANGE, DN_GRAD_SQ_RANGE[1], DN_GRAD_SQ_RANGE[0]), *params)
    raise AssertionError(key)


def eval_F(model: ModelSpec, X, p, u) -> float:
    return model.eval_F(X, p, u)


def face_flux(model: ModelSpec, u_left, u_right, grad_face, axis: int, h: float):
    return model.face_flux(u_left, u_right, grad_face, axis, h)


def effective_diffusivities(model: ModelSpec, u: float, s: float) -> tuple[float, float]:
    return model.effective_diffusivities(u, s)
