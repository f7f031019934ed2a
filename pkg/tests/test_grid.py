from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradbound.grid import (
    PeriodicGrid,
    ScalarField,
    VectorField,
    divergence_of_face_flux,
    field_minmax,
    gradient_centered,
    hessian_centered,
    mass,
    read_snapshot,
    sup_grad_norm,
    write_snapshot,
)

TWO_PI = 2 * np.pi


def sine_1d(n, mean=0.5, amp=0.4):
    g = PeriodicGrid(1, n)
    return ScalarField.from_function(g, lambda x: mean + amp * np.sin(TWO_PI * x))


class TestPeriodicGrid:
    @pytest.mark.parametrize("dim,n", [(1, 4), (1, 256), (2, 8), (2, 33)])
    def test_spacing_and_size(self, dim, n):
        g = PeriodicGrid(dim, n)
        assert g.h * n == pytest.approx(1.0, abs=1e-15)
        assert g.size == n**dim
        assert g.shape == (n,) * dim

    @pytest.mark.parametrize("dim,n", [(0, 8), (3, 8), (1, 3), (2, 2)])
    def test_rejects_bad_shape(self, dim, n):
        with pytest.raises(ValueError):
            PeriodicGrid(dim, n)

    def test_face_coords_offset_half_cell(self):
        g = PeriodicGrid(2, 8)
        x, y = g.face_coords(0)
        assert x[1, 0] == pytest.approx(1.5 / 8)
        assert y[0, 1] == pytest.approx(1 / 8)


class TestFields:
    def test_values_reshaped_and_validated(self):
        g = PeriodicGrid(2, 4)
        f = ScalarField(g, np.arange(16.0))
        assert f.values.shape == (4, 4)
        with pytest.raises(ValueError):
            ScalarField(g, np.arange(15.0))

    def test_vector_field_component_count(self):
        g = PeriodicGrid(2, 4)
        with pytest.raises(ValueError):
            VectorField(g, (np.zeros((4, 4)),))

    def test_shift_is_roll(self):
        f = sine_1d(16)
        assert np.array_equal(f.shifted(3).values, np.roll(f.values, 3))


class TestGradient:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_constant_exactly_zero(self, dim):
        f = ScalarField.constant(PeriodicGrid(dim, 16), 0.37)
        for comp in gradient_centered(f).components:
            assert np.all(comp == 0.0)

    @pytest.mark.parametrize("func,deriv", [
        (lambda x: np.sin(TWO_PI * x), lambda x: TWO_PI * np.cos(TWO_PI * x)),
        (lambda x: np.cos(TWO_PI * x), lambda x: -TWO_PI * np.sin(TWO_PI * x)),
    ])
    def test_taylor_remainder_bound(self, func, deriv):
        g = PeriodicGrid(1, 256)
        f = ScalarField.from_function(g, func)
        (x,) = g.coords()
        err = np.max(np.abs(gradient_centered(f).components[0] - deriv(x)))
        assert err <= TWO_PI**3 * g.h**2 / 6

    def test_second_order_convergence(self):
        errs = []
        for n in (32, 64, 128):
            g = PeriodicGrid(2, n)
            x, y = g.coords()
            f = ScalarField(g, np.sin(TWO_PI * x) * np.cos(TWO_PI * y))
            gx = gradient_centered(f).components[0]
            errs.append(np.max(np.abs(gx - TWO_PI * np.cos(TWO_PI * x) * np.cos(TWO_PI * y))))
        assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5

    def test_hessian_of_separable_field(self):
        g = PeriodicGrid(2, 128)
        x, y = g.coords()
        f = ScalarField(g, np.sin(TWO_PI * x) * np.sin(TWO_PI * y))
        H = hessian_centered(f)
        assert H.shape == (2, 2, 128, 128)
        exact_xy = TWO_PI**2 * np.cos(TWO_PI * x) * np.cos(TWO_PI * y)
        assert np.max(np.abs(H[0, 1] - exact_xy)) < 5e-3 * TWO_PI**2
        assert np.array_equal(H[0, 1], H[1, 0])


class TestSupGradNorm:
    def test_constant(self):
        assert sup_grad_norm(ScalarField.constant(PeriodicGrid(2, 8), 1.0)) == 0.0

    def test_sine_analytic_max(self):
        f = sine_1d(1024, amp=0.1)
        assert sup_grad_norm(f) == pytest.approx(0.2 * np.pi, rel=1e-4)

    def test_2d_against_dense_scan(self):
        g = PeriodicGrid(2, 32)
        x, y = g.coords()
        f = ScalarField(g, np.sin(TWO_PI * x) + np.sin(TWO_PI * y))
        v = f.values
        h = g.h
        best = 0.0
        for i in range(32):
            for j in range(32):
                gx = (v[(i + 1) % 32, j] - v[i - 1, j]) / (2 * h)
                gy = (v[i, (j + 1) % 32] - v[i, j - 1]) / (2 * h)
                best = max(best, np.hypot(gx, gy))
        assert sup_grad_norm(f) == pytest.approx(best, rel=1e-14)
        # the node pair (0, 0) carries the largest |cos| pair
        scale = TWO_PI * np.sqrt(2) * np.sin(TWO_PI * h) / (TWO_PI * h)
        assert best == pytest.approx(scale, rel=1e-12)


class TestDivergence:
    def test_zero_fluxes(self):
        g = PeriodicGrid(2, 8)
        out = divergence_of_face_flux(g, [np.zeros(g.shape)] * 2)
        assert np.all(out.values == 0)

    def test_analytic_derivative(self):
        g = PeriodicGrid(1, 256)
        (xf,) = g.face_coords(0)
        (x,) = g.coords()
        out = divergence_of_face_flux(g, [np.sin(TWO_PI * xf)])
        assert np.max(np.abs(out.values - TWO_PI * np.cos(TWO_PI * x))) < TWO_PI**3 * g.h**2 / 24 * 1.01

    @settings(max_examples=50, deadline=None)
    @given(st.integers(4, 12), st.integers(1, 2), st.integers(0, 2**32 - 1))
    def test_telescopes_to_zero(self, n, dim, seed):
        g = PeriodicGrid(dim, n)
        rng = np.random.default_rng(seed)
        fluxes = [rng.normal(size=g.shape) * 10 ** rng.uniform(-3, 3) for _ in range(dim)]
        scale = max(np.max(np.abs(F)) for F in fluxes) / g.h
        total = np.sum(divergence_of_face_flux(g, fluxes).values)
        assert abs(total) <= 1e-12 * scale * g.size

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(-7, 7))
    def test_translation_equivariance(self, seed, k):
        g = PeriodicGrid(2, 8)
        rng = np.random.default_rng(seed)
        fluxes = [rng.normal(size=g.shape) for _ in range(2)]
        shifted = [np.roll(F, k, axis=0) for F in fluxes]
        a = divergence_of_face_flux(g, shifted).values
        b = np.roll(divergence_of_face_flux(g, fluxes).values, k, axis=0)
        assert np.array_equal(a, b)


class TestMinMaxMass:
    def test_constant(self):
        f = ScalarField.constant(PeriodicGrid(2, 8), 0.3)
        assert field_minmax(f) == (0.3, 0.3)
        assert mass(f) == pytest.approx(0.3, abs=1e-15)

    def test_sine_minmax_against_scan(self):
        f = sine_1d(256)
        assert field_minmax(f) == (min(f.values.tolist()), max(f.values.tolist()))
        lo, hi = field_minmax(f)
        assert lo == pytest.approx(0.1, abs=1e-15) and hi == pytest.approx(0.9, abs=1e-15)

    def test_sine_mass_exact(self):
        assert abs(mass(sine_1d(256)) - 0.5) <= 1e-12

    def test_linear(self):
        a, b = sine_1d(64), sine_1d(64, mean=0.2, amp=0.05)
        s = ScalarField(a.grid, a.values + b.values)
        assert mass(s) == pytest.approx(mass(a) + mass(b), abs=1e-15)


class TestSnapshot:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_roundtrip_bit_exact(self, tmp_path, dim):
        g = PeriodicGrid(dim, 8)
        rng = np.random.default_rng(1)
        f = ScalarField(g, rng.random(g.shape))
        path = tmp_path / "snap.txt"
        write_snapshot(path, f, 0.125)
        back, t = read_snapshot(path)
        assert t == 0.125
        assert back.grid == g
        assert np.array_equal(back.values, f.values)
