from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradbound.diagnostics import (
    CSV_COLUMNS,
    OrderingError,
    Row,
    RunDiagnostics,
    record_row,
    verdict_bounds,
    verdicts_text,
    w_rate_at_argmax,
)
from gradbound.grid import PeriodicGrid, ScalarField, sup_grad_norm
from gradbound.models import builtin_model
from gradbound.solver import SolverConfig, initial_sine, run


def synthetic(grads, t_step=0.1):
    diag = RunDiagnostics()
    for k, g in enumerate(grads):
        diag.rows.append(Row(k * t_step, t_step, g, 0.1, 0.9, 0.5))
    return diag


class TestRecordRow:
    def test_initial_row(self):
        u = initial_sine(PeriodicGrid(1, 256), 0.5, 0.4)
        diag = record_row(RunDiagnostics(), 0.0, 0.0, u)
        row = diag.rows[0]
        # centered differences lose (2 pi h)^2 / 6 relative at the peak
        assert row.max_grad == pytest.approx(0.8 * math.pi, rel=(2 * math.pi / 256) ** 2 / 6 * 1.01)
        assert row.w_rate is None

    def test_constant_row(self):
        u = ScalarField.constant(PeriodicGrid(2, 8), 0.3)
        row = record_row(RunDiagnostics(), 0.5, 0.01, u, builtin_model("pme", [2.0], 2)).rows[0]
        assert (row.t, row.dt, row.max_grad, row.u_min, row.u_max) == (0.5, 0.01, 0.0, 0.3, 0.3)
        assert row.mass == pytest.approx(0.3, abs=1e-15)
        assert row.w_rate == 0.0

    def test_time_must_increase(self):
        u = ScalarField.constant(PeriodicGrid(1, 8), 0.3)
        diag = record_row(RunDiagnostics(), 0.1, 0.0, u)
        with pytest.raises(OrderingError):
            record_row(diag, 0.1, 0.0, u)
        with pytest.raises(OrderingError):
            record_row(diag, 0.05, 0.0, u)

    def test_rows_match_snapshots(self):
        model = builtin_model("pme", [2.0], 1)
        cfg = SolverConfig(n=64, dim=1, t_end=0.01, output_every=0.005, snapshot_times=[0.005, 0.01])
        _, diag = run(model, initial_sine(PeriodicGrid(1, 64), 0.5, 0.4), cfg)
        by_time = {r.t: r for r in diag.rows}
        for t, snap in diag.snapshots:
            assert by_time[t].max_grad == sup_grad_norm(snap)


class TestWRate:
    def test_constant(self):
        u = ScalarField.constant(PeriodicGrid(1, 16), 0.4)
        assert w_rate_at_argmax(builtin_model("pme", [2.0]), u) == 0.0

    def test_heat_sine_near_zero(self):
        heat = builtin_model("pme", [1.0], 1, u_lo=0.0)
        for n in (64, 128):
            u = initial_sine(PeriodicGrid(1, n), 0.5, 0.1)
            # argmax of |u_x| sits where u_xx vanishes
            assert abs(w_rate_at_argmax(heat, u)) <= (2 * math.pi) ** 4 * 0.01 / n**2

    def test_argmax_tie_lowest_index(self):
        heat = builtin_model("pme", [1.0], 1, u_lo=0.0)
        g = PeriodicGrid(1, 8)
        # |Du| ties at nodes 1 and 3; D^2u is 0.6/h^2 at node 1 and 1/h^2 at node 3
        u = ScalarField(g, np.array([0.0, 0.2, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
        assert w_rate_at_argmax(heat, u) == pytest.approx(-(0.6 / g.h**2) ** 2, rel=1e-12)

    def test_uses_hessian_squared(self):
        heat = builtin_model("pme", [1.0], 1, u_lo=0.0, u_hi=10.0)
        g = PeriodicGrid(1, 64)
        x = g.coords()[0]
        u = ScalarField(g, 1.0 + 0.1 * np.sin(2 * np.pi * x) + 0.05 * np.cos(4 * np.pi * x))
        assert w_rate_at_argmax(heat, u) < 0.0


class TestVerdicts:
    def test_empty(self):
        with pytest.raises(ValueError):
            verdict_bounds(RunDiagnostics())

    def test_single_row_passes(self):
        verdicts = verdict_bounds(synthetic([1.0]))
        assert all(v.passed for v in verdicts.values())

    def test_growth_fails_at_its_time(self):
        verdicts = verdict_bounds(synthetic([1.0, 1.02, 1.1, 1.05]), tol_grad=0.01)
        grad = verdicts["gradient"]
        assert not grad.passed
        assert grad.worst == pytest.approx(0.1)
        assert grad.time == pytest.approx(0.2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.5, 2.0), min_size=1, max_size=8), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
    def test_monotone_in_tolerance(self, grads, tol, extra):
        diag = synthetic(grads)
        if verdict_bounds(diag, tol)["gradient"].passed:
            assert verdict_bounds(diag, tol + extra)["gradient"].passed

    def test_range_uses_step_extremes(self):
        diag = synthetic([1.0, 1.0])
        diag.u_max_seen = 0.9 + 1e-9
        v = verdict_bounds(diag)["range"]
        assert not v.passed and v.worst == pytest.approx(1e-9)

    def test_mass_drift(self):
        diag = synthetic([1.0])
        diag.rows.append(Row(0.1, 0.1, 1.0, 0.1, 0.9, 0.5 * (1 + 1e-9)))
        assert not verdict_bounds(diag)["mass"].passed

    def test_admissible_pme_run(self):
        model = builtin_model("pme", [2.0], 1)
        _, diag = run(model, initial_sine(PeriodicGrid(1, 256), 0.5, 0.4), SolverConfig(n=256, dim=1, t_end=0.02))
        verdicts = verdict_bounds(diag, 0.01)
        assert verdicts["gradient"].passed
        text = verdicts_text(verdicts)
        assert text.splitlines()[0].startswith("gradient: pass")


class TestCsv:
    def test_roundtrip(self):
        model = builtin_model("pme", [1.5], 1)
        _, diag = run(model, initial_sine(PeriodicGrid(1, 32), 0.5, 0.4), SolverConfig(n=32, dim=1, t_end=0.01))
        text = diag.to_csv()
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
        back = RunDiagnostics.from_csv(text)
        assert back.rows == diag.rows

    def test_missing_w_rate_is_blank(self):
        diag = synthetic([1.0])
        assert diag.to_csv().splitlines()[1].endswith(",")
        assert RunDiagnostics.from_csv(diag.to_csv()).rows[0].w_rate is None

    def test_bad_header(self):
        with pytest.raises(ValueError):
            RunDiagnostics.from_csv("a,b\n1,2\n")
