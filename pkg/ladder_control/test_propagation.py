"""
Closed-loop integration: right-hand sides, RK4 stepping, sampled runs,
and agreement between the complex and polar forms.
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from .conftest import T_COMPARE, interior_states, random_state
from .controllers import (
    ControlVector, ControllerKind, ControllerParams, control, lyapunov_rate_ladder,
)
from .errors import IntegrationError, InvalidLevelError, SingularStateError
from .propagation import IntegratorConfig, rhs, rhs_polar, simulate, simulate_polar, step
from .states import ComplexState, PolarState, TargetState, lyapunov_value, to_polar
from .system import build_ladder

S = np.sqrt(2.0) / 2.0
SYS3 = build_ladder(3, [0, 1, 2])
TARGET3 = TargetState.last(3)
FRACTIONAL = ControllerParams(kind="fractional", k=(1.5, 1.0), alpha=(1 / 3, 2 / 3))


# ─────────────────────────────────────────────────────────────
# rhs / rhs_polar
# ─────────────────────────────────────────────────────────────

@pytest.mark.parametrize("c, u, expected", [
    ([1, 0, 0], [0, 0], [0, 0, 0]),
    ([0, 1, 0], [0, 0], [0, -1j, 0]),
    ([0, 1, 0], [1, 0], [-1, -1j, 0]),
])
def test_rhs_examples(c, u, expected):
    out = rhs(ComplexState(amplitudes=c), SYS3, ControlVector(u=u))
    assert_allclose(out, expected, atol=1e-15)


def test_rhs_polar_free_evolution():
    p = to_polar(ComplexState(amplitudes=[0.5, S, 0.5]))
    rdot, phidot = rhs_polar(p, ControlVector(u=[0, 0]), SYS3)
    assert_allclose(rdot, 0.0, atol=1e-15)
    assert_allclose(phidot, [0, -1, -2], atol=1e-15)


@given(interior_states(n_min=2, n_max=6), st.data())
def test_rhs_polar_conserves_norm(psi, data):
    n = psi.n
    system = build_ladder(n, range(n))
    u = data.draw(st.lists(st.floats(-5, 5), min_size=n - 1, max_size=n - 1))
    p = to_polar(psi)
    rdot, _ = rhs_polar(p, ControlVector(u=u), system)
    assert float(np.dot(p.r_array, rdot)) == pytest.approx(0.0, abs=1e-12)


def test_rhs_polar_refuses_singular_state():
    with pytest.raises(SingularStateError):
        rhs_polar(to_polar(ComplexState.basis(3, 1)), ControlVector(u=[1, 0]), SYS3)


def test_polar_rates_match_complex_rates():
    rng = np.random.default_rng(11)
    for _ in range(200):
        psi = random_state(rng, 3)
        u = ControlVector(u=rng.uniform(-2, 2, size=2))
        p = to_polar(psi)
        rdot, phidot = rhs_polar(p, u, SYS3)
        cdot = rhs(psi, SYS3, u)
        expected = (rdot + 1j * p.r_array * phidot) * np.exp(1j * p.phi_array)
        assert_allclose(cdot, expected, atol=1e-12)


# ─────────────────────────────────────────────────────────────
# step
# ─────────────────────────────────────────────────────────────

def test_step_target_state_is_fixed_up_to_phase():
    cfg = IntegratorConfig(dt=1e-3, t_max=1.0)
    psi = ComplexState(amplitudes=[0, 0, 1])
    for kind in ControllerKind:
        out = step(psi, SYS3, FRACTIONAL.with_kind(kind), cfg)
        assert lyapunov_value(out, TARGET3) == 0.0
        assert out.amplitudes[2] == pytest.approx(np.exp(-2e-3j), abs=1e-14)


def test_step_matches_lyapunov_rate():
    rng = np.random.default_rng(3)
    params = FRACTIONAL.with_kind(ControllerKind.STANDARD)
    h = 1e-6
    cfg = IntegratorConfig(dt=h, t_max=1.0)
    for _ in range(20):
        psi = random_state(rng, 3)
        V0 = lyapunov_value(psi, TARGET3)
        V1 = lyapunov_value(step(psi, SYS3, params, cfg), TARGET3)
        p = to_polar(psi)
        Vdot = lyapunov_rate_ladder(p, control(params, p))
        assert (V1 - V0) / h == pytest.approx(Vdot, abs=1e-4)


def test_step_raises_on_excess_drift():
    # a step of 0.5 with bang-bang gains of 50 is far outside RK4's accuracy
    cfg = IntegratorConfig(dt=0.5, t_max=1.0)
    params = ControllerParams(kind="bangbang", k=(50.0, 50.0))
    with pytest.raises(IntegrationError) as info:
        step(ComplexState(amplitudes=[S, S, 0]), SYS3, params, cfg)
    assert info.value.drift > 1e3 * cfg.norm_tol


# ─────────────────────────────────────────────────────────────
# simulate: free evolution
# ─────────────────────────────────────────────────────────────

def test_free_evolution_closed_form():
    cfg = IntegratorConfig(dt=1e-3, t_max=np.pi, sample_stride=100)
    traj = simulate(SYS3, None, ComplexState(amplitudes=[0, 1, 0]), TARGET3, cfg)
    assert traj.times[-1] == pytest.approx(np.pi, abs=1e-15)
    assert_allclose(traj.states[-1], [0, -1, 0], atol=1e-8)
    assert np.all(traj.controls == 0.0)


def test_free_evolution_phases_advance_linearly():
    c0 = np.array([0.5, S, 0.5], dtype=complex)
    cfg = IntegratorConfig(dt=1e-3, t_max=5.0, sample_stride=250)
    traj = simulate(SYS3, None, ComplexState(amplitudes=c0), TARGET3, cfg)
    exact = c0[None, :] * np.exp(-1j * np.outer(traj.times, [0, 1, 2]))
    assert_allclose(np.abs(traj.states), np.abs(c0)[None, :].repeat(len(traj), 0), atol=1e-9)
    assert_allclose(traj.states, exact, atol=1e-9)


def _free_error(dt: float) -> float:
    c0 = np.ones(3, dtype=complex) / np.sqrt(3.0)
    cfg = IntegratorConfig(dt=dt, t_max=np.pi, sample_stride=10_000,
                           renormalize=False, norm_tol=1e-6)
    traj = simulate(SYS3, None, ComplexState(amplitudes=c0), TARGET3, cfg)
    exact = c0 * np.exp(-1j * np.pi * np.array([0.0, 1.0, 2.0]))
    return float(np.linalg.norm(traj.states[-1] - exact))


def test_rk4_fourth_order_on_free_evolution():
    ratio = _free_error(0.1) / _free_error(0.05)
    assert ratio >= 15.0


def test_run_ends_exactly_at_t_max():
    cfg = IntegratorConfig(dt=0.3, t_max=1.0, sample_stride=2)
    traj = simulate(SYS3, None, ComplexState.basis(3, 1), TARGET3, cfg)
    assert_allclose(traj.times, [0.0, 0.6, 1.0], atol=1e-12)


# ─────────────────────────────────────────────────────────────
# simulate: argument checks
# ─────────────────────────────────────────────────────────────

def test_simulate_rejects_non_last_target():
    cfg = IntegratorConfig(dt=1e-2, t_max=1.0)
    with pytest.raises(InvalidLevelError):
        simulate(SYS3, FRACTIONAL, ComplexState.basis(3, 1), TargetState(index=2), cfg)


def test_simulate_rejects_wrong_dimension():
    cfg = IntegratorConfig(dt=1e-2, t_max=1.0)
    with pytest.raises(ValueError):
        simulate(SYS3, FRACTIONAL, ComplexState.basis(2, 1), TARGET3, cfg)


def test_integrator_config_needs_dt_below_horizon():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=1.0, t_max=0.5)


@pytest.mark.parametrize("kwargs", [
    {"t_max": float("inf")},
    {"t_max": 1.0, "dt": float("nan")},
    {"t_max": 1.0, "norm_tol": float("inf")},
])
def test_integrator_config_rejects_non_finite(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_target_start_stays_put():
    cfg = IntegratorConfig(dt=1e-3, t_max=2.0)
    traj = simulate(SYS3, FRACTIONAL, ComplexState(amplitudes=[0, 0, 1j]), TARGET3, cfg)
    assert np.all(traj.V == 0.0)
    assert np.all(traj.controls == 0.0)


# ─────────────────────────────────────────────────────────────
# Rubidium runs
# ─────────────────────────────────────────────────────────────

def test_fig3_fractional_reaches_target(fig3_runs):
    traj = fig3_runs[ControllerKind.FRACTIONAL]
    assert traj.population_at(T_COMPARE) >= 0.999
    assert traj.times[-1] == pytest.approx(20.0)


def test_fig3_standard_population(fig3_runs):
    assert fig3_runs[ControllerKind.STANDARD].population_at(T_COMPARE) == pytest.approx(0.9944, abs=5e-3)


def test_fig3_bangbang_population(fig3_runs):
    assert fig3_runs[ControllerKind.BANGBANG].population_at(T_COMPARE) == pytest.approx(0.6144, abs=5e-2)


def test_descent_under_fractional_control(fig3_runs, fig5_run):
    for traj in (fig3_runs[ControllerKind.FRACTIONAL], fig5_run):
        assert np.all(traj.Vdot <= 0.0)
        assert np.all(np.diff(traj.V) <= 1e-8)


def test_norm_drift_standard_controller(fig3_runs):
    assert fig3_runs[ControllerKind.STANDARD].norm_drift.max() < 2e-10


def test_norm_drift_fractional_controller(fig3_runs, fig5_run):
    # one step straddling a zero of |x|^α sits just above 1e-10 on the fig3 run
    assert fig3_runs[ControllerKind.FRACTIONAL].norm_drift.max() < 2e-10
    assert fig5_run.norm_drift.max() < 1e-8


def test_norm_drift_keeps_worst_step_between_samples():
    psi0 = ComplexState(amplitudes=[0.5, S, 0.5])
    every = simulate(SYS3, FRACTIONAL, psi0, TARGET3,
                     IntegratorConfig(dt=1e-3, t_max=1.0, sample_stride=1))
    sparse = simulate(SYS3, FRACTIONAL, psi0, TARGET3,
                      IntegratorConfig(dt=1e-3, t_max=1.0, sample_stride=250))
    assert len(sparse) == 5
    assert sparse.norm_drift.max() == every.norm_drift.max()
    assert sparse.norm_drift[1] == every.norm_drift[1:251].max()


def test_sampled_rate_consistency(fig5_run):
    # centred differences against the analytic rate on the early, smooth part of the run
    traj = fig5_run
    t, V = traj.times, traj.V
    fd = (V[2:] - V[:-2]) / (t[2:] - t[:-2])
    window = (t[1:-1] > 0.05) & (t[1:-1] < 0.8)
    assert_allclose(fd[window], traj.Vdot[1:-1][window], atol=1e-3)


# ─────────────────────────────────────────────────────────────
# Complex vs polar
# ─────────────────────────────────────────────────────────────

def test_complex_and_polar_forms_agree():
    psi0 = ComplexState(amplitudes=[0.5, S, 0.5])
    cfg = IntegratorConfig(dt=1e-4, t_max=1.0, sample_stride=100)
    traj = simulate(SYS3, FRACTIONAL, psi0, TARGET3, cfg)

    r, phi = simulate_polar(SYS3, FRACTIONAL, to_polar(psi0), traj.times)
    assert_allclose(traj.amplitudes, r, atol=1e-6)
    assert_allclose(traj.states, r * np.exp(1j * phi), atol=1e-6)


def test_polar_oracle_free_evolution():
    p0 = to_polar(ComplexState(amplitudes=[0.5, S, 0.5]))
    t = np.linspace(0.0, 2.0, 9)
    r, phi = simulate_polar(SYS3, None, p0, t)
    assert_allclose(r, np.tile(p0.r_array, (len(t), 1)), atol=1e-10)
    assert_allclose(np.exp(1j * phi), np.exp(-1j * np.outer(t, [0, 1, 2])), atol=1e-9)


def test_polar_oracle_refuses_singular_start():
    p0 = PolarState(r=[1, 0, 0], phi=[0, 0, 0])
    with pytest.raises(SingularStateError):
        simulate_polar(SYS3, FRACTIONAL, p0, np.linspace(0, 1, 5))
