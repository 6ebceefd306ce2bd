"""
State representations: polar conversion, phase convention, Lyapunov value.
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose
from pydantic import ValidationError

from .conftest import interior_states
from .errors import InvalidLevelError
from .states import (
    ComplexState, PolarState, TargetState, from_polar, lyapunov_value, relative_phase,
    target_population, to_polar, wrap_phase,
)

S = np.sqrt(2.0) / 2.0
FIG5 = [0.5, S, 0.5]


# ─────────────────────────────────────────────────────────────
# wrap_phase
# ─────────────────────────────────────────────────────────────

@pytest.mark.parametrize("x, expected", [
    (0.0, 0.0),
    (np.pi, np.pi),
    (-np.pi, np.pi),
    (3 * np.pi / 2, -np.pi / 2),
    (-3 * np.pi / 2, np.pi / 2),
])
def test_wrap_phase(x, expected):
    assert wrap_phase(x) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-1e3, 1e3))
def test_wrap_phase_range_and_congruence(x):
    w = wrap_phase(x)
    assert -np.pi < w <= np.pi
    assert np.cos(w) == pytest.approx(np.cos(x), abs=1e-9)
    assert np.sin(w) == pytest.approx(np.sin(x), abs=1e-9)


# ─────────────────────────────────────────────────────────────
# ComplexState / PolarState
# ─────────────────────────────────────────────────────────────

def test_complex_state_rejects_unnormalised():
    with pytest.raises(ValidationError):
        ComplexState(amplitudes=[1.0, 1.0])


def test_complex_state_needs_two_levels():
    with pytest.raises(ValidationError):
        ComplexState(amplitudes=[1.0])


def test_basis_is_one_based():
    psi = ComplexState.basis(3, 1)
    assert psi.amplitudes == (1 + 0j, 0j, 0j)
    with pytest.raises(InvalidLevelError):
        ComplexState.basis(3, 4)


def test_polar_state_phase_convention_enforced():
    with pytest.raises(ValidationError):
        PolarState(r=[1.0, 0.0], phi=[0.0, 0.3])


def test_polar_state_phase_range_enforced():
    with pytest.raises(ValidationError):
        PolarState(r=[S, S], phi=[-np.pi, 0.0])


# ─────────────────────────────────────────────────────────────
# to_polar / from_polar
# ─────────────────────────────────────────────────────────────

@pytest.mark.parametrize("c, r, phi", [
    ([1, 0, 0], [1, 0, 0], [0, 0, 0]),
    ([0, 1j, 0], [0, 1, 0], [0, np.pi / 2, 0]),
    (FIG5, FIG5, [0, 0, 0]),
])
def test_to_polar_examples(c, r, phi):
    p = to_polar(ComplexState(amplitudes=c))
    assert_allclose(p.r, r, atol=1e-15)
    assert_allclose(p.phi, phi, atol=1e-15)


def test_to_polar_negative_real_is_pi():
    p = to_polar(ComplexState(amplitudes=[-1.0, 0.0]))
    assert p.phi == (np.pi, 0.0)


def test_from_polar_examples():
    assert_allclose(from_polar(PolarState(r=[1, 0, 0], phi=[0, 0, 0])).array, [1, 0, 0])
    assert_allclose(from_polar(PolarState(r=[0, 1, 0], phi=[0, np.pi / 2, 0])).array,
                    [0, 1j, 0], atol=1e-15)


@given(interior_states())
def test_polar_round_trip(psi):
    back = from_polar(to_polar(psi))
    assert_allclose(back.array, psi.array, atol=1e-12)


@given(interior_states())
def test_to_polar_zero_amplitude_has_zero_phase(psi):
    c = psi.array.copy()
    c[0] = 0.0
    p = to_polar(ComplexState(amplitudes=c / np.linalg.norm(c)))
    assert p.r[0] == 0.0 and p.phi[0] == 0.0


# ─────────────────────────────────────────────────────────────
# lyapunov_value / relative_phase
# ─────────────────────────────────────────────────────────────

@pytest.mark.parametrize("c, expected", [
    ([1, 0, 0], 1.0),
    ([0, 0, np.exp(0.7j)], 0.0),
    ([0, 0, -1j], 0.0),
    (FIG5, 0.75),
])
def test_lyapunov_value_examples(c, expected):
    V = lyapunov_value(ComplexState(amplitudes=c), TargetState.last(3))
    assert V == pytest.approx(expected, abs=1e-15)


@given(interior_states(), st.floats(-10, 10))
def test_lyapunov_value_global_phase_invariant(psi, theta):
    target = TargetState.last(psi.n)
    V = lyapunov_value(psi, target)
    assert 0.0 <= V <= 1.0
    assert lyapunov_value(psi.with_global_phase(theta), target) == pytest.approx(V, abs=1e-14)
    assert V + target_population(psi, target) == pytest.approx(1.0, abs=1e-9)


def test_lyapunov_value_rejects_bad_target():
    with pytest.raises(InvalidLevelError):
        lyapunov_value(ComplexState.basis(3, 1), TargetState(index=4))


def test_relative_phase_examples():
    p = PolarState(r=[0, 1, 0], phi=[0, np.pi / 2, 0])
    assert relative_phase(p, 2, 1) == pytest.approx(np.pi / 2)

    q = PolarState(r=[0.5, 0.5, S], phi=[np.pi, -np.pi / 2, 0])
    assert relative_phase(q, 1, 2) == pytest.approx(-np.pi / 2)

    # both amplitudes zero: forced by the phase convention
    assert relative_phase(PolarState(r=[0, 0, 1], phi=[0, 0, 0.4]), 1, 2) == 0.0


def test_relative_phase_rejects_bad_level():
    p = PolarState(r=[1, 0, 0], phi=[0, 0, 0])
    with pytest.raises(InvalidLevelError):
        relative_phase(p, 0, 1)
    with pytest.raises(InvalidLevelError):
        relative_phase(p, 1, 4)
