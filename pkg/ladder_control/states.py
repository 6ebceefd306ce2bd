# ============================================================
# states.py
# State representations of an n-level ket: complex amplitudes
# (the integrated form) and polar amplitudes/phases (the form
# the feedback laws read), plus the Lyapunov value.
# ============================================================

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import InvalidLevelError
from .settings import NORM_TOL

TWO_PI = 2.0 * np.pi


# ─────────────────────────────────────────────────────────────
# PHASE HELPERS
# ─────────────────────────────────────────────────────────────

def wrap_phase(x):
    """Wrap angles into (−π, π]. Works on scalars and arrays."""
    w = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    w = np.where(w <= -np.pi, w + TWO_PI, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def polar_arrays(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw (r, φ) of an amplitude vector with φ_j = 0 wherever r_j = 0.

    No norm check and no wrapping. Used by the
    integrator at every Runge–Kutta stage."""
    r = np.abs(c)
    phi = np.where(r > 0.0, np.angle(c), 0.0)
    return r, phi


# ─────────────────────────────────────────────────────────────
# SCHEMAS
# ─────────────────────────────────────────────────────────────

class ComplexState(BaseModel):
    """Unit-norm vector of n ≥ 2 complex probability amplitudes."""

    model_config = ConfigDict(frozen=True)

    amplitudes: tuple[complex, ...]
    norm_tol: float = Field(default=NORM_TOL, gt=0)

    @field_validator("amplitudes", mode="before")
    @classmethod
    def _coerce(cls, v):
        return tuple(complex(a) for a in np.asarray(v, dtype=complex).ravel())

    @model_validator(mode="after")
    def _check(self):
        if len(self.amplitudes) < 2:
            raise ValueError(f"need at least 2 levels, got {len(self.amplitudes)}")
        norm2 = math.fsum(abs(a) ** 2 for a in self.amplitudes)
        if abs(norm2 - 1.0) > self.norm_tol:
            raise ValueError(f"state is not normalised: Σ|c_j|² = {norm2!r}")
        return self

    @property
    def n(self) -> int:
        return len(self.amplitudes)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.amplitudes, dtype=complex)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.array) ** 2

    @classmethod
    def from_array(cls, c: Sequence[complex] | np.ndarray, norm_tol: float = NORM_TOL) -> "ComplexState":
        return cls(amplitudes=c, norm_tol=norm_tol)

    @classmethod
    def basis(cls, n: int, level: int) -> "ComplexState":
        """|level⟩ with 1-based level numbering."""
        if not 1 <= level <= n:
            raise InvalidLevelError(f"basis level {level} outside [1, {n}]")
        c = np.zeros(n, dtype=complex)
        c[level - 1] = 1.0
        return cls(amplitudes=c)

    def with_global_phase(self, theta: float) -> "ComplexState":
        return ComplexState(amplitudes=np.exp(1j * theta) * self.array, norm_tol=self.norm_tol)


class PolarState(BaseModel):
    """Amplitudes r_j ∈ [0,1] and phases φ_j ∈ (−π, π]; r_j = 0 forces φ_j = 0."""

    model_config = ConfigDict(frozen=True)

    r: tuple[float, ...]
    phi: tuple[float, ...]
    norm_tol: float = Field(default=NORM_TOL, gt=0)

    @field_validator("r", "phi", mode="before")
    @classmethod
    def _coerce(cls, v):
        return tuple(float(x) for x in np.asarray(v, dtype=float).ravel())

    @model_validator(mode="after")
    def _check(self):
        r, phi = self.r, self.phi
        if len(r) != len(phi):
            raise ValueError(f"r has {len(r)} entries but phi has {len(phi)}")
        if len(r) < 2:
            raise ValueError(f"need at least 2 levels, got {len(r)}")
        for j, (rj, pj) in enumerate(zip(r, phi), start=1):
            if rj < 0.0 or rj > 1.0 + self.norm_tol:
                raise ValueError(f"r_{j} = {rj!r} outside [0, 1]")
            if not (-np.pi < pj <= np.pi):
                raise ValueError(f"phi_{j} = {pj!r} outside (−π, π]")
            if rj == 0.0 and pj != 0.0:
                raise ValueError(f"phi_{j} must be 0 where r_{j} = 0")
        norm2 = math.fsum(x * x for x in r)
        if abs(norm2 - 1.0) > self.norm_tol:
            raise ValueError(f"amplitudes are not normalised: Σr_j² = {norm2!r}")
        return self

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def r_array(self) -> np.ndarray:
        return np.array(self.r, dtype=float)

    @property
    def phi_array(self) -> np.ndarray:
        return np.array(self.phi, dtype=float)


class TargetState(BaseModel):
    """Eigenstate of H0 picked by its 1-based level index (the last level here)."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1)

    @classmethod
    def last(cls, n: int) -> "TargetState":
        return cls(index=n)

    def check_against(self, n: int) -> None:
        if self.index != n:
            raise InvalidLevelError(f"target must be the last level {n}, got {self.index}")


# ─────────────────────────────────────────────────────────────
# OPERATIONS
# ─────────────────────────────────────────────────────────────

def to_polar(state: ComplexState) -> PolarState:
    r, phi = polar_arrays(state.array)
    return PolarState(r=r, phi=wrap_phase(phi), norm_tol=state.norm_tol)


def from_polar(state: PolarState) -> ComplexState:
    c = state.r_array * np.exp(1j * state.phi_array)
    return ComplexState(amplitudes=c, norm_tol=state.norm_tol)


def lyapunov_value(state: ComplexState, target: TargetState) -> float:
    """V = 1 − |⟨ψ_f|ψ⟩|², evaluated as the population outside the target."""
    if not 1 <= target.index <= state.n:
        raise InvalidLevelError(f"target level {target.index} outside [1, {state.n}]")
    pops = state.populations
    v = math.fsum(p for j, p in enumerate(pops, start=1) if j != target.index)
    return min(v, 1.0)


def target_population(state: ComplexState, target: TargetState) -> float:
    """|⟨ψ_f|ψ⟩|²."""
    if not 1 <= target.index <= state.n:
        raise InvalidLevelError(f"target level {target.index} outside [1, {state.n}]")
    return float(abs(state.amplitudes[target.index - 1]) ** 2)


def relative_phase(p: PolarState, i: int, j: int) -> float:
    """φ_ij = φ_i − φ_j wrapped to (−π, π]; levels are 1-based."""
    for idx in (i, j):
        if not 1 <= idx <= p.n:
            raise InvalidLevelError(f"invalid level pair ({i}, {j}) for n = {p.n}")
    return wrap_phase(p.phi[i - 1] - p.phi[j - 1])
