# ============================================================
# controllers.py
# The three feedback laws on the coupling terms
#     x_j = r_j cos φ_{(j+1)j},   j = 1..n-1
#   fractional : u_j = k_j sign(x_j) |x_j|^α_j   (continuous, non-smooth)
#   standard   : u_j = k_j x_j
#   bangbang   : u_j = k_j sign(x_j)
# and the two expressions of the Lyapunov rate.
# sign(0) = 0 everywhere, so every law vanishes on the target class.
# ============================================================

from __future__ import annotations

from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, field_validator, model_validator

from .states import ComplexState, PolarState, TargetState
from .system import LadderSystem


class ControllerKind(str, Enum):
    FRACTIONAL = "fractional"
    STANDARD   = "standard"
    BANGBANG   = "bangbang"


# ─────────────────────────────────────────────────────────────
# SCHEMAS
# ─────────────────────────────────────────────────────────────

class ControllerParams(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kind: ControllerKind
    k: tuple[PositiveFloat, ...]
    alpha: Optional[tuple[float, ...]] = None

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v):
        if v is not None:
            for j, a in enumerate(v, start=1):
                if not 0.0 < a < 1.0:
                    raise ValueError(f"alpha_{j} = {a!r} outside (0, 1)")
        return v

    @model_validator(mode="after")
    def _shapes(self):
        if not self.k:
            raise ValueError("at least one gain is required")
        if self.kind is ControllerKind.FRACTIONAL and self.alpha is None:
            raise ValueError("fractional controller needs alpha")
        if self.alpha is not None and len(self.alpha) != len(self.k):
            raise ValueError(f"alpha has {len(self.alpha)} entries but k has {len(self.k)}")
        return self

    @property
    def n_controls(self) -> int:
        return len(self.k)

    @property
    def k_array(self) -> np.ndarray:
        return np.array(self.k, dtype=float)

    @property
    def alpha_array(self) -> np.ndarray | None:
        return None if self.alpha is None else np.array(self.alpha, dtype=float)

    def with_kind(self, kind: ControllerKind) -> "ControllerParams":
        return ControllerParams(kind=kind, k=self.k, alpha=self.alpha)


class ControlVector(BaseModel):
    """Field amplitudes u_1..u_{n-1} in atomic units."""

    model_config = ConfigDict(frozen=True)

    u: tuple[float, ...]

    @field_validator("u", mode="before")
    @classmethod
    def _coerce(cls, v):
        return tuple(float(x) for x in np.asarray(v, dtype=float).ravel())

    @property
    def array(self) -> np.ndarray:
        return np.array(self.u, dtype=float)


# ─────────────────────────────────────────────────────────────
# ARRAY KERNELS (used by the integrator at every stage)
# ─────────────────────────────────────────────────────────────

def coupling_terms(r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """x_j = r_j cos(φ_{j+1} − φ_j)."""
    return r[:-1] * np.cos(phi[1:] - phi[:-1])


def control_law(kind: ControllerKind, k: np.ndarray, alpha: np.ndarray | None,
                x: np.ndarray) -> np.ndarray:
    s = np.sign(x)
    if kind is ControllerKind.FRACTIONAL:
        # sign(x)|x|^α, never a real power of a negative base
        return k * s * np.abs(x) ** alpha
    if kind is ControllerKind.STANDARD:
        return k * x
    return k * s


def ladder_rate(u: np.ndarray, r: np.ndarray, x: np.ndarray) -> float:
    """V̇ = −2 u_{n-1} r_n x_{n-1} with x_{n-1} = r_{n-1} cos φ_{n(n-1)}."""
    return float(-2.0 * u[-1] * r[-1] * x[-1])


# ─────────────────────────────────────────────────────────────
# OPERATIONS
# ─────────────────────────────────────────────────────────────

def _check_width(params: ControllerParams, n: int) -> None:
    if params.n_controls != n - 1:
        raise ValueError(f"{params.n_controls} gains given for an {n}-level ladder "
                         f"(expected {n - 1})")


def control(params: ControllerParams, p: PolarState) -> ControlVector:
    _check_width(params, p.n)
    x = coupling_terms(p.r_array, p.phi_array)
    return ControlVector(u=control_law(params.kind, params.k_array, params.alpha_array, x))


def lyapunov_rate_ladder(p: PolarState, u: ControlVector,
                         params: ControllerParams | None = None) -> float:
    """Rate of V along the ladder dynamics; only the last link contributes."""
    if params is not None:
        _check_width(params, p.n)
    if len(u.u) != p.n - 1:
        raise ValueError(f"control has {len(u.u)} entries, expected {p.n - 1}")
    x = coupling_terms(p.r_array, p.phi_array)
    return ladder_rate(u.array, p.r_array, x)


def lyapunov_rate_general(state: ComplexState, system: LadderSystem,
                          u: ControlVector, target: TargetState) -> float:
    """V̇ = −2 Σ_j u_j |⟨ψ|ψ_f⟩| Im[e^{i∠⟨ψ|ψ_f⟩} ⟨ψ_f|H_j|ψ⟩], ∠0 := 0."""
    c = state.array
    f = np.zeros(state.n, dtype=complex)
    f[target.index - 1] = 1.0
    overlap = np.vdot(c, f)                      # ⟨ψ|ψ_f⟩
    mag = abs(overlap)
    if mag == 0.0:
        return 0.0
    rotor = np.exp(1j * np.angle(overlap))
    total = 0.0
    for uj, hj in zip(u.u, system.H):
        total += uj * mag * (rotor * np.vdot(f, hj @ c)).imag
    return float(-2.0 * total)
