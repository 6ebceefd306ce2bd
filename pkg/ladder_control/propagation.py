# ============================================================
# propagation.py
# Closed-loop integration of  dψ/dt = −i(H0 + Σ u_j H_j)ψ.
#
#   - the COMPLEX form is integrated (regular where some r_j = 0)
#   - fixed-step classical RK4, control re-evaluated from each
#     stage state (fully coupled loop), last step truncated so
#     the run ends exactly at t_max
#   - renormalisation after every step, pre-renormalisation
#     drift kept in the trajectory
#   - the polar equations are kept as an independent oracle
# ============================================================

from __future__ import annotations

import logging
import time
from typing import Callable, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from scipy.integrate import solve_ivp
from tqdm import tqdm

from .controllers import (
    ControlVector, ControllerParams, control_law, coupling_terms, ladder_rate,
)
from .errors import IntegrationError, SingularStateError
from .settings import DEFAULT_DT, DRIFT_FACTOR, NORM_TOL, R_FLOOR, SAMPLE_STRIDE
from .states import ComplexState, PolarState, TargetState, polar_arrays, wrap_phase
from .system import LadderSystem

log = logging.getLogger(__name__)

ControlFn = Callable[[np.ndarray], np.ndarray]


# ─────────────────────────────────────────────────────────────
# SCHEMAS
# ─────────────────────────────────────────────────────────────

class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    dt: PositiveFloat = DEFAULT_DT
    t_max: PositiveFloat
    sample_stride: int = Field(default=SAMPLE_STRIDE, ge=1)
    renormalize: bool = True
    norm_tol: PositiveFloat = NORM_TOL

    @model_validator(mode="after")
    def _horizon(self):
        if not self.dt < self.t_max:
            raise ValueError(f"dt = {self.dt} must be smaller than t_max = {self.t_max}")
        return self


class Trajectory(BaseModel):
    """Sampled closed-loop history. Row i of every array belongs to times[i]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    target: TargetState
    params: Optional[ControllerParams]
    times: np.ndarray          # (m,)
    states: np.ndarray         # (m, n) complex
    controls: np.ndarray       # (m, n-1)
    V: np.ndarray              # (m,)
    Vdot: np.ndarray           # (m,)
    norm_drift: np.ndarray     # (m,) worst step since the previous row

    @model_validator(mode="after")
    def _rows(self):
        m = len(self.times)
        if m == 0:
            raise ValueError("empty trajectory")
        for name in ("states", "controls", "V", "Vdot", "norm_drift"):
            if len(getattr(self, name)) != m:
                raise ValueError(f"{name} has {len(getattr(self, name))} rows, expected {m}")
        if m > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("times must be strictly increasing")
        return self

    def __len__(self) -> int:
        return len(self.times)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.states)

    @property
    def target_population(self) -> np.ndarray:
        return self.populations[:, self.target.index - 1]

    @property
    def final_population(self) -> float:
        return float(self.target_population[-1])

    def coupling(self) -> np.ndarray:
        """x_j = r_j cos φ_{(j+1)j} at every sample, shape (m, n-1)."""
        out = np.empty((len(self), self.n - 1))
        for i, c in enumerate(self.states):
            out[i] = coupling_terms(*polar_arrays(c))
        return out

    def population_at(self, t: float, level: int | None = None) -> float:
        """Linear interpolation of |c_level|² between samples."""
        level = self.target.index if level is None else level
        return float(np.interp(t, self.times, self.populations[:, level - 1]))

    def to_frame(self) -> pd.DataFrame:
        cols: dict[str, np.ndarray] = {"t": self.times}
        for j in range(self.n):
            cols[f"re_c{j + 1}"] = self.states[:, j].real
            cols[f"im_c{j + 1}"] = self.states[:, j].imag
        for j in range(self.n - 1):
            cols[f"u_{j + 1}"] = self.controls[:, j]
        cols["V"] = self.V
        cols["Vdot"] = self.Vdot
        cols["norm_drift"] = self.norm_drift
        return pd.DataFrame(cols)


# ─────────────────────────────────────────────────────────────
# RIGHT-HAND SIDES
# ─────────────────────────────────────────────────────────────

def _generator(system: LadderSystem, u: np.ndarray) -> np.ndarray:
    return system.H0 + np.tensordot(u, system.H, axes=1)


def rhs(state: ComplexState, system: LadderSystem, u: ControlVector) -> np.ndarray:
    """−i(H0 + Σ u_j H_j)ψ."""
    return -1j * (_generator(system, u.array) @ state.array)


def _polar_rhs_arrays(r: np.ndarray, phi: np.ndarray, u: np.ndarray,
                      lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if np.any(r <= R_FLOOR):
        j = int(np.argmax(r <= R_FLOOR)) + 1
        raise SingularStateError(f"r_{j} = {r[j - 1]:.3e} ≤ {R_FLOOR:g}; "
                                 f"use the complex representation here")
    d = phi[1:] - phi[:-1]                       # φ_{(j+1)j}
    down = u * r[1:]                             # u_j r_{j+1}
    up = u * r[:-1]                              # u_j r_j
    rdot = np.zeros_like(r)
    rdot[:-1] -= down * np.cos(d)
    rdot[1:] += up * np.cos(d)
    r_phidot = -lam * r
    r_phidot[:-1] -= down * np.sin(d)
    r_phidot[1:] -= up * np.sin(d)
    return rdot, r_phidot / r


def rhs_polar(p: PolarState, u: ControlVector, system: LadderSystem) -> tuple[np.ndarray, np.ndarray]:
    """(ṙ, φ̇) of the equivalent real dynamics; refuses r_j ≤ r_floor."""
    return _polar_rhs_arrays(p.r_array, p.phi_array, u.array, system.energies)


# ─────────────────────────────────────────────────────────────
# STEPPING
# ─────────────────────────────────────────────────────────────

def _control_fn(params: ControllerParams | None, n: int) -> ControlFn:
    if params is None:
        zeros = np.zeros(n - 1)
        return lambda c: zeros
    if params.n_controls != n - 1:
        raise ValueError(f"{params.n_controls} gains given for an {n}-level ladder")
    kind, k, alpha = params.kind, params.k_array, params.alpha_array

    def law(c: np.ndarray) -> np.ndarray:
        r, phi = polar_arrays(c)
        return control_law(kind, k, alpha, coupling_terms(r, phi))

    return law


def _rk4(c: np.ndarray, system: LadderSystem, law: ControlFn, h: float) -> np.ndarray:
    def f(y):
        return -1j * (_generator(system, law(y)) @ y)

    k1 = f(c)
    k2 = f(c + 0.5 * h * k1)
    k3 = f(c + 0.5 * h * k2)
    k4 = f(c + h * k3)
    return c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(c: np.ndarray, system: LadderSystem, law: ControlFn, h: float,
             cfg: IntegratorConfig, t: float) -> tuple[np.ndarray, float]:
    """One RK4 step; returns the new amplitudes and |‖ψ‖ − 1| before renormalising."""
    before = np.linalg.norm(c)
    c_new = _rk4(c, system, law, h)
    after = np.linalg.norm(c_new)
    step_drift = abs(after - before)
    if not np.isfinite(after) or step_drift > DRIFT_FACTOR * cfg.norm_tol:
        raise IntegrationError(
            f"norm drift {step_drift:.3e} in one step at t = {t:.6f} "
            f"exceeds {DRIFT_FACTOR * cfg.norm_tol:.1e}",
            t=t, drift=step_drift,
        )
    drift = abs(after - 1.0)
    if cfg.renormalize:
        c_new = c_new / after
    return c_new, drift


def step(state: ComplexState, system: LadderSystem, params: ControllerParams | None,
         cfg: IntegratorConfig) -> ComplexState:
    """One fixed RK4 step of length cfg.dt (params=None means u ≡ 0)."""
    law = _control_fn(params, system.n)
    c_new, drift = _advance(state.array, system, law, cfg.dt, cfg, 0.0)
    log.debug(f"step drift {drift:.3e}")
    return ComplexState(amplitudes=c_new, norm_tol=state.norm_tol)


def _step_plan(cfg: IntegratorConfig) -> tuple[int, float]:
    n_full = int(np.floor(cfg.t_max / cfg.dt + 1e-9))
    tail = cfg.t_max - n_full * cfg.dt
    if tail <= 1e-9 * cfg.dt:
        tail = 0.0
    return n_full, tail


def simulate(system: LadderSystem, params: ControllerParams | None, initial: ComplexState,
             target: TargetState, cfg: IntegratorConfig, progress: bool = False) -> Trajectory:
    """Integrate over [0, t_max], keeping every sample_stride-th step and the last one."""
    target.check_against(system.n)
    if initial.n != system.n:
        raise ValueError(f"initial state has {initial.n} levels, system has {system.n}")

    law = _control_fn(params, system.n)
    n_full, tail = _step_plan(cfg)
    total = n_full + (1 if tail > 0.0 else 0)
    off_target = np.arange(system.n) != target.index - 1
    kind = params.kind.value if params is not None else "free"

    times, states, controls, V, Vdot, drifts = [], [], [], [], [], []

    def record(t: float, c: np.ndarray, drift: float) -> None:
        r, phi = polar_arrays(c)
        x = coupling_terms(r, phi)
        u = law(c)
        times.append(t)
        states.append(c.copy())
        controls.append(np.array(u, dtype=float))
        V.append(min(max(float(np.sum(r[off_target] ** 2)), 0.0), 1.0))
        Vdot.append(ladder_rate(u, r, x))
        drifts.append(drift)

    log.info(f"Simulating {kind} control: n={system.n}, dt={cfg.dt}, "
             f"t_max={cfg.t_max}, {total} steps")
    t0 = time.time()

    c = initial.array
    record(0.0, c, abs(float(np.linalg.norm(c)) - 1.0))
    worst = 0.0   # largest per-step drift since the last sample

    steps = range(1, total + 1)
    if progress:
        steps = tqdm(steps, desc=f"{kind}", unit="step", mininterval=0.5)
    for i in steps:
        if i <= n_full:
            h, t = cfg.dt, i * cfg.dt
        else:
            h, t = tail, cfg.t_max
        c, drift = _advance(c, system, law, h, cfg, t)
        worst = max(worst, drift)
        if i % cfg.sample_stride == 0 or i == total:
            record(t, c, worst)
            worst = 0.0

    log.info(f"Simulation done in {time.time() - t0:.2f}s, {len(times)} samples, "
             f"final V = {V[-1]:.3e}")

    return Trajectory(
        n=system.n,
        target=target,
        params=params,
        times=np.array(times),
        states=np.array(states, dtype=complex),
        controls=np.array(controls, dtype=float).reshape(len(times), system.n - 1),
        V=np.array(V),
        Vdot=np.array(Vdot),
        norm_drift=np.array(drifts),
    )


# ─────────────────────────────────────────────────────────────
# POLAR ORACLE
# ─────────────────────────────────────────────────────────────

def simulate_polar(system: LadderSystem, params: ControllerParams | None,
                   initial: PolarState, t_eval: np.ndarray,
                   rtol: float = 1e-11, atol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the (r, φ) equations with an adaptive high-order scheme.

    Returns r and wrapped φ at t_eval, each of shape (len(t_eval), n).
    Only valid while every r_j stays above the singular floor."""
    n = system.n
    lam = system.energies
    if params is None:
        u_of = lambda r, phi: np.zeros(n - 1)
    else:
        k, alpha = params.k_array, params.alpha_array
        u_of = lambda r, phi: control_law(params.kind, k, alpha, coupling_terms(r, phi))

    def f(t, y):
        r, phi = y[:n], y[n:]
        rdot, phidot = _polar_rhs_arrays(r, phi, u_of(r, phi), lam)
        return np.concatenate([rdot, phidot])

    t_eval = np.asarray(t_eval, dtype=float)
    y0 = np.concatenate([initial.r_array, initial.phi_array])
    sol = solve_ivp(f, (float(t_eval[0]), float(t_eval[-1])), y0, method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"polar integration failed: {sol.message}")
    r = sol.y[:n].T
    phi = wrap_phase(sol.y[n:].T)
    return r, phi
