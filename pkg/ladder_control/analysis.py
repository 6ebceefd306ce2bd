# ============================================================
# analysis.py
# Finite-time bounds, convergence detection on sampled runs,
# region-entry times T1/T2, the power-sum inequality behind the
# finite-time estimate, and numerical checks of the differential
# inequality and of escape from the all-controls-zero set.
# ============================================================

from __future__ import annotations

import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .controllers import ControllerKind, ControllerParams
from .settings import BETA, EPSILON, NORM_TOL
from .states import polar_arrays
from .propagation import Trajectory

log = logging.getLogger(__name__)

LEMMA_TOL = 1e-12


# ─────────────────────────────────────────────────────────────
# SCHEMAS
# ─────────────────────────────────────────────────────────────

class ConvergenceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_f: Optional[float]
    epsilon: float
    T1: Optional[float]
    T2: Optional[float]
    beta: float
    bound_theorem: Optional[float]
    bound_simulation: Optional[float]
    final_population: float
    V0: float
    region_entry: Optional[float] = None
    V_at_entry: Optional[float] = None
    beta_inf: Optional[float] = None
    bound_at_entry: Optional[float] = None
    bound_holds: Optional[bool] = None
    t2_degenerate: bool = False
    max_norm_drift: float = 0.0
    descent_violations: int = 0


class Lemma1Result(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


class Lemma1SweepResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    samples: int
    violations: int
    worst_slack: float          # min(rhs − lhs) over the sweep
    upper_violations: int
    vertex_equality: bool


class FiniteTimeCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    K_f: float
    alpha_f: float
    samples_checked: int
    violations: int
    worst_margin: float         # max(Vdot − rhs) over checked samples


class SingularEscapeReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    episodes: int
    escaped: bool
    longest_dwell: float
    entered_at: list[float]


# ─────────────────────────────────────────────────────────────
# BOUNDS
# ─────────────────────────────────────────────────────────────

def _check_common(V0: float, k_last: float, alpha_last: float) -> None:
    if not 0.0 < V0 <= 1.0:
        raise ValueError(f"V0 = {V0!r} outside (0, 1]")
    if not k_last > 0.0:
        raise ValueError(f"k_last = {k_last!r} must be positive")
    if not 0.0 < alpha_last < 1.0:
        raise ValueError(f"alpha_last = {alpha_last!r} outside (0, 1)")


def bound_theorem_form(V0: float, beta: float, k_last: float, alpha_last: float, n: int) -> float:
    """V0^{1−α_f} / (K_f (1−α_f)) with K_f = 2βk_{n-1}/(n−1), α_f = (α_{n-1}+1)/2.

    For n = 2 this is the K_f = 2βk_1 branch."""
    _check_common(V0, k_last, alpha_last)
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta = {beta!r} outside (0, 1)")
    if n < 2:
        raise ValueError(f"n = {n} must be at least 2")
    K_f = 2.0 * beta * k_last / (n - 1)
    a_f = (alpha_last + 1.0) / 2.0
    return V0 ** (1.0 - a_f) / (K_f * (1.0 - a_f))


def bound_simulation_form(V0: float, k_last: float, alpha_last: float) -> float:
    """6 / (k_last (1 − α)) · V0^{(1−α)/2}, the expression quoted for the rubidium runs."""
    _check_common(V0, k_last, alpha_last)
    return 6.0 / (k_last * (1.0 - alpha_last)) * V0 ** ((1.0 - alpha_last) / 2.0)


# ─────────────────────────────────────────────────────────────
# CONVERGENCE
# ─────────────────────────────────────────────────────────────

def _fractional(params: Optional[ControllerParams]) -> bool:
    return params is not None and params.kind is ControllerKind.FRACTIONAL and params.alpha is not None


def _crossing_time(times: np.ndarray, V: np.ndarray, epsilon: float) -> Optional[float]:
    hits = np.flatnonzero(V <= epsilon)
    if hits.size == 0:
        return None
    i = int(hits[0])
    if i == 0:
        return float(times[0])
    v0, v1 = V[i - 1], V[i]
    t0, t1 = times[i - 1], times[i]
    return float(t0 + (v0 - epsilon) * (t1 - t0) / (v0 - v1))


def _ordering_time(r: np.ndarray, times: np.ndarray) -> tuple[Optional[float], int]:
    """First sample from which r_{n-1} ≥ r_j (j ≤ n-2) keeps holding; also its index."""
    n = r.shape[1]
    if n == 2:
        return float(times[0]), 0
    ok = r[:, n - 2] >= r[:, : n - 2].max(axis=1)
    bad = np.flatnonzero(~ok)
    if bad.size == 0:
        return float(times[0]), 0
    start = int(bad[-1]) + 1
    if start >= len(times):
        return None, -1
    return float(times[start]), start


def detect_convergence(traj: Trajectory, epsilon: float = EPSILON, beta: float = BETA) -> ConvergenceReport:
    if epsilon <= 0.0:
        raise ValueError(f"epsilon = {epsilon!r} must be positive")
    times, V = traj.times, traj.V
    r = traj.amplitudes
    n = traj.n
    r_last = r[:, traj.target.index - 1]

    t_f = _crossing_time(times, V, epsilon)

    hits = np.flatnonzero(r_last >= beta)
    T1 = float(times[hits[0]]) if hits.size else None

    # ordering is only meaningful before convergence; afterwards all r_j < n are noise
    live = V > epsilon
    cut = int(np.flatnonzero(~live)[0]) if np.any(~live) else len(times)
    if cut == 0:
        T2, t2_idx = float(times[0]), 0
    else:
        T2, t2_idx = _ordering_time(r[:cut], times[:cut])

    t2_degenerate = False
    if n > 2 and T2 is not None and cut > 0:
        tail = r[t2_idx:cut, : n - 2]
        t2_degenerate = bool(tail.size and np.any(np.all(tail <= 1e-12, axis=0)))

    V0 = float(V[0])
    bound_theorem = bound_simulation = None
    params = traj.params
    if _fractional(params):
        k_last, a_last = params.k[-1], params.alpha[-1]
        if V0 > 0.0:
            bound_theorem = bound_theorem_form(V0, beta, k_last, a_last, n)
            bound_simulation = bound_simulation_form(V0, k_last, a_last)
        else:
            bound_theorem = bound_simulation = 0.0

    region_entry = V_at_entry = beta_inf = bound_at_entry = None
    bound_holds = None
    if T1 is not None and T2 is not None:
        region_entry = max(T1, T2)
        V_at_entry = float(np.interp(region_entry, times, V))
        beta_inf = float(r_last[times >= T1].min())
        if _fractional(params):
            if V_at_entry <= 0.0:
                bound_at_entry = 0.0
            else:
                b = min(beta_inf, 1.0 - 1e-12)
                bound_at_entry = bound_theorem_form(min(V_at_entry, 1.0), b,
                                                    params.k[-1], params.alpha[-1], n)
            if t_f is not None:
                bound_holds = bool(max(t_f - region_entry, 0.0) <= bound_at_entry)

    report = ConvergenceReport(
        t_f=t_f, epsilon=epsilon, T1=T1, T2=T2, beta=beta,
        bound_theorem=bound_theorem, bound_simulation=bound_simulation,
        final_population=traj.final_population, V0=V0,
        region_entry=region_entry, V_at_entry=V_at_entry, beta_inf=beta_inf,
        bound_at_entry=bound_at_entry, bound_holds=bound_holds,
        t2_degenerate=t2_degenerate,
        max_norm_drift=float(traj.norm_drift.max()),
        descent_violations=int(np.count_nonzero(traj.Vdot > 0.0)),
    )
    if t_f is None:
        log.warning(f"No convergence to V ≤ {epsilon:g} within t_max = {times[-1]:g}")
    else:
        log.info(f"Converged: t_f = {t_f:.4f} (ε = {epsilon:g}), T1 = {T1}, T2 = {T2}")
    return report


# ─────────────────────────────────────────────────────────────
# POWER-SUM INEQUALITY
# ─────────────────────────────────────────────────────────────

def _check_unit_nonneg(r: np.ndarray) -> None:
    if r.ndim != 1 or r.size == 0:
        raise ValueError("r must be a non-empty vector")
    if np.any(r < 0.0):
        raise ValueError("r must be non-negative")
    if abs(float(np.sum(r ** 2)) - 1.0) > NORM_TOL:
        raise ValueError(f"Σ r_j² = {float(np.sum(r ** 2))!r} is not 1")


def lemma1_check(r: Sequence[float], alpha: float) -> Lemma1Result:
    """(Σ r_j²)^{(α+1)/2} ≤ Σ r_j^{α+1} for non-negative unit r."""
    r = np.asarray(r, dtype=float)
    _check_unit_nonneg(r)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha = {alpha!r} outside (0, 1)")
    lhs = float(np.sum(r ** 2) ** ((alpha + 1.0) / 2.0))
    rhs = float(np.sum(r ** (alpha + 1.0)))
    return Lemma1Result(lhs=lhs, rhs=rhs, holds=lhs <= rhs + LEMMA_TOL)


def lemma1_upper(r: Sequence[float], alpha: float) -> float:
    """n^{(1−α)/2} (Σ r_j²)^{(α+1)/2}: the largest Σ r_j^{α+1} can get, reached at r_j = 1/√n."""
    r = np.asarray(r, dtype=float)
    _check_unit_nonneg(r)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha = {alpha!r} outside (0, 1)")
    return float(r.size ** ((1.0 - alpha) / 2.0) * np.sum(r ** 2) ** ((alpha + 1.0) / 2.0))


def lemma1_sweep(samples: int = 100_000, seed: int = 0, n_min: int = 2, n_max: int = 8,
                 sparsity: float = 0.3) -> Lemma1SweepResult:
    """Random non-negative unit vectors (some on faces of the orthant) × random α."""
    if samples < 1 or n_min < 1 or n_max < n_min:
        raise ValueError("need samples ≥ 1 and 1 ≤ n_min ≤ n_max")
    rng = np.random.default_rng(seed)
    ns = rng.integers(n_min, n_max + 1, size=samples)
    tiny = np.nextafter(0.0, 1.0)

    violations = upper_violations = 0
    worst = np.inf
    for n in np.unique(ns):
        m = int(np.count_nonzero(ns == n))
        z = np.abs(rng.standard_normal((m, n)))
        z[rng.random((m, n)) < sparsity] = 0.0
        empty = ~np.any(z > 0.0, axis=1)
        z[empty, rng.integers(0, n, size=int(empty.sum()))] = 1.0
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        a = rng.uniform(tiny, 1.0, size=m)

        lhs = np.sum(z ** 2, axis=1) ** ((a + 1.0) / 2.0)
        rhs = np.sum(z ** (a[:, None] + 1.0), axis=1)
        upper = n ** ((1.0 - a) / 2.0) * lhs
        violations += int(np.count_nonzero(lhs > rhs + LEMMA_TOL))
        upper_violations += int(np.count_nonzero(rhs > upper + LEMMA_TOL))
        worst = min(worst, float(np.min(rhs - lhs)))

    vertex_equality = True
    for n in range(n_min, n_max + 1):
        for a in rng.uniform(tiny, 1.0, size=4):
            for e in np.eye(n):
                res = lemma1_check(e, float(a))
                vertex_equality &= res.lhs == res.rhs

    log.info(f"Power-sum sweep: {samples} samples, {violations} violations, "
             f"worst slack {worst:.3e}")
    return Lemma1SweepResult(samples=samples, violations=violations, worst_slack=worst,
                             upper_violations=upper_violations,
                             vertex_equality=bool(vertex_equality))


# ─────────────────────────────────────────────────────────────
# TRAJECTORY DIAGNOSTICS
# ─────────────────────────────────────────────────────────────

def finite_time_inequality_check(traj: Trajectory, report: ConvergenceReport,
                                 tol: float = 1e-12) -> FiniteTimeCheck:
    """Check V̇ ≤ −K_f V^{α_f} g(t) on every pre-convergence sample after max(T1, T2)."""
    params = traj.params
    if not _fractional(params):
        raise ValueError("the finite-time estimate needs a fractional controller")
    if report.region_entry is None or report.beta_inf is None:
        raise ValueError("trajectory never entered the finite-time region")
    n = traj.n
    k_last, a_last = params.k[-1], params.alpha[-1]
    K_f = 2.0 * report.beta_inf * k_last / (n - 1)
    a_f = (a_last + 1.0) / 2.0

    mask = (traj.times >= report.region_entry) & (traj.V > report.epsilon)
    idx = np.flatnonzero(mask)
    worst = -np.inf
    violations = 0
    for i in idx:
        _, phi = polar_arrays(traj.states[i])
        g = abs(np.cos(phi[n - 1] - phi[n - 2])) ** (a_last + 1.0)
        bound = -K_f * traj.V[i] ** a_f * g
        margin = traj.Vdot[i] - bound
        worst = max(worst, float(margin))
        violations += int(margin > tol)
    return FiniteTimeCheck(K_f=K_f, alpha_f=a_f, samples_checked=int(idx.size),
                           violations=violations,
                           worst_margin=float(worst) if idx.size else 0.0)


def singular_escape_check(traj: Trajectory, epsilon: float = EPSILON,
                          tol: float = 1e-9) -> SingularEscapeReport:
    """Find stretches where every coupling term vanishes away from the target and
    report whether the run leaves each of them again."""
    x = traj.coupling()
    singular = np.all(np.abs(x) <= tol, axis=1) & (traj.V > epsilon)
    entered, dwell = [], []
    escaped = True
    i, m = 0, len(traj)
    while i < m:
        if not singular[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and singular[j + 1]:
            j += 1
        entered.append(float(traj.times[i]))
        end = traj.times[j + 1] if j + 1 < m else traj.times[j]
        dwell.append(float(end - traj.times[i]))
        if j + 1 >= m:
            escaped = False
        i = j + 1
    return SingularEscapeReport(episodes=len(entered), escaped=escaped,
                                longest_dwell=max(dwell, default=0.0), entered_at=entered)
