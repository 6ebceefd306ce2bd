# ============================================================
# experiment.py
# Experiment files → validated config → closed-loop run(s)
# → trajectory CSV + flat key = value summary.
#
# File grammar (UTF-8, one "key = value" per line, # comments):
#   lists           0, 1, 2          reals may be fractions: 1/3
#   initial         basis:<j>        or   re,im; re,im; ...
#   booleans        true/false/yes/no/1/0
# ============================================================

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import (
    BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, field_validator,
)

from .analysis import ConvergenceReport, detect_convergence
from .controllers import ControllerKind, ControllerParams
from .errors import ConfigError, InvalidLevelError, NonDegeneracyError
from .propagation import IntegratorConfig, Trajectory, simulate
from .settings import BETA, DEFAULT_DT, EPSILON, NORM_TOL, OUTPUT_DIR, SAMPLE_STRIDE, WORKERS
from .states import ComplexState, TargetState
from .system import LadderSystem, build_ladder

log = logging.getLogger(__name__)

REQUIRED_KEYS = ("n", "lambda", "controller", "k", "initial")
KNOWN_KEYS = REQUIRED_KEYS + (
    "name", "alpha", "target", "dt", "t_max", "epsilon", "beta", "sample_stride",
    "renormalize", "norm_tol", "output", "probe_time",
)
# pydantic field name → key as written in the file
_FIELD_TO_KEY = {"lam": "lambda", "initial_amplitudes": "initial"}

CSV_FLOAT_FORMAT = "%.17g"
DEFAULT_T_MAX = 20.0
COMPARE_ORDER = (ControllerKind.FRACTIONAL, ControllerKind.STANDARD, ControllerKind.BANGBANG)


# ─────────────────────────────────────────────────────────────
# SCHEMAS
# ─────────────────────────────────────────────────────────────

class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    name: str = "experiment"
    n: int = Field(ge=2)
    lam: tuple[float, ...]
    controller: ControllerKind
    k: tuple[PositiveFloat, ...]
    alpha: Optional[tuple[float, ...]] = None
    initial_spec: str
    initial_amplitudes: tuple[complex, ...]
    target: int = Field(ge=1)
    dt: PositiveFloat = DEFAULT_DT
    t_max: PositiveFloat = DEFAULT_T_MAX
    epsilon: PositiveFloat = EPSILON
    beta: float = Field(default=BETA, gt=0.0, lt=1.0)
    sample_stride: int = Field(default=SAMPLE_STRIDE, ge=1)
    renormalize: bool = True
    norm_tol: PositiveFloat = NORM_TOL
    output: str
    probe_time: Optional[float] = Field(default=None, ge=0.0)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v):
        if v is not None:
            for j, a in enumerate(v, start=1):
                if not 0.0 < a < 1.0:
                    raise ValueError(f"alpha_{j} = {a!r} outside (0, 1)")
        return v

    # ── derived objects ──────────────────────────────────────
    def system(self) -> LadderSystem:
        return build_ladder(self.n, self.lam)

    def params(self, kind: ControllerKind | None = None) -> ControllerParams:
        return ControllerParams(kind=kind or self.controller, k=self.k, alpha=self.alpha)

    def initial(self) -> ComplexState:
        return ComplexState(amplitudes=self.initial_amplitudes, norm_tol=self.norm_tol)

    def target_state(self) -> TargetState:
        return TargetState(index=self.target)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(dt=self.dt, t_max=self.t_max, sample_stride=self.sample_stride,
                                renormalize=self.renormalize, norm_tol=self.norm_tol)


class ExperimentResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    config: ExperimentConfig
    trajectory: Trajectory
    report: ConvergenceReport
    population_at_probe: Optional[float]
    csv_path: Path
    summary_path: Path


class ComparisonRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ControllerKind
    t_f: Optional[float]
    population_at_reference: float
    final_population: float
    max_abs_u: float
    total_descent: float


class ComparisonTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    reference_time: float
    rows: list[ComparisonRow]

    def row(self, kind: ControllerKind | str) -> ComparisonRow:
        kind = ControllerKind(kind)
        return next(r for r in self.rows if r.kind is kind)


# ─────────────────────────────────────────────────────────────
# PARSING
# ─────────────────────────────────────────────────────────────

def _real(token: str) -> float:
    token = token.strip()
    try:
        x = float(token)
    except ValueError:
        x = float(Fraction(token))
    if not np.isfinite(x):
        raise ValueError(f"{token!r} is not finite")
    return x


def _reals(value: str) -> tuple[float, ...]:
    parts = value.strip().removeprefix("[").removesuffix("]").split(",")
    if any(not p.strip() for p in parts):
        raise ValueError("empty list entry")
    return tuple(_real(p) for p in parts)


def _int(value: str) -> int:
    x = _real(value)
    if not float(x).is_integer():
        raise ValueError(f"{value!r} is not an integer")
    return int(x)


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"{value!r} is not a boolean")


def _initial(spec: str, n: int) -> tuple[complex, ...]:
    spec = spec.strip()
    if spec.lower().startswith("basis:"):
        level = _int(spec.split(":", 1)[1])
        if not 1 <= level <= n:
            raise InvalidLevelError(f"basis level {level} outside [1, {n}]")
        c = [0j] * n
        c[level - 1] = 1 + 0j
        return tuple(c)
    amps = []
    for pair in spec.split(";"):
        re_im = pair.split(",")
        if len(re_im) != 2:
            raise ValueError(f"{pair.strip()!r} is not a 're,im' pair")
        amps.append(complex(_real(re_im[0]), _real(re_im[1])))
    return tuple(amps)


_CONVERTERS = {
    "name": str.strip,
    "n": _int,
    "lambda": _reals,
    "controller": lambda v: v.strip().lower(),
    "k": _reals,
    "alpha": _reals,
    "target": _int,
    "dt": _real,
    "t_max": _real,
    "epsilon": _real,
    "beta": _real,
    "sample_stride": _int,
    "renormalize": _bool,
    "norm_tol": _real,
    "output": str.strip,
    "probe_time": _real,
}


def _read_pairs(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "given twice")
        if not value:
            raise ConfigError(key, "empty value")
        raw[key] = value
    return raw


def parse_config(text: str, source: str | Path | None = None) -> ExperimentConfig:
    raw = _read_pairs(text)
    for key in REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(key, "missing required key")

    values: dict[str, object] = {}
    for key, value in raw.items():
        if key == "initial":
            continue
        try:
            values[key] = _CONVERTERS[key](value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(key, f"malformed value {value!r}") from exc

    n = values["n"]
    try:
        amplitudes = _initial(raw["initial"], n)
    except (ValueError, ZeroDivisionError, InvalidLevelError) as exc:
        raise ConfigError("initial", str(exc)) from exc

    name = values.pop("name", None) or (Path(source).stem if source else "experiment")
    fields = {
        "name": name,
        "lam": values.pop("lambda"),
        "initial_spec": raw["initial"],
        "initial_amplitudes": amplitudes,
        "target": values.pop("target", n),
        "output": values.pop("output", os.path.join(OUTPUT_DIR, name)),
        **values,
    }
    try:
        config = ExperimentConfig.model_validate(fields)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = str(err["loc"][0]) if err["loc"] else "config"
        raise ConfigError(_FIELD_TO_KEY.get(field, field), err["msg"]) from exc

    _check_consistency(config)
    log.info(f"Loaded config '{config.name}': n={config.n}, {config.controller.value} control")
    return config


def _check_consistency(config: ExperimentConfig) -> None:
    n = config.n
    if len(config.lam) != n:
        raise ConfigError("lambda", f"{len(config.lam)} energies for n = {n}")
    if len(config.k) != n - 1:
        raise ConfigError("k", f"{len(config.k)} gains for n = {n} (expected {n - 1})")
    if config.alpha is not None and len(config.alpha) != n - 1:
        raise ConfigError("alpha", f"{len(config.alpha)} exponents for n = {n} (expected {n - 1})")
    if config.controller is ControllerKind.FRACTIONAL and config.alpha is None:
        raise ConfigError("alpha", "required by the fractional controller")
    if len(config.initial_amplitudes) != n:
        raise ConfigError("initial", f"{len(config.initial_amplitudes)} amplitudes for n = {n}")
    if config.target != n:
        raise ConfigError("target", f"target must be the last level {n}")
    if not config.dt < config.t_max:
        raise ConfigError("dt", f"dt = {config.dt} must be smaller than t_max = {config.t_max}")
    if config.probe_time is not None and config.probe_time > config.t_max:
        raise ConfigError("probe_time", f"{config.probe_time} lies beyond t_max = {config.t_max}")
    try:
        config.system()
    except NonDegeneracyError as exc:
        raise ConfigError("lambda", str(exc)) from exc
    try:
        config.initial()
    except ValidationError as exc:
        raise ConfigError("initial", exc.errors()[0]["msg"]) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    return parse_config(text, source=path)


# ─────────────────────────────────────────────────────────────
# SERIALISATION
# ─────────────────────────────────────────────────────────────

def write_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    traj.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def read_trajectory_csv(path: str | Path, params: ControllerParams | None = None,
                        target: TargetState | None = None) -> Trajectory:
    df = pd.read_csv(path, float_precision="round_trip")
    n = sum(1 for c in df.columns if c.startswith("re_c"))
    states = np.empty((len(df), n), dtype=complex)
    for j in range(n):
        states[:, j] = df[f"re_c{j + 1}"].to_numpy(float) + 1j * df[f"im_c{j + 1}"].to_numpy(float)
    controls = df[[f"u_{j + 1}" for j in range(n - 1)]].to_numpy(float)
    return Trajectory(
        n=n,
        target=target or TargetState.last(n),
        params=params,
        times=df["t"].to_numpy(float),
        states=states,
        controls=controls,
        V=df["V"].to_numpy(float),
        Vdot=df["Vdot"].to_numpy(float),
        norm_drift=df["norm_drift"].to_numpy(float),
    )


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, ControllerKind):
        return value.value
    return str(value)


def format_summary(config: ExperimentConfig, report: ConvergenceReport,
                   population_at_probe: float | None, kind: ControllerKind | None = None) -> str:
    lines = [
        f"name = {config.name}",
        f"controller = {_fmt(kind or config.controller)}",
        f"n = {config.n}",
        f"dt = {_fmt(config.dt)}",
        f"t_max = {_fmt(config.t_max)}",
        f"probe_time = {_fmt(config.probe_time)}",
        f"population_at_probe = {_fmt(population_at_probe)}",
    ]
    for key, value in report.model_dump().items():
        lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def read_summary(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


# ─────────────────────────────────────────────────────────────
# RUNS
# ─────────────────────────────────────────────────────────────

def _simulate(config: ExperimentConfig, kind: ControllerKind, progress: bool) -> Trajectory:
    return simulate(config.system(), config.params(kind), config.initial(),
                    config.target_state(), config.integrator(), progress=progress)


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    log.info(f"Running experiment '{config.name}'")
    traj = _simulate(config, config.controller, progress)
    report = detect_convergence(traj, config.epsilon, config.beta)
    probe = traj.population_at(config.probe_time) if config.probe_time is not None else None

    out_dir = Path(config.output)
    csv_path = write_trajectory_csv(traj, out_dir / "trajectory.csv")
    summary_path = out_dir / "summary.txt"
    summary_path.write_text(format_summary(config, report, probe), encoding="utf-8")
    log.info(f"✓ Wrote {csv_path} and {summary_path}")

    return ExperimentResult(config=config, trajectory=traj, report=report,
                            population_at_probe=probe, csv_path=csv_path,
                            summary_path=summary_path)


def compare_controllers(config: ExperimentConfig, progress: bool = False,
                        workers: int = WORKERS) -> ComparisonTable:
    """Same scenario under the three laws; populations read at the fractional t_f."""
    if config.alpha is None:
        raise ConfigError("alpha", "compare needs alpha for the fractional run")

    trajectories: dict[ControllerKind, Trajectory] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(_simulate, config, kind, progress): kind for kind in COMPARE_ORDER}
        for future in as_completed(futures):
            trajectories[futures[future]] = future.result()

    reports = {kind: detect_convergence(traj, config.epsilon, config.beta)
               for kind, traj in trajectories.items()}
    t_ref = reports[ControllerKind.FRACTIONAL].t_f
    if t_ref is None:
        log.warning("Fractional run did not converge; comparing at t_max")
        t_ref = config.t_max

    rows = []
    out_dir = Path(config.output)
    for kind in COMPARE_ORDER:
        traj = trajectories[kind]
        write_trajectory_csv(traj, out_dir / f"trajectory_{kind.value}.csv")
        rows.append(ComparisonRow(
            kind=kind,
            t_f=reports[kind].t_f,
            population_at_reference=traj.population_at(t_ref),
            final_population=traj.final_population,
            max_abs_u=float(np.abs(traj.controls).max()),
            total_descent=float(np.trapezoid(traj.Vdot, traj.times)),
        ))

    table = ComparisonTable(reference_time=float(t_ref), rows=rows)
    (out_dir / "comparison.txt").write_text(format_comparison(table), encoding="utf-8")
    log.info(f"✓ Comparison written to {out_dir / 'comparison.txt'}")
    return table


def format_comparison(table: ComparisonTable) -> str:
    lines = [f"reference_time = {_fmt(table.reference_time)}"]
    for row in table.rows:
        prefix = row.kind.value
        for key, value in row.model_dump(exclude={"kind"}).items():
            lines.append(f"{prefix}.{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"
