"""Run configuration: JSON loading, validation, overrides and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dynamics import IntegratorOptions
from .hamiltonian import BIAS_PRESETS, OPERATIONS
from .noise import NOISE_MODES, ConstantSchedule, NoiseConfig, TanhSchedule

SWEEP_AXES = ("speed", "amplitude")


class ConfigError(ValueError):
    pass


def default_speed_grid(t_min: float = 1e1, t_max: float = 1e5, per_decade: int = 24) -> list[float]:
    """Log-spaced sweep durations T with ``per_decade`` points per decade, endpoints included."""
    n = int(round(np.log10(t_max / t_min) * per_decade)) + 1
    return [float(t) for t in np.logspace(np.log10(t_min), np.log10(t_max), n)]


@dataclass
class ScheduleSpec:
    type: str = "constant"
    epsilon: float = 0.1
    epsilon0: float = 0.1
    alpha: float = 10.0

    def build(self):
        if self.type == "constant":
            return ConstantSchedule(self.epsilon)
        if self.type == "tanh":
            return TanhSchedule(self.epsilon0, self.alpha)
        raise ConfigError(f"noise.schedule.type must be 'constant' or 'tanh', got {self.type!r}")

    def with_amplitude(self, value: float) -> "ScheduleSpec":
        """Same schedule with its overall amplitude (epsilon or epsilon0) replaced."""
        out = copy.copy(self)
        if self.type == "tanh":
            out.epsilon0 = float(value)
        else:
            out.epsilon = float(value)
        return out

    @property
    def amplitude(self) -> float:
        return self.epsilon0 if self.type == "tanh" else self.epsilon


@dataclass
class NoiseSpec:
    mode: str = "ou"
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    stationary_start: bool = False


@dataclass
class IntegratorSpec:
    base_step: float = 1e-3
    tol: float = 1e-9
    gap_threshold: float = 1e-2
    max_depth: int = 12


@dataclass
class EnsembleSpec:
    n: int = 100
    seed: int = 0
    jobs: int = 1


@dataclass
class SweepSpec:
    axis: str = "speed"
    values: list = field(default_factory=default_speed_grid)
    # sweep duration used for amplitude sweeps
    T: float = 100.0


@dataclass
class FitSpec:
    p_min: float = 0.02
    p_max: float = 0.5


@dataclass
class RunConfig:
    operation: str = "00->00"
    bias_preset: str = "diagonal-ladder"
    z_inv: float = 0.1
    mu: float = -0.1
    tau: float = 0.1
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    grid_points: int = 1001
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    fit: FitSpec = field(default_factory=FitSpec)

    def __post_init__(self):
        self.validate()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        noise = dict(kw.pop("noise", {}) or {})
        sched = noise.pop("schedule", {}) or {}
        try:
            kw["noise"] = NoiseSpec(schedule=ScheduleSpec(**sched), **noise)
            kw["integrator"] = IntegratorSpec(**(kw.get("integrator") or {}))
            kw["ensemble"] = EnsembleSpec(**(kw.get("ensemble") or {}))
            kw["sweep"] = SweepSpec(**(kw.get("sweep") or {}))
            kw["fit"] = FitSpec(**(kw.get("fit") or {}))
        except TypeError as exc:
            raise ConfigError(f"bad config section: {exc}") from exc
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "RunConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"noise.mode": "off"})``."""
        data = self.to_dict()
        for key, value in changes.items():
            node = data
            parts = key.split(".")
            for p in parts[:-1]:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config key {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[parts[-1]] = value
        return RunConfig.from_dict(data)

    # -- derived objects ---------------------------------------------------

    def integrator_options(self) -> IntegratorOptions:
        i = self.integrator
        return IntegratorOptions(base_step=i.base_step, tol=i.tol, gap_threshold=i.gap_threshold,
                                 max_depth=i.max_depth, grid_points=self.grid_points)

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(tau=self.tau, schedule=self.noise.schedule.build(), mode=self.noise.mode,
                           seed=self.ensemble.seed, stationary_start=self.noise.stationary_start)

    def sweep_times(self) -> np.ndarray:
        """Durations T at which success is evaluated."""
        if self.sweep.axis == "speed":
            return np.asarray(self.sweep.values, dtype=float)
        return np.array([self.sweep.T], dtype=float)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if self.operation not in OPERATIONS:
            raise ConfigError(f"operation must be one of {sorted(OPERATIONS)}, got {self.operation!r}")
        if self.bias_preset not in BIAS_PRESETS:
            raise ConfigError(f"bias_preset must be one of {BIAS_PRESETS}, got {self.bias_preset!r}")
        if not self.z_inv > 0:
            raise ConfigError("z_inv must be positive")
        if not np.isfinite(self.mu):
            raise ConfigError("mu must be finite")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.noise.mode not in NOISE_MODES:
            raise ConfigError(f"noise.mode must be one of {NOISE_MODES}, got {self.noise.mode!r}")
        try:
            self.noise.schedule.build()
            self.integrator_options()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        e = self.ensemble
        if e.n < 1:
            raise ConfigError("ensemble.n must be >= 1")
        if not 0 <= e.seed < 2**64:
            raise ConfigError("ensemble.seed must be an unsigned 64-bit integer")
        if e.jobs < 1:
            raise ConfigError("ensemble.jobs must be >= 1")
        if self.sweep.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}, got {self.sweep.axis!r}")
        vals = list(self.sweep.values)
        if not vals:
            raise ConfigError("sweep.values must be nonempty")
        if any(not (isinstance(v, (int, float)) and np.isfinite(v)) for v in vals):
            raise ConfigError("sweep.values must be finite numbers")
        if self.sweep.axis == "speed" and any(v <= 0 for v in vals):
            raise ConfigError("speed sweep durations T must be positive")
        if self.sweep.axis == "amplitude" and any(v < 0 for v in vals):
            raise ConfigError("amplitude sweep values must be >= 0")
        if not self.sweep.T > 0:
            raise ConfigError("sweep.T must be positive")
        if not 0 < self.fit.p_min < self.fit.p_max <= 1:
            raise ConfigError("fit band needs 0 < p_min < p_max <= 1")
