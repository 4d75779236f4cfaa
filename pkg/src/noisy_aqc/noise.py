"""GOE draws and Ornstein-Uhlenbeck evolution of the noise matrix.

For a constant amplitude ``eps`` one step of length ``d`` is the exact OU map

    dh <- exp(-tau*d) * dh + G,   G ~ GOE(eps * sqrt((1 - exp(-2*tau*d)) / (2*tau)))

With a scheduled amplitude ``eps(lam)`` the noise is ``eps(lam) * xi`` for a
unit OU process ``xi``, so the carried-over part is also rescaled by
``eps(new) / eps(old)``.  This keeps ``dh`` exactly zero wherever the
schedule is zero.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

NOISE_MODES = ("off", "frozen", "ou")


@dataclass(frozen=True)
class ConstantSchedule:
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    def __call__(self, lam: float) -> float:
        return self.epsilon


@dataclass(frozen=True)
class TanhSchedule:
    """``epsilon0 * tanh(alpha * lam)``; zero at the end of the sweep."""

    epsilon0: float
    alpha: float = 10.0

    def __post_init__(self):
        if not self.epsilon0 >= 0:
            raise ValueError("epsilon0 must be >= 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    def __call__(self, lam: float) -> float:
        return self.epsilon0 * math.tanh(self.alpha * lam)


def amplitude_at(schedule, lam: float) -> float:
    return float(schedule(lam))


@dataclass(frozen=True)
class NoiseConfig:
    tau: float = 0.1
    schedule: ConstantSchedule | TanhSchedule = ConstantSchedule(0.0)
    mode: str = "ou"
    seed: int = 0
    dim: int = 16
    # draw dh(1) at the OU stationary scale eps/sqrt(2 tau) instead of eps
    stationary_start: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}; expected one of {NOISE_MODES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def make_rng(seed: int, index: int | None = None) -> np.random.Generator:
    """Counter-based stream: realization ``index`` of master ``seed``."""
    key = () if index is None else (int(index),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def sample_goe(dim: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Real symmetric Gaussian matrix: off-diagonal std ``scale``, diagonal std ``scale*sqrt(2)``."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    a = rng.standard_normal((dim, dim))
    return (a + a.T) * (scale / math.sqrt(2.0))


@dataclass
class NoisePath:
    """Single-owner noise realisation, advanced from ``lam = 1`` towards 0."""

    config: NoiseConfig
    lam: float
    dh: np.ndarray
    rng: np.random.Generator = field(repr=False)

    def copy(self) -> "NoisePath":
        return copy.deepcopy(self)

    def rotate(self, vectors: np.ndarray) -> None:
        """Re-express ``dh`` in the orthonormal basis given by the columns of ``vectors``."""
        m = vectors.T @ self.dh @ vectors
        self.dh = 0.5 * (m + m.T)

    def advance(self, dlam: float, epsilon_effective: float | None = None) -> np.ndarray:
        """Step ``dlam > 0`` towards ``lam = 0`` in place; return the increment of ``dh``."""
        if not dlam > 0:
            raise ValueError("dlam must be > 0")
        new_lam = max(self.lam - dlam, 0.0)
        if self.config.mode != "ou":
            self.lam = new_lam
            return np.zeros_like(self.dh)
        tau = self.config.tau
        decay = math.exp(-tau * dlam)
        unit_std = math.sqrt(-math.expm1(-2.0 * tau * dlam) / (2.0 * tau))
        if epsilon_effective is None:
            old_amp = amplitude_at(self.config.schedule, self.lam)
            new_amp = amplitude_at(self.config.schedule, new_lam)
            if old_amp != new_amp:
                decay *= new_amp / old_amp if old_amp > 0 else 0.0
            eps = new_amp
        else:
            eps = epsilon_effective
        new = decay * self.dh + sample_goe(self.dh.shape[0], eps * unit_std, self.rng)
        inc = new - self.dh
        self.dh = new
        self.lam = new_lam
        return inc


def advance_ou(path: NoisePath, dlam: float, epsilon_effective: float | None = None):
    """Functional form of :meth:`NoisePath.advance`: returns ``(new_path, increment)``."""
    new = path.copy()
    inc = new.advance(dlam, epsilon_effective)
    return new, inc


def init_path(config: NoiseConfig, lam0: float = 1.0, index: int | None = None) -> NoisePath:
    """Start a path at ``lam0`` with a GOE draw at scale ``amplitude(lam0)``.

    ``index`` selects an independent stream for one realization of an ensemble.
    """
    rng = make_rng(config.seed, index)
    if config.mode == "off":
        return NoisePath(config, lam0, np.zeros((config.dim, config.dim)), rng)
    scale = amplitude_at(config.schedule, lam0)
    if config.stationary_start:
        scale /= math.sqrt(2.0 * config.tau)
    return NoisePath(config, lam0, sample_goe(config.dim, scale, rng), rng)
