"""Noisy adiabatic CNOT gate simulated as a stochastic eigenvalue gas."""
from .config import RunConfig
from .dynamics import GasState, IntegrationError, IntegratorOptions, SpectrumTrace, init_exact, integrate
from .hamiltonian import build_set
from .lzs import CrossingEvent, detect_crossings, propagate, success_probability
from .noise import ConstantSchedule, NoiseConfig, TanhSchedule, init_path
from .runner import run_ensemble, run_realization, sweep

__version__ = "0.1.0"

__all__ = [
    "ConstantSchedule", "CrossingEvent", "GasState", "IntegrationError", "IntegratorOptions", "NoiseConfig",
    "RunConfig", "SpectrumTrace", "TanhSchedule", "build_set", "detect_crossings", "init_exact", "init_path",
    "integrate", "propagate", "run_ensemble", "run_realization", "success_probability", "sweep",
]
