"""Seeded realizations, ensembles and parameter sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .config import RunConfig
from .dynamics import GasState, IntegrationError, SpectrumTrace, init_exact, integrate
from .hamiltonian import HamiltonianSet, build_set
from .lzs import CrossingEvent, detect_crossings, ground_gap, propagate
from .noise import NoisePath, init_path
from .oracle import OracleError, compute_fidelity, eigenbasis_to_lab

FAILURE_LIMIT = 0.1


class EnsembleError(RuntimeError):
    pass


@dataclass
class RealizationRecord:
    index: int
    seed: int
    amplitude: float
    T: list
    success: list | None = None
    fidelity: float | None = None
    min_ground_gap: float | None = None
    events: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RealizationRecord":
        return cls(**d)

    def crossing_events(self) -> list[CrossingEvent]:
        return [CrossingEvent.from_dict(e) for e in self.events]


@dataclass
class RunResult:
    config_hash: str
    config: dict
    amplitude: float
    T: list
    records: list
    mean: list
    stderr: list
    fidelity_mean: float
    fidelity_stderr: float
    n_ok: int
    n_failed: int
    failed: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [r.to_dict() if isinstance(r, RealizationRecord) else r for r in self.records]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        d = dict(d)
        d["records"] = [RealizationRecord.from_dict(r) for r in d["records"]]
        return cls(**d)

    def success_matrix(self) -> np.ndarray:
        """Per-realization success, shape ``(n_ok, len(T))``, in index order."""
        rows = [r.success for r in self.records if not r.failed]
        return np.array(rows, dtype=float).reshape(len(rows), len(self.T))


# -- single realization ------------------------------------------------------

@dataclass
class Simulation:
    hset: HamiltonianSet
    path: NoisePath
    initial: GasState
    trace: SpectrumTrace
    final: GasState


def simulate(config: RunConfig, index: int) -> Simulation:
    """Build, seed, initialize and integrate one realization."""
    hset = build_set(config.operation, config.bias_preset, config.z_inv, config.mu)
    path = init_path(config.noise_config(), 1.0, index=index)
    state = init_exact(hset, path.dh)
    if config.noise.mode == "ou":
        path.rotate(state.vectors)
    trace, final = integrate(state, path, config.integrator_options())
    return Simulation(hset, path, state, trace, final)


def lab_noise(sim: Simulation, mode: str) -> np.ndarray | None:
    """Noise matrix at ``lam = 0`` in the basis of ``H0``."""
    if mode == "off":
        return None
    if mode == "frozen":
        return sim.path.dh
    return eigenbasis_to_lab(sim.hset.H0, sim.final.dh, sim.final.x)


def run_realization(config: RunConfig, index: int) -> RealizationRecord:
    """One seeded realization; integrator and fidelity failures are recorded, not raised."""
    times = config.sweep_times()
    rec = RealizationRecord(index=int(index), seed=int(config.ensemble.seed),
                            amplitude=float(config.noise.schedule.amplitude), T=[float(t) for t in times])
    try:
        sim = simulate(config, index)
        events = detect_crossings(sim.trace)
        occ = propagate(events, times, n_levels=sim.hset.dim)
        fid = compute_fidelity(sim.hset.H0, lab_noise(sim, config.noise.mode))
    except (IntegrationError, OracleError) as exc:
        rec.failed = True
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.success = [float(p) for p in occ[:, 0]]
    rec.fidelity = float(fid.F)
    rec.min_ground_gap = float(ground_gap(sim.trace, events))
    rec.events = [e.to_dict() for e in events]
    rec.diagnostics = {k: (float(v) if isinstance(v, float) else v) for k, v in sim.trace.diagnostics.items()}
    return rec


# -- ensembles ---------------------------------------------------------------

def _mean_se(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = values.shape[0]
    if n == 0:
        nan = np.full(values.shape[1:], math.nan)
        return nan, nan
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def aggregate(config: RunConfig, records: list[RealizationRecord]) -> RunResult:
    """Fixed index-order reduction of realization records."""
    records = sorted(records, key=lambda r: r.index)
    ok = [r for r in records if not r.failed]
    times = config.sweep_times()
    succ = np.array([r.success for r in ok], dtype=float).reshape(len(ok), len(times))
    fid = np.array([r.fidelity for r in ok], dtype=float).reshape(len(ok), 1)
    mean, se = _mean_se(succ)
    fmean, fse = _mean_se(fid)
    n_failed = len(records) - len(ok)
    return RunResult(
        config_hash=config.config_hash(),
        config=config.to_dict(),
        amplitude=float(config.noise.schedule.amplitude),
        T=[float(t) for t in times],
        records=records,
        mean=[float(m) for m in mean],
        stderr=[float(s) for s in se],
        fidelity_mean=float(fmean[0]),
        fidelity_stderr=float(fse[0]),
        n_ok=len(ok),
        n_failed=n_failed,
        failed=n_failed > FAILURE_LIMIT * len(records),
    )


def run_ensemble(config: RunConfig, jobs: int | None = None) -> RunResult:
    """``config.ensemble.n`` realizations, optionally in worker processes."""
    n = config.ensemble.n
    jobs = config.ensemble.jobs if jobs is None else jobs
    work = partial(run_realization, config)
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(work, range(n), chunksize=max(1, n // (4 * jobs))))
    else:
        records = [work(i) for i in range(n)]
    return aggregate(config, records)


# -- sweeps ------------------------------------------------------------------

@dataclass
class SweepCurve:
    """Ensemble-mean success against speed ``1/T`` or noise amplitude."""

    axis: str
    values: np.ndarray
    T: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    fidelity: np.ndarray
    fidelity_stderr: np.ndarray
    results: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.values)

    def success_matrix(self) -> np.ndarray | None:
        """Per-realization success along the curve, shape ``(n, len(curve))``, when available."""
        if not self.results:
            return None
        if self.axis == "speed":
            return self.results[0].success_matrix()
        cols = [r.success_matrix()[:, 0] for r in self.results]
        if len({len(c) for c in cols}) != 1:
            return None
        return np.column_stack(cols)


def _check(result: RunResult, label: str) -> None:
    if result.failed:
        raise EnsembleError(f"{label}: {result.n_failed} of {result.n_failed + result.n_ok} "
                            f"realizations failed (limit {FAILURE_LIMIT:.0%})")


def sweep(config: RunConfig, axis: str | None = None, jobs: int | None = None) -> SweepCurve:
    """One ensemble per axis value; a speed sweep reuses each realization for every T."""
    axis = axis or config.sweep.axis
    if axis != config.sweep.axis:
        config = config.replace(**{"sweep.axis": axis})
    if axis == "speed":
        res = run_ensemble(config, jobs)
        _check(res, "speed sweep")
        T = np.asarray(res.T)
        n = len(T)
        return SweepCurve("speed", 1.0 / T, T, np.asarray(res.mean), np.asarray(res.stderr),
                          np.full(n, res.fidelity_mean), np.full(n, res.fidelity_stderr), [res])
    results = []
    for eps in config.sweep.values:
        cfg = config.replace(**{"noise.schedule": asdict(config.noise.schedule.with_amplitude(eps))})
        res = run_ensemble(cfg, jobs)
        _check(res, f"amplitude {eps:g}")
        results.append(res)
    vals = np.array([float(v) for v in config.sweep.values])
    return SweepCurve(
        "amplitude", vals, np.full(len(vals), config.sweep.T),
        np.array([r.mean[0] for r in results]), np.array([r.stderr[0] for r in results]),
        np.array([r.fidelity_mean for r in results]), np.array([r.fidelity_stderr for r in results]),
        results,
    )


def resummarize(result: RunResult, T) -> np.ndarray:
    """Per-realization success at new durations ``T`` from the stored crossing events."""
    T = np.atleast_1d(np.asarray(T, dtype=float))
    rows = []
    for r in result.records:
        if r.failed:
            continue
        rows.append(propagate(r.crossing_events(), T, n_levels=16)[:, 0])
    return np.array(rows).reshape(len(rows), len(T))
