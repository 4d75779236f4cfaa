"""Gap minima along a spectrum trace and Landau-Zener-Stueckelberg occupation cascade.

Occupations are tracked by energy rank.  A minimum of the separation
between levels of rank ``r`` and ``r+1`` moves population between them with
probability ``p = exp(-gap_min^2 * T / coupling)`` for a sweep of duration T
(``|dlam/dt| = 1/T``).  Gas levels that pass through each other are true
crossings: ``gap_min = 0`` and ``p = 1``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import SpectrumTrace, parabola_vertex as _parabola_vertex

C_FLOOR = 1e-12


@dataclass(frozen=True)
class CrossingEvent:
    rank: int  # lower level of the energy-adjacent pair (rank, rank + 1)
    lam_star: float
    delta_min: float
    coupling: float
    labels: tuple[int, int] = (-1, -1)
    kind: str = "avoided"

    @property
    def pair(self) -> tuple[int, int]:
        return (self.rank, self.rank + 1)

    @property
    def floored(self) -> bool:
        return self.delta_min > 0 and self.coupling < C_FLOOR

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CrossingEvent":
        d = dict(d)
        d["labels"] = tuple(d.get("labels", (-1, -1)))
        return cls(**d)


def detect_crossings(trace: SpectrumTrace, from_grid: bool = False) -> list[CrossingEvent]:
    """All interior gap minima between energy-adjacent levels, latest-first in the sweep.

    Traces produced by the integrator carry minima found at full step
    resolution; those are used unless ``from_grid`` is set.  Otherwise the
    stored grid is scanned as follows.

    A sign change of ``x_a - x_b`` between samples is a true crossing, located
    by linear interpolation.  Otherwise each interior local minimum of
    ``|x_a - x_b|`` at which ``a`` and ``b`` are energy-adjacent is refined
    by a parabola through the three bracketing samples.
    """
    if trace.events is not None and not from_grid:
        events = [CrossingEvent.from_dict(e) for e in trace.events]
        events.sort(key=lambda e: (-e.lam_star, e.rank))
        return events
    lam = np.asarray(trace.lambdas, dtype=float)
    x = np.asarray(trace.x, dtype=float)
    n_grid, n = x.shape
    if n_grid < 3:
        raise ValueError("need at least 3 grid points to find gap minima")
    rank = np.argsort(trace.order, axis=1)
    events: list[CrossingEvent] = []
    for a in range(n - 1):
        for b in range(a + 1, n):
            d = x[:, b] - x[:, a]
            g = np.abs(d)
            ra, rb = rank[:, a], rank[:, b]
            adjacent = np.abs(ra - rb) == 1
            lower = np.minimum(ra, rb)

            flips = np.nonzero(d[:-1] * d[1:] < 0)[0]
            for i in flips:
                t = d[i] / (d[i] - d[i + 1])
                ls = lam[i] + t * (lam[i + 1] - lam[i])
                xs = x[i] + t * (x[i + 1] - x[i])
                level = 0.5 * (xs[a] + xs[b])
                below = int(np.sum(xs < level)) - int(xs[a] < level) - int(xs[b] < level)
                j = i if adjacent[i] else i + 1
                c = float(trace.coupling[j, lower[j]]) if adjacent[j] else 0.0
                events.append(CrossingEvent(below, float(ls), 0.0, c, (a, b), "true"))

            touch = np.nonzero((d[1:-1] == 0) & (d[:-2] * d[2:] < 0))[0] + 1
            for i in touch:
                c = float(trace.coupling[i, lower[i]]) if adjacent[i] else 0.0
                events.append(CrossingEvent(int(lower[i]), float(lam[i]), 0.0, c, (a, b), "true"))

            inner = np.arange(1, n_grid - 1)
            is_min = (g[inner] < g[inner - 1]) & (g[inner] <= g[inner + 1]) & adjacent[inner]
            same_side = (d[inner - 1] * d[inner] > 0) & (d[inner] * d[inner + 1] > 0)
            for i in inner[is_min & (same_side | (g[inner] == 0))]:
                if g[i] == 0 and d[i - 1] * d[i + 1] < 0:
                    continue
                ls, gm = _parabola_vertex(lam[i - 1:i + 2], g[i - 1:i + 2])
                events.append(CrossingEvent(int(lower[i]), float(ls), float(gm),
                                            float(trace.coupling[i, lower[i]]), (a, b), "avoided"))
    events = [e for e in events if 0.0 < e.lam_star < 1.0]
    events.sort(key=lambda e: (-e.lam_star, e.rank))
    return events


def lzs_probability(event: CrossingEvent, T):
    """Excitation probability across one gap minimum for sweep time ``T`` (scalar or array)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("sweep time T must be positive")
    if event.delta_min == 0.0:
        p = np.ones_like(T)
    else:
        p = np.exp(-event.delta_min**2 * T / max(event.coupling, C_FLOOR))
    return float(p) if p.ndim == 0 else p


def propagate(events: Sequence[CrossingEvent], T, n_levels: int = 16) -> np.ndarray:
    """Occupation by energy rank at ``lam = 0``, starting in the ground state at ``lam = 1``.

    ``T`` may be an array; the result then has shape ``(len(T), n_levels)``.
    """
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    occ = np.zeros((T_arr.size, n_levels))
    occ[:, 0] = 1.0
    for ev in sorted(events, key=lambda e: -e.lam_star):
        r = ev.rank
        if r < 0 or r + 1 >= n_levels:
            raise ValueError(f"event pair {ev.pair} outside {n_levels} levels")
        p = np.atleast_1d(lzs_probability(ev, T_arr))
        lo, hi = occ[:, r].copy(), occ[:, r + 1].copy()
        occ[:, r] = (1 - p) * lo + p * hi
        occ[:, r + 1] = p * lo + (1 - p) * hi
    assert np.all(occ >= -1e-15) and np.all(occ <= 1 + 1e-15)
    assert np.allclose(occ.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    return occ[0] if np.ndim(T) == 0 else occ


def success_probability(trace_or_events, T):
    """Probability of ending in the ground state; accepts a trace or an event list."""
    if isinstance(trace_or_events, SpectrumTrace):
        events = detect_crossings(trace_or_events)
        n = trace_or_events.x.shape[1]
    else:
        events = list(trace_or_events)
        n = max([e.rank + 2 for e in events], default=2)
    occ = propagate(events, T, n_levels=n)
    return occ[..., 0]


def ground_gap(trace: SpectrumTrace, events: Iterable[CrossingEvent] | None = None) -> float:
    """Smallest separation of the two lowest levels, sampled or at a rank-0 event."""
    events = detect_crossings(trace) if events is None else events
    values = [float(np.min(trace.gaps[:, 0]))]
    values += [e.delta_min for e in events if e.rank == 0]
    return min(values)
