"""Eigenvalue-gas dynamics of ``H(lam) = H0 + lam*Z*Hb + dh(lam)``.

Each level is a particle with position ``x_n``, velocity
``v_n = <n|Z Hb|n>`` and pair coupling ``l_nm = (x_n - x_m) <n|Z Hb|m>``.
With ``dh'`` the lam-derivative of the noise in the instantaneous eigenbasis,

    x_n' = v_n + dh'_nn
    v_n' = sum_k 2 l_nk^2 / (x_n-x_k)^3 + (l_nk dh'_kn - dh'_nk l_kn) / (x_n-x_k)^2
    l_nm' = sum_k l_nk l_km [1/(x_n-x_k)^2 - 1/(x_m-x_k)^2]
              + (x_n-x_m)(l_nk dh'_km - l_km dh'_nk) / ((x_m-x_k)(x_n-x_k))
            + dh'_nm (v_m - v_n) + l_nm (dh'_nn - dh'_mm) / (x_n - x_m)

The sweep runs from ``lam = 1`` to ``lam = 0`` with a fourth-order
Adams-Bashforth/Adams-Moulton PECE scheme, RK4 start-up, and step halving
near close approaches of interacting levels.  Level labels are fixed at
``lam = 1``; non-interacting levels pass through each other.
"""
from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field

import numpy as np

from .hamiltonian import HamiltonianSet, assemble, _eigh_deterministic


class IntegrationError(RuntimeError):
    def __init__(self, message: str, lam: float | None = None, pair: tuple[int, int] | None = None):
        super().__init__(message)
        self.lam = lam
        self.pair = pair


class StepRejected(Exception):
    def __init__(self, pair: tuple[int, int]):
        super().__init__(f"interacting levels {pair} closer than the denominator floor")
        self.pair = pair


@dataclass
class GasState:
    lam: float
    x: np.ndarray
    v: np.ndarray
    l: np.ndarray
    dh: np.ndarray | None = None
    # eigenvectors at lam (columns, in label order) when known
    vectors: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class IntegratorOptions:
    base_step: float = 1e-3
    tol: float = 1e-9
    gap_threshold: float = 1e-2
    max_depth: int = 12
    delta_floor: float = 1e-10
    l_floor: float = 1e-12
    grid_points: int = 1001

    def __post_init__(self):
        for name in ("base_step", "tol", "gap_threshold", "delta_floor", "l_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_depth < 0 or self.max_depth > 30:
            raise ValueError("max_depth must lie in [0, 30]")
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")
        n_steps = round(1.0 / self.base_step)
        if abs(n_steps * self.base_step - 1.0) > 1e-9:
            raise ValueError("1/base_step must be an integer")
        if n_steps % (self.grid_points - 1):
            raise ValueError("grid intervals must divide the number of base steps")

    @property
    def pass_gap(self) -> float:
        """Finest scaled gap the step control resolves; closer pairs pass through."""
        return max(self.delta_floor, self.gap_threshold * 2.0 ** -self.max_depth)


@dataclass
class SpectrumTrace:
    """Level positions on a descending lam grid.

    ``x`` is in label order for gas traces and ascending for oracle traces;
    ``order[i]`` lists labels by energy at grid point ``i``; ``gaps`` and
    ``coupling`` refer to energy-adjacent pairs ``(order[i][r], order[i][r+1])``.
    """

    lambdas: np.ndarray
    x: np.ndarray
    order: np.ndarray
    gaps: np.ndarray
    coupling: np.ndarray
    dh_trace: np.ndarray | None = None
    v_sum: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    # gap minima found by the integrator at full step resolution
    events: list | None = None

    @classmethod
    def from_levels(cls, lambdas, x, coupling=None, **kw) -> "SpectrumTrace":
        lambdas = np.asarray(lambdas, dtype=float)
        x = np.asarray(x, dtype=float)
        order = np.argsort(x, axis=1, kind="stable")
        xs = np.take_along_axis(x, order, axis=1)
        if coupling is None:
            coupling = np.ones((x.shape[0], x.shape[1] - 1))
        return cls(lambdas, x, order, np.diff(xs, axis=1), np.asarray(coupling, dtype=float), **kw)

    @property
    def sorted_x(self) -> np.ndarray:
        return np.take_along_axis(self.x, self.order, axis=1)


# -- initial conditions ----------------------------------------------------

def _check_spacing(x: np.ndarray, floor: float = 1e-8) -> None:
    gaps = np.diff(x)
    k = int(np.argmin(gaps))
    if gaps[k] <= floor:
        raise ValueError(f"degenerate lam=1 spectrum: levels {k} and {k + 1} are {gaps[k]:.3e} apart")


def init_exact(hset: HamiltonianSet, dh1: np.ndarray | None = None) -> GasState:
    """Gas variables at ``lam = 1`` from direct diagonalisation."""
    h = assemble(hset, 1.0, dh1)
    x, vecs = np.linalg.eigh(h)
    _check_spacing(x)
    b = vecs.T @ (hset.Z * hset.Hb) @ vecs
    b = 0.5 * (b + b.T)
    v = np.diag(b).copy()
    l = (x[:, None] - x[None, :]) * b
    np.fill_diagonal(l, 0.0)
    l = 0.5 * (l - l.T)
    dh = np.zeros_like(h) if dh1 is None else np.array(dh1, dtype=float)
    return GasState(1.0, x, v, l, dh, vecs)


def init_perturbative(hset: HamiltonianSet, dh1: np.ndarray | None = None, order: int = 2) -> GasState:
    """Gas variables at ``lam = 1`` from an expansion in ``1/Z``.

    ``H(1) = Z (Hb + W/Z)`` with ``W = H0 + dh1``, expanded around the
    eigenbasis of ``Hb``.  Order 1 keeps first-order energies and unperturbed
    vectors; order 2 adds second-order energies and first-order vectors.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    b, u = _eigh_deterministic(hset.Hb)
    if np.min(np.diff(b)) <= 1e-12:
        raise ValueError("Hb spectrum is degenerate; perturbative start undefined")
    w = hset.H0 if dh1 is None else hset.H0 + dh1
    w = u.T @ w @ u
    w = 0.5 * (w + w.T)
    z = hset.Z
    db = b[:, None] - b[None, :]  # b_n - b_k
    with np.errstate(divide="ignore"):
        inv_db = np.where(np.eye(len(b), dtype=bool), 0.0, 1.0 / np.where(db == 0, 1.0, db))
    w_off = w - np.diag(np.diag(w))
    x = z * b + np.diag(w)
    v = z * b.copy()
    if order == 1:
        coupling = -w_off.copy()
    else:
        # c[k, n]: amplitude of |k0> in the first-order |n>
        c = -w_off * inv_db / z  # W_kn / (Z (b_n - b_k)) with db[k, n] = b_k - b_n
        second = np.sum(w_off**2 * inv_db, axis=1) / z
        x = x + second
        v = v - second
        # <n|Z Hb|m> = -<n|W|m>, evaluated with first-order vectors
        coupling = -(w + c.T @ w + w @ c)
        np.fill_diagonal(coupling, 0.0)
        coupling = 0.5 * (coupling + coupling.T)
    l = (x[:, None] - x[None, :]) * coupling
    np.fill_diagonal(l, 0.0)
    perm = np.argsort(x, kind="stable")
    x, v, l = x[perm], v[perm], l[np.ix_(perm, perm)]
    _check_spacing(x)
    dh = np.zeros_like(w) if dh1 is None else np.array(dh1, dtype=float)
    return GasState(1.0, x, v, l, dh, u[:, perm])


# -- right-hand side -------------------------------------------------------

class _Node:
    """Gas state at one point of the multistep history with cached geometry."""

    __slots__ = ("y", "x", "v", "l", "d", "inv", "leff", "p", "li2", "f0", "cached")

    def __init__(self, y: np.ndarray, n: int, opts: IntegratorOptions, passage: bool = False):
        self.y = y
        self.x = y[:n]
        self.v = y[n:2 * n]
        self.l = y[2 * n:].reshape(n, n)
        d = self.x[:, None] - self.x[None, :]
        absd = np.abs(d)
        if passage:
            # approaches closer than the finest step resolves pass through
            dv = np.abs(self.v[:, None] - self.v[None, :])
            near = absd < np.maximum(opts.delta_floor, opts.pass_gap * np.maximum(1.0, dv))
        else:
            near = absd < opts.delta_floor
        np.fill_diagonal(near, True)
        self.leff = np.where(np.abs(self.l) < opts.l_floor, 0.0, self.l)
        if not passage and np.count_nonzero(near) > n:
            clash = near & (self.leff != 0.0)
            np.fill_diagonal(clash, False)
            if clash.any():
                i, j = np.argwhere(clash)[0]
                raise StepRejected((int(min(i, j)), int(max(i, j))))
        inv = np.zeros_like(d)
        np.divide(1.0, d, out=inv, where=~near)
        self.d = d
        self.inv = inv
        self.p = self.leff * inv
        self.li2 = self.p * inv
        dv = 2.0 * np.sum(self.p * self.li2, axis=1)
        m = self.li2 @ self.leff
        dl = m - m.T
        self.f0 = np.concatenate([self.v, dv, dl.ravel()])
        self.cached = None
        if not np.all(np.isfinite(self.f0)):
            raise FloatingPointError("non-finite gas derivative")

    def noise_terms(self, rate: np.ndarray) -> np.ndarray:
        """Part of the derivative linear in the eigenbasis noise rate."""
        diag = np.diag(rate)
        q = rate * self.inv
        dv = 2.0 * np.sum(self.leff * rate * self.inv**2, axis=1)
        s = q @ self.p
        dl = self.d * (s + s.T)
        dl += rate * (self.v[None, :] - self.v[:, None])
        dl += self.leff * (diag[:, None] - diag[None, :]) * self.inv
        dl = 0.5 * (dl - dl.T)
        return np.concatenate([diag, dv, dl.ravel()])

    def deriv(self, rate: np.ndarray | None) -> np.ndarray:
        if rate is None:
            return self.f0
        # history nodes are re-evaluated with the same rate inside a base step
        if self.cached is not None and self.cached[0] is rate:
            return self.cached[1]
        f = self.f0 + self.noise_terms(rate)
        self.cached = (rate, f)
        return f


def _pack(x, v, l) -> np.ndarray:
    return np.concatenate([np.asarray(x, float), np.asarray(v, float), np.asarray(l, float).ravel()])


def gas_rhs(state: GasState, dh_rate: np.ndarray | None = None,
            opts: IntegratorOptions | None = None):
    """Derivatives ``(dx, dv, dl)`` with respect to lam.

    ``dh_rate`` holds the noise derivative in the instantaneous eigenbasis.
    Couplings below ``opts.l_floor`` count as exactly zero; an interacting
    pair closer than ``opts.delta_floor`` raises :class:`StepRejected`.
    """
    opts = opts or IntegratorOptions()
    n = state.n
    node = _Node(_pack(state.x, state.v, state.l), n, opts)
    rate = None if dh_rate is None or not np.any(dh_rate) else np.asarray(dh_rate, float)
    f = node.deriv(rate)
    return f[:n], f[n:2 * n], f[2 * n:].reshape(n, n)


# -- integrator ------------------------------------------------------------

_AB4 = np.array([55.0, -59.0, 37.0, -9.0]) / 24.0
_AM4 = np.array([9.0, 19.0, -5.0, 1.0]) / 24.0


def parabola_vertex(xs, ys):
    """Vertex of the parabola through three points; falls back to the middle sample."""
    (x0, x1, x2), (y0, y1, y2) = xs, ys
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    if denom == 0:
        return x1, y1
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    if a <= 0:
        return x1, y1
    xv = -b / (2 * a)
    lo, hi = min(x0, x2), max(x0, x2)
    if not lo <= xv <= hi:
        return x1, y1
    c = y0 - a * x0 * x0 - b * x0
    return xv, max(a * xv * xv + b * xv + c, 0.0)


def _interacting_min_gap(x: np.ndarray, v: np.ndarray, l: np.ndarray, l_floor: float):
    """Closest approach over energy-adjacent interacting pairs.

    The gap is divided by ``max(1, |x'_a - x'_b|)`` so fast approaches
    refine as early as slow close ones.  ``v`` should include the diagonal
    noise rate.
    """
    order = np.argsort(x, kind="stable")
    a, b = order[:-1], order[1:]
    gaps = (x[b] - x[a]) / np.maximum(1.0, np.abs(v[b] - v[a]))
    live = np.abs(l[a, b]) >= l_floor
    if not live.any():
        return math.inf, None
    k = int(np.argmin(np.where(live, gaps, np.inf)))
    return float(gaps[k]), (int(a[k]), int(b[k]))


def _depth_for_gap(gap: float, opts: IntegratorOptions) -> int:
    if gap >= opts.gap_threshold:
        return 0
    if gap <= 0:
        return opts.max_depth
    return min(opts.max_depth, int(math.ceil(math.log2(opts.gap_threshold / gap))))


class _MinimaTracker:
    """Gap minima of energy-adjacent pairs, found at every accepted step.

    A minimum counts once the gap has risen to ``rise`` times its value on
    both sides (or the pair stops being adjacent after it), so noise jitter
    in a slowly varying gap does not register as a string of minima.  The
    location and depth come from a parabola through the minimum sample and
    its two neighbours.  A previously adjacent pair whose order flips gives
    a true crossing.
    """

    def __init__(self, delta_floor: float, l_floor: float, rise: float = 2.0):
        self.floor = delta_floor
        self.l_floor = l_floor
        self.rise = rise
        self.state: dict = {}
        self.prev = None
        self.events: list[dict] = []

    def _emit(self, key, st) -> None:
        if st["before"] is None or st["after"] is None:
            return
        pts = (st["before"], st["min"], st["after"])
        ls, gm = parabola_vertex([q[0] for q in pts], [q[1] for q in pts])
        lam, _, c, r = st["min"]
        self.events.append(dict(rank=r, lam_star=float(ls), delta_min=float(gm), coupling=c,
                                labels=(min(key), max(key)), kind="avoided"))

    def update(self, lam: float, x: np.ndarray, l: np.ndarray) -> None:
        order = np.argsort(x, kind="stable")
        a, b = order[:-1], order[1:]
        g = x[b] - x[a]
        c = np.abs(l[a, b]) / np.maximum(g, self.floor)
        a_l, b_l, g_l, c_l = a.tolist(), b.tolist(), g.tolist(), c.tolist()
        if self.prev is not None:
            plam, px, pl, pairs = self.prev
            for pa, pb in pairs:
                d1 = x[pb] - x[pa]
                if d1 < 0:
                    d0 = px[pb] - px[pa]
                    t = d0 / (d0 - d1)
                    xs = px + t * (x - px)
                    level = 0.5 * (xs[pa] + xs[pb])
                    below = int(np.sum(xs < level)) - int(xs[pa] < level) - int(xs[pb] < level)
                    st = self.state.get((pa, pb))
                    coup = st["last"][2] if st else 0.0
                    if abs(pl[pa, pb]) >= self.l_floor:
                        # interacting levels met closer than the step control resolves;
                        # the smallest sampled separation bounds the true gap minimum
                        kind, gap = "passage", min(abs(d0), abs(d1))
                    else:
                        kind, gap = "true", 0.0
                    self.events.append(dict(rank=below, lam_star=plam + t * (lam - plam), delta_min=gap,
                                            coupling=coup, labels=(min(pa, pb), max(pa, pb)), kind=kind))
        new_state = {}
        for r in range(len(a_l)):
            key = (a_l[r], b_l[r])
            sample = (lam, g_l[r], c_l[r], r)
            st = self.state.pop(key, None)
            if st is None:
                st = {"falling": True, "before": None, "min": sample, "after": None, "peak": 0.0}
            elif st["falling"]:
                if sample[1] < st["min"][1]:
                    st["before"], st["min"], st["after"] = st["last"], sample, None
                elif st["after"] is None:
                    st["after"] = sample
                if sample[1] > self.rise * st["min"][1]:
                    self._emit(key, st)
                    st["falling"], st["peak"] = False, sample[1]
            else:
                st["peak"] = max(st["peak"], sample[1])
                if sample[1] * self.rise < st["peak"]:
                    st.update(falling=True, before=st["last"], min=sample, after=None)
            st["last"] = sample
            new_state[key] = st
        for key, st in self.state.items():
            if st["falling"]:
                self._emit(key, st)
        self.state = new_state
        self.prev = (lam, x.copy(), l.copy(), list(zip(a_l, b_l)))

    def finish(self) -> list[dict]:
        for key, st in self.state.items():
            if st["falling"]:
                self._emit(key, st)
        self.state = {}
        return [e for e in self.events if 0.0 < e["lam_star"] < 1.0]


def _record(trace_rows: dict, lam: float, node: _Node, dh: np.ndarray | None, opts: IntegratorOptions):
    x = node.x
    order = np.argsort(x, kind="stable")
    a, b = order[:-1], order[1:]
    sep = x[b] - x[a]
    trace_rows["lambdas"].append(lam)
    trace_rows["x"].append(x.copy())
    trace_rows["order"].append(order)
    trace_rows["gaps"].append(sep)
    trace_rows["coupling"].append(np.abs(node.l[a, b]) / np.maximum(np.abs(sep), opts.delta_floor))
    trace_rows["dh_trace"].append(0.0 if dh is None else float(np.trace(dh)))
    trace_rows["v_sum"].append(float(np.sum(node.v)))


def integrate(state0: GasState, noise=None, opts: IntegratorOptions | None = None):
    """Sweep the gas from ``lam = 1`` to ``lam = 0``.

    ``noise`` is a :class:`~noisy_aqc.noise.NoisePath`; in ``ou`` mode its
    matrix must already be expressed in the eigenbasis of ``state0`` (see
    :meth:`NoisePath.rotate`).  Over each step the noise is advanced by its
    exact update and its rate is held constant.

    Returns ``(trace, final_state)``.
    """
    opts = opts or IntegratorOptions()
    if abs(state0.lam - 1.0) > 1e-12:
        raise ValueError("integration starts at lam = 1")
    n = state0.n
    n_base = round(1.0 / opts.base_step)
    maxd = opts.max_depth
    unit = 1 << maxd
    total = n_base * unit
    grid_every = (n_base // (opts.grid_points - 1)) * unit
    tick = 1.0 / total

    rows = {k: [] for k in ("lambdas", "x", "order", "gaps", "coupling", "dh_trace", "v_sum")}
    node = _Node(_pack(state0.x, state0.v, state0.l), n, opts, True)
    _record(rows, 1.0, node, None if noise is None else noise.dh, opts)
    tracker = _MinimaTracker(opts.delta_floor, opts.l_floor)
    tracker.update(1.0, node.x, node.l)
    # the noise is advanced once per base step; its rate is constant inside
    # the step, so refinement never draws new noise
    block = -1
    rate = None

    pos = 0
    depth = 0
    calm = 0  # accepted steps at the current depth
    recent = collections.deque(maxlen=8)  # residuals of the latest PECE steps
    history: list[_Node] = []
    diag = {"steps": 0, "rk4_steps": 0, "refinements": 0, "rejections": 0,
            "max_residual": 0.0, "max_depth_used": 0, "max_antisymmetry": 0.0, "passages": 0}

    while pos < total:
        lam = 1.0 - pos * tick
        if noise is not None and pos // unit != block:
            block = pos // unit
            inc = noise.advance(opts.base_step)
            rate = inc / -opts.base_step if np.any(inc) else None
        vel = node.v if rate is None else node.v + np.diag(rate)
        gmin, pair = _interacting_min_gap(node.x, vel, node.l, opts.l_floor)
        want = _depth_for_gap(gmin, opts)
        if want > depth:
            depth = want
            history.clear()
            diag["refinements"] += 1
            calm = 0
            recent.clear()
        elif want < depth and calm >= 8 and (rate is not None or (len(recent) == recent.maxlen
                                                                  and max(recent) < opts.tol / 64)):
            target = _depth_for_gap(0.5 * gmin, opts)
            new_depth = depth
            while new_depth > target and pos % (1 << (maxd - new_depth + 1)) == 0:
                new_depth -= 1
            if new_depth != depth:
                depth = new_depth
                history.clear()
                calm = 0
                recent.clear()
        ticks = 1 << (maxd - depth)
        h = ticks * tick
        H = -h

        try:
            if not history or history[-1] is not node:
                history = [node]
            if len(history) < 4:
                y = node.y
                k1 = node.deriv(rate)
                k2 = _Node(y + 0.5 * H * k1, n, opts, True).deriv(rate)
                k3 = _Node(y + 0.5 * H * k2, n, opts, True).deriv(rate)
                k4 = _Node(y + H * k3, n, opts, True).deriv(rate)
                new = _Node(y + H / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), n, opts, True)
                residual = 0.0
                diag["rk4_steps"] += 1
            else:
                f = [nd.deriv(rate) for nd in history[-1:-5:-1]]
                y_pred = node.y + H * (_AB4[0] * f[0] + _AB4[1] * f[1] + _AB4[2] * f[2] + _AB4[3] * f[3])
                pred = _Node(y_pred, n, opts, True)
                y_corr = node.y + H * (_AM4[0] * pred.deriv(rate) + _AM4[1] * f[0]
                                       + _AM4[2] * f[1] + _AM4[3] * f[2])
                new = _Node(y_corr, n, opts, True)
                residual = float(np.max(np.abs(y_corr - y_pred) / (1.0 + np.abs(y_corr))))
        except (StepRejected, FloatingPointError) as exc:
            diag["rejections"] += 1
            if depth >= maxd:
                bad = getattr(exc, "pair", pair)
                raise IntegrationError(f"step rejected at maximum depth near lam={lam:.6f}: {exc}",
                                       lam, bad) from exc
            depth += 1
            history = []
            calm = 0
            continue

        if rate is None and residual > opts.tol:
            if depth < maxd:
                depth += 1
                history = []
                calm = 0
                recent.clear()
                diag["rejections"] += 1
                continue
            raise IntegrationError(
                f"corrector residual {residual:.3e} above tolerance at maximum depth near lam={lam:.6f}",
                lam, pair)

        if pair is not None:
            # interacting neighbours may not pass through each other
            order = np.argsort(node.x, kind="stable")
            a, b = order[:-1], order[1:]
            live = np.abs(node.l[a, b]) >= opts.l_floor
            flipped = live & (new.x[b] - new.x[a] <= 0)
            if flipped.any():
                if depth < maxd:
                    diag["rejections"] += 1
                    depth += 1
                    history = []
                    calm = 0
                    recent.clear()
                    continue
                diag["passages"] += 1

        diag["max_residual"] = max(diag["max_residual"], residual)
        if rate is None and residual > 0:
            recent.append(residual)
        history.append(new)
        if len(history) > 4:
            history.pop(0)
        node = new
        pos += ticks
        calm += 1
        diag["steps"] += 1
        diag["max_depth_used"] = max(diag["max_depth_used"], depth)
        diag["max_antisymmetry"] = max(diag["max_antisymmetry"], float(np.max(np.abs(node.l + node.l.T))))
        tracker.update(1.0 - pos * tick, node.x, node.l)
        if pos % grid_every == 0:
            _record(rows, 1.0 - pos * tick, node, None if noise is None else noise.dh, opts)

    trace = SpectrumTrace(
        lambdas=np.array(rows["lambdas"]),
        x=np.array(rows["x"]),
        order=np.array(rows["order"]),
        gaps=np.array(rows["gaps"]),
        coupling=np.array(rows["coupling"]),
        dh_trace=np.array(rows["dh_trace"]),
        v_sum=np.array(rows["v_sum"]),
        diagnostics=diag,
        events=tracker.finish(),
    )
    trace.lambdas[-1] = 0.0
    final = GasState(0.0, node.x.copy(), node.v.copy(), node.l.copy(),
                     None if noise is None else noise.dh.copy())
    return trace, final
