"""Power-law fits, fidelity/success trade-off and schedule comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .runner import SweepCurve


class FitError(ValueError):
    pass


class TradeoffError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingFit:
    """``P ~ speed^(-gamma)`` over the points whose mean success lies in the fit band."""

    gamma: float
    stderr: float
    window: tuple[float, float]  # speed range of the fitted points
    r2: float
    n_points: int
    ols_stderr: float
    method: str  # how ``stderr`` was obtained: "bootstrap" or "ols"
    intercept: float = 0.0


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Slope, intercept, slope standard error and R^2 of ``y ~ a + b x``."""
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise FitError("fit abscissae are all equal")
    b = float(np.sum((x - xm) * (y - ym)) / sxx)
    a = float(ym - b * xm)
    resid = y - (a + b * x)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else math.nan
    return b, a, se, min(max(r2, 0.0), 1.0)


def band_mask(speed, success, band=(0.02, 0.5), window=None) -> np.ndarray:
    speed = np.asarray(speed, dtype=float)
    success = np.asarray(success, dtype=float)
    mask = (success >= band[0]) & (success <= band[1])
    if window is not None:
        lo, hi = sorted(window)
        mask &= (speed >= lo) & (speed <= hi)
    return mask


def fit_power_law(curve: SweepCurve | tuple, band=(0.02, 0.5), window=None,
                  n_boot: int = 500, seed: int = 0) -> ScalingFit:
    """Least-squares line through ``(log speed, log P)`` on the in-band points; ``gamma = -slope``.

    ``curve`` is a speed-sweep :class:`SweepCurve` or a ``(speed, success)``
    pair.  When per-realization data are available the standard error comes
    from a bootstrap over realizations (the points of one curve are strongly
    correlated, so the OLS error understates the ensemble spread).
    """
    samples = None
    if isinstance(curve, SweepCurve):
        if curve.axis != "speed":
            raise FitError("power-law fits need a speed sweep")
        speed, success = curve.values, curve.mean
        samples = curve.success_matrix()
    else:
        speed, success = (np.asarray(a, dtype=float) for a in curve)
    mask = band_mask(speed, success, band, window)
    if mask.sum() < 4:
        raise FitError(f"only {int(mask.sum())} points with success in the fit band "
                       f"[{band[0]:g}, {band[1]:g}]; need at least 4")
    x = np.log(speed[mask])
    slope, icpt, se, r2 = _ols(x, np.log(success[mask]))
    method, stderr = "ols", se
    if samples is not None and samples.shape[0] > 1 and n_boot > 0:
        rng = np.random.default_rng(seed)
        n = samples.shape[0]
        sub = samples[:, mask]
        gammas = []
        for _ in range(n_boot):
            m = sub[rng.integers(0, n, n)].mean(axis=0)
            if np.all(m > 0):
                gammas.append(-_ols(x, np.log(m))[0])
        if len(gammas) > 1:
            method, stderr = "bootstrap", float(np.std(gammas, ddof=1))
    sel = speed[mask]
    return ScalingFit(-slope, stderr, (float(sel.min()), float(sel.max())), r2, int(mask.sum()),
                      se, method, icpt)


def gammas_consistent(a: ScalingFit, b: ScalingFit, k: float = 2.0) -> bool:
    return abs(a.gamma - b.gamma) <= k * math.hypot(a.stderr, b.stderr)


@dataclass(frozen=True)
class Tradeoff:
    epsilon_star: float | None
    crossings: tuple
    message: str

    @property
    def unique(self) -> bool:
        return len(self.crossings) == 1


def _check_monotone(eps, y, se, increasing: bool, name: str, k: float) -> None:
    for i in range(len(eps) - 1):
        step = (y[i + 1] - y[i]) if increasing else (y[i] - y[i + 1])
        slack = k * math.hypot(se[i], se[i + 1])
        if step < -slack:
            word = "increasing" if increasing else "decreasing"
            raise TradeoffError(f"{name} is not {word} on segment [{eps[i]:g}, {eps[i + 1]:g}]: "
                                f"{y[i]:.4g} -> {y[i + 1]:.4g}")


def find_tradeoff(curve: SweepCurve | tuple, k: float = 2.0) -> Tradeoff:
    """Amplitude at which mean success and mean fidelity cross (linear interpolation).

    Success must increase and fidelity decrease along the grid, up to ``k``
    combined standard errors.
    """
    if isinstance(curve, SweepCurve):
        eps, s, f = curve.values, curve.mean, curve.fidelity
        s_se, f_se = curve.stderr, curve.fidelity_stderr
    else:
        eps, s, f = (np.asarray(a, dtype=float) for a in curve[:3])
        s_se = f_se = np.zeros_like(eps)
    eps = np.asarray(eps, dtype=float)
    if len(eps) < 2:
        raise TradeoffError("need at least two amplitudes")
    if np.any(np.diff(eps) <= 0):
        raise TradeoffError("amplitude grid must be strictly increasing")
    _check_monotone(eps, s, s_se, True, "success", k)
    _check_monotone(eps, f, f_se, False, "fidelity", k)
    d = np.asarray(s, dtype=float) - np.asarray(f, dtype=float)
    roots = []
    for i in range(len(eps) - 1):
        if d[i] == 0:
            roots.append(float(eps[i]))
        elif d[i] * d[i + 1] < 0:
            t = d[i] / (d[i] - d[i + 1])
            roots.append(float(eps[i] + t * (eps[i + 1] - eps[i])))
    if d[-1] == 0:
        roots.append(float(eps[-1]))
    if not roots:
        return Tradeoff(None, (), "no intersection: success and fidelity do not cross on this grid")
    msg = "unique intersection" if len(roots) == 1 else f"{len(roots)} intersections"
    return Tradeoff(roots[0], tuple(roots), msg)


def speed_at_success(curve: SweepCurve | tuple, target: float = 0.5) -> float | None:
    """Largest speed at which mean success still reaches ``target`` (log-interpolated)."""
    if isinstance(curve, SweepCurve):
        speed, success = curve.values, curve.mean
    else:
        speed, success = (np.asarray(a, dtype=float) for a in curve)
    order = np.argsort(speed)
    v = np.log(np.asarray(speed, dtype=float)[order])
    p = np.asarray(success, dtype=float)[order]
    above = p >= target
    if not above.any():
        return None
    i = int(np.nonzero(above)[0].max())
    if i == len(p) - 1:
        return float(np.exp(v[i]))
    t = (p[i] - target) / (p[i] - p[i + 1])
    return float(np.exp(v[i] + t * (v[i + 1] - v[i])))
