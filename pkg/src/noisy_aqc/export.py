"""CSV, JSONL and SVG artifacts."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import SpectrumTrace
from .runner import RunResult, SweepCurve

CURVE_COLUMNS = ("axis", "T", "mean", "stderr", "fidelity", "fidelity_stderr", "kind")


class ExportError(OSError):
    pass


def _open(path, mode="w"):
    path = Path(path)
    try:
        if "w" in mode:
            path.parent.mkdir(parents=True, exist_ok=True)
        return path.open(mode, newline="" if "b" not in mode else None)
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from exc


# -- sweep curves ------------------------------------------------------------

def write_curve_csv(curve: SweepCurve, path) -> Path:
    """One row per axis value.  ``axis`` is speed 1/T or the noise amplitude (see ``kind``)."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for i in range(len(curve)):
            w.writerow([repr(float(curve.values[i])), repr(float(curve.T[i])), repr(float(curve.mean[i])),
                        repr(float(curve.stderr[i])), repr(float(curve.fidelity[i])),
                        repr(float(curve.fidelity_stderr[i])), curve.axis])
    return Path(path)


def read_curve_csv(path) -> SweepCurve:
    with _open(path, "r") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ExportError(f"{path}: no curve rows")
    missing = set(CURVE_COLUMNS) - set(rows[0])
    if missing:
        raise ExportError(f"{path}: missing columns {sorted(missing)}")
    kinds = {r["kind"] for r in rows}
    if len(kinds) != 1:
        raise ExportError(f"{path}: mixed curve kinds {sorted(kinds)}")
    col = {c: np.array([float(r[c]) for r in rows]) for c in CURVE_COLUMNS if c != "kind"}
    return SweepCurve(kinds.pop(), col["axis"], col["T"], col["mean"], col["stderr"],
                      col["fidelity"], col["fidelity_stderr"])


# -- run results -------------------------------------------------------------

def write_jsonl(results: Iterable[RunResult], path) -> Path:
    """One :class:`RunResult` per line, keys sorted so equal results give equal bytes."""
    with _open(path) as fh:
        for res in results:
            fh.write(json.dumps(res.to_dict(), sort_keys=True, allow_nan=True) + "\n")
    return Path(path)


def read_jsonl(path) -> list[RunResult]:
    out = []
    with _open(path, "r") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(RunResult.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise ExportError(f"{path}:{n}: bad run result ({exc})") from exc
    return out


def curve_from_results(results: Sequence[RunResult], axis: str) -> SweepCurve:
    """Rebuild a sweep curve from stored ensembles."""
    if axis == "speed":
        if len(results) != 1:
            raise ValueError("a speed sweep is stored as a single run result")
        r = results[0]
        T = np.asarray(r.T)
        n = len(T)
        return SweepCurve("speed", 1.0 / T, T, np.asarray(r.mean), np.asarray(r.stderr),
                          np.full(n, r.fidelity_mean), np.full(n, r.fidelity_stderr), list(results))
    return SweepCurve("amplitude", np.array([r.amplitude for r in results]), np.array([r.T[0] for r in results]),
                      np.array([r.mean[0] for r in results]), np.array([r.stderr[0] for r in results]),
                      np.array([r.fidelity_mean for r in results]),
                      np.array([r.fidelity_stderr for r in results]), list(results))


# -- spectra -----------------------------------------------------------------

def write_trace_csv(trace: SpectrumTrace, path) -> Path:
    """Energies by rank: columns ``lam, E0 .. E{n-1}``."""
    xs = trace.sorted_x
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["lam"] + [f"E{k}" for k in range(xs.shape[1])])
        for lam, row in zip(trace.lambdas, xs):
            w.writerow([repr(float(lam))] + [repr(float(v)) for v in row])
    return Path(path)


def write_gaps_csv(trace: SpectrumTrace, path) -> Path:
    """Adjacent gaps by rank: columns ``lam, gap0 .. gap{n-2}``."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["lam"] + [f"gap{k}" for k in range(trace.gaps.shape[1])])
        for lam, row in zip(trace.lambdas, trace.gaps):
            w.writerow([repr(float(lam))] + [repr(float(v)) for v in row])
    return Path(path)


# -- figures -----------------------------------------------------------------

def plot_curves(curves: Sequence[SweepCurve], labels: Sequence[str] | None = None):
    """Matplotlib figure of sweep curves; speed sweeps on log-log axes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not curves:
        raise ValueError("nothing to plot")
    kinds = {c.axis for c in curves}
    if len(kinds) != 1:
        raise ValueError("cannot mix speed and amplitude curves in one chart")
    kind = kinds.pop()
    labels = list(labels) if labels is not None else [f"curve {i}" for i in range(len(curves))]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for c, lab in zip(curves, labels):
        ok = c.mean > 0 if kind == "speed" else np.ones(len(c), bool)
        ax.errorbar(c.values[ok], c.mean[ok], yerr=c.stderr[ok], marker="o", ms=3, capsize=2, label=lab)
        if kind == "amplitude":
            ax.errorbar(c.values, c.fidelity, yerr=c.fidelity_stderr, marker="s", ms=3, capsize=2,
                        ls="--", label=f"{lab} fidelity")
    if kind == "speed":
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("speed 1/T")
        ax.set_ylabel("success probability")
    else:
        ax.set_xlabel("noise amplitude")
        ax.set_ylabel("probability")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def write_svg(curves: Sequence[SweepCurve], path, labels: Sequence[str] | None = None) -> Path:
    import matplotlib.pyplot as plt

    fig = plot_curves(curves, labels)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from exc
    finally:
        plt.close(fig)
    return Path(path)
