"""Reference results from dense diagonalisation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import SpectrumTrace
from .hamiltonian import FockBasis, HamiltonianSet, assemble

SIGFIG_CAP = 16.0


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class EigenSolution:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    @property
    def ground_gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])


@dataclass(frozen=True)
class FidelityResult:
    F: float
    dh_final: np.ndarray


def diagonalize(h: np.ndarray, sym_tol: float = 1e-12) -> EigenSolution:
    """Ascending spectrum; each eigenvector's largest-magnitude entry is positive."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise OracleError(f"expected a square matrix, got shape {h.shape}")
    asym = float(np.max(np.abs(h - h.T))) if h.size else 0.0
    if asym > sym_tol * max(1.0, float(np.max(np.abs(h)))):
        raise OracleError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    w, v = np.linalg.eigh(h)
    idx = np.argmax(np.abs(v), axis=0)
    v = v * np.sign(v[idx, np.arange(v.shape[1])])
    return EigenSolution(w, v)


def reference_trace(hset: HamiltonianSet, dh_frozen: np.ndarray | None, grid) -> SpectrumTrace:
    """Ascending eigenvalues of ``H0 + lam*Z*Hb + dh_frozen`` on ``grid``.

    ``coupling[i, r]`` is ``|<r|Z Hb|r+1>|`` between adjacent eigenvectors.
    """
    grid = np.asarray(grid, dtype=float)
    zhb = hset.Z * hset.Hb
    xs, coup = [], []
    for lam in grid:
        w, v = np.linalg.eigh(assemble(hset, lam, dh_frozen))
        xs.append(w)
        b = v.T @ zhb @ v
        coup.append(np.abs(np.diagonal(b, offset=1)))
    x = np.array(xs)
    order = np.tile(np.arange(x.shape[1]), (len(grid), 1))
    return SpectrumTrace(grid, x, order, np.diff(x, axis=1), np.array(coup),
                         dh_trace=np.full(len(grid), 0.0 if dh_frozen is None else float(np.trace(dh_frozen))),
                         diagnostics={"source": "diagonalisation"})


def sigfig_agreement(a, b, floor: float = 1e-3) -> np.ndarray:
    """Elementwise ``-log10(|a-b| / max(|a|, floor))``, capped at 16."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    err = np.abs(a - b) / np.maximum(np.abs(a), floor)
    with np.errstate(divide="ignore"):
        out = -np.log10(err)
    return np.minimum(out, SIGFIG_CAP)


def compare_traces(a: SpectrumTrace, b: SpectrumTrace, floor: float = 1e-3) -> float:
    """Worst significant-figure agreement between the sorted spectra of two traces."""
    if a.lambdas.shape != b.lambdas.shape or not np.allclose(a.lambdas, b.lambdas, rtol=0, atol=1e-12):
        raise OracleError("traces are sampled on different lam grids")
    return float(np.min(sigfig_agreement(a.sorted_x, b.sorted_x, floor)))


def compute_fidelity(h0: np.ndarray, dh_final: np.ndarray | None, min_gap: float = 1e-10) -> FidelityResult:
    """``|<gs(H0)|gs(H0 + dh_final)>|`` with ``dh_final`` given in the lab basis."""
    dh = np.zeros_like(h0) if dh_final is None else np.asarray(dh_final, dtype=float)
    ideal = diagonalize(h0)
    noisy = diagonalize(h0 + dh) if np.any(dh) else ideal
    for name, sol in (("H0", ideal), ("H0 + dh", noisy)):
        if sol.ground_gap < min_gap:
            raise OracleError(f"ground state of {name} is degenerate (gap {sol.ground_gap:.3e})")
    f = abs(float(ideal.ground_state @ noisy.ground_state)) if noisy is not ideal else 1.0
    return FidelityResult(min(f, 1.0), dh)


def eigenbasis_to_lab(h0: np.ndarray, dh_eig: np.ndarray, x_final: np.ndarray) -> np.ndarray:
    """Map a noise matrix held in the gas eigenbasis at ``lam = 0`` to the lab basis.

    Gas labels are matched to eigenvectors of ``H0`` by energy rank at the
    end of the sweep.
    """
    rank_order = np.argsort(x_final, kind="stable")
    m = dh_eig[np.ix_(rank_order, rank_order)]
    v = diagonalize(h0).eigenvectors
    lab = v @ m @ v.T
    return 0.5 * (lab + lab.T)


def readout_output(state: np.ndarray, basis: FockBasis) -> dict[tuple[int, int], float]:
    """Output-bit distribution given that both electrons sit on step-1 dots."""
    state = np.asarray(state)
    probs = {(j0, j1): 0.0 for j0 in (0, 1) for j1 in (0, 1)}
    for i, (d0, d1) in enumerate(basis.states):
        if d0.n == 1 and d1.n == 1:
            probs[(d0.j, d1.j)] += float(abs(state[i]) ** 2)
    total = sum(probs.values())
    if total <= 1e-300 or not math.isfinite(total):
        raise OracleError("state has no weight on the final computational step")
    return {k: p / total for k, p in probs.items()}
