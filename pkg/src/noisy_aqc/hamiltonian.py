"""Quantum-dot Hamiltonians for the adiabatic two-qubit CNOT gate.

The register is an array of 8 dots labelled ``(m, n, j)``: qubit ``m``,
computational step ``n`` and logical state ``j``.  Qubit ``m`` is carried by
a single electron that only ever sits on dots with first index ``m``, so the
two-electron sector relevant for the gate has 4 x 4 = 16 states.

Basis ordering (frozen)::

    index = (2*n0 + j0) + 4*(2*n1 + j1)

where ``(n_m, j_m)`` is the dot occupied by electron ``m``.  Fermionic modes
are ordered ``m`` major, ``n`` middle, ``j`` minor (mode ``4m + 2n + j``) and
basis state ``|a, b>`` means ``c+_a c+_b |vac>`` with ``a`` the qubit-0 mode.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

N_STATES = 16

OPERATIONS = {
    "00->00": (0, 0),
    "01->01": (0, 1),
    "10->11": (1, 0),
    "11->10": (1, 1),
}

BIAS_PRESETS = ("diagonal-ladder", "commuting")


class DotIndex(NamedTuple):
    m: int
    n: int
    j: int

    @property
    def mode(self) -> int:
        return 4 * self.m + 2 * self.n + self.j


@dataclass(frozen=True)
class FockBasis:
    """Ordered two-electron basis; ``states[i] = (dot of electron 0, dot of electron 1)``."""

    states: tuple[tuple[DotIndex, DotIndex], ...]

    def __len__(self) -> int:
        return len(self.states)

    def index(self, dot0: DotIndex, dot1: DotIndex) -> int:
        return (2 * dot0.n + dot0.j) + 4 * (2 * dot1.n + dot1.j)

    def modes(self, i: int) -> tuple[int, int]:
        d0, d1 = self.states[i]
        return (d0.mode, d1.mode)


def build_basis() -> FockBasis:
    states = []
    for idx in range(N_STATES):
        lo, hi = idx % 4, idx // 4
        states.append((DotIndex(0, lo // 2, lo % 2), DotIndex(1, hi // 2, hi % 2)))
    return FockBasis(tuple(states))


# -- second quantisation on the 8 modes ------------------------------------
#
# An operator is a dict mapping a word (tuple of (mode, is_creation) applied
# right to left) to its coefficient.

def _c(dot: tuple[int, int, int]) -> dict:
    return {((DotIndex(*dot).mode, False),): 1.0}


def _cdag(dot: tuple[int, int, int]) -> dict:
    return {((DotIndex(*dot).mode, True),): 1.0}


def _mul(a: dict, b: dict) -> dict:
    out: dict = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            out[wa + wb] = out.get(wa + wb, 0.0) + ca * cb
    return out


def _add(a: dict, b: dict, scale: float = 1.0) -> dict:
    out = dict(a)
    for w, c in b.items():
        out[w] = out.get(w, 0.0) + scale * c
    return out


def _dag(a: dict) -> dict:
    return {tuple((m, not cr) for m, cr in reversed(w)): c for w, c in a.items()}


def _number(m: int, n: int) -> dict:
    return _add(_mul(_cdag((m, n, 0)), _c((m, n, 0))), _mul(_cdag((m, n, 1)), _c((m, n, 1))))


def _apply_word(word, occupied: tuple[int, ...]):
    """Apply a word of ladder operators to a sorted occupation tuple."""
    occ = list(occupied)
    sign = 1
    for mode, creation in reversed(word):
        present = mode in occ
        if creation == present:
            return 0, None
        # Jordan-Wigner sign: parity of occupied modes before this one.
        sign *= (-1) ** sum(1 for q in occ if q < mode)
        if creation:
            occ.append(mode)
            occ.sort()
        else:
            occ.remove(mode)
    return sign, tuple(occ)


def _to_matrix(op: dict, basis: FockBasis) -> np.ndarray:
    lookup = {tuple(sorted(basis.modes(i))): i for i in range(len(basis))}
    mat = np.zeros((len(basis), len(basis)))
    for col in range(len(basis)):
        occ = tuple(sorted(basis.modes(col)))
        # basis ordering puts the qubit-0 mode first, which is also the lower mode
        for word, coeff in op.items():
            sign, out = _apply_word(word, occ)
            if out is None or coeff == 0.0:
                continue
            row = lookup.get(out)
            if row is None:
                raise ValueError(f"operator leaves the two-register sector: {out}")
            mat[row, col] += sign * coeff
    return mat


def cnot_operator() -> dict:
    """Second-quantised history Hamiltonian of the CNOT gate as an operator dict."""
    op: dict = {}
    for j in (0, 1):
        # control |0>: target copied unchanged from step 0 to step 1
        a = _add(_mul(_c((1, 1, j)), _c((0, 1, 0))), _mul(_c((1, 0, j)), _c((0, 0, 0))), -1.0)
        op = _add(op, _mul(_dag(a), a))
        # control |1>: target flipped
        b = _add(_mul(_c((1, 1, j)), _c((0, 1, 1))), _mul(_c((1, 0, 1 - j)), _c((0, 0, 1))), -1.0)
        op = _add(op, _mul(_dag(b), b))
    # the two electrons must be on the same step
    op = _add(op, _mul(_number(0, 0), _number(1, 1)))
    op = _add(op, _mul(_number(0, 1), _number(1, 0)))
    return op


def build_cnot(basis: FockBasis) -> np.ndarray:
    return _to_matrix(cnot_operator(), basis)


def build_input_penalty(bits: tuple[int, int], mu: float, basis: FockBasis | None = None) -> np.ndarray:
    """Diagonal energy shift ``mu * (n_{0,0,a} + n_{1,0,b})`` selecting input ``(a, b)``."""
    a, b = bits
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError(f"input bits must be 0/1, got {bits}")
    if not np.isfinite(mu):
        raise ValueError("mu must be finite")
    basis = basis or build_basis()
    op = _add(_mul(_cdag((0, 0, a)), _c((0, 0, a))), _mul(_cdag((1, 0, b)), _c((1, 0, b))))
    return mu * _to_matrix(op, basis)


def _eigh_deterministic(mat: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with a seed-independent basis inside degenerate blocks.

    Each degenerate block is re-spanned by Gram-Schmidt on the projections of
    the unit vectors e_0, e_1, ... onto the block, then each vector's
    largest-magnitude component is made positive.
    """
    w, v = np.linalg.eigh(mat)
    out = v.copy()
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[stop - 1] < tol:
            stop += 1
        if stop - start > 1:
            block = v[:, start:stop]
            proj = block @ block.T
            vecs: list[np.ndarray] = []
            for e in np.eye(len(w)):
                u = proj @ e
                for q in vecs:
                    u = u - (q @ u) * q
                nrm = np.linalg.norm(u)
                if nrm > 1e-6:
                    vecs.append(u / nrm)
                if len(vecs) == stop - start:
                    break
            out[:, start:stop] = np.column_stack(vecs)
        start = stop
    idx = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[idx, np.arange(out.shape[1])])
    return w, out * signs


def build_bias(preset: str, basis: FockBasis | None = None, h0: np.ndarray | None = None) -> np.ndarray:
    """Bias Hamiltonian ``H_b`` with spectrum in ``[0, 1]``.

    ``diagonal-ladder`` puts ``index / 15`` on basis state ``index``.
    ``commuting`` shares the eigenbasis of ``h0`` and assigns bias
    ``(15 - k) / 15`` to the k-th lowest eigenvector of ``h0``, so the ground
    state of ``h0`` carries the largest bias.
    """
    basis = basis or build_basis()
    dim = len(basis)
    if preset == "diagonal-ladder":
        return np.diag(np.arange(dim) / (dim - 1))
    if preset == "commuting":
        if h0 is None:
            raise ValueError("commuting bias preset needs h0")
        _, vecs = _eigh_deterministic(h0)
        b = (dim - 1 - np.arange(dim)) / (dim - 1)
        hb = (vecs * b) @ vecs.T
        return 0.5 * (hb + hb.T)
    raise ValueError(f"unknown bias preset {preset!r}; expected one of {BIAS_PRESETS}")


@dataclass(frozen=True)
class HamiltonianSet:
    H0: np.ndarray
    Hb: np.ndarray
    Z: float
    mu: float
    operation: str

    @property
    def dim(self) -> int:
        return self.H0.shape[0]


def build_set(operation: str = "00->00", preset: str = "diagonal-ladder",
              z_inv: float = 0.1, mu: float = -0.1) -> HamiltonianSet:
    if operation not in OPERATIONS:
        raise ValueError(f"unknown operation {operation!r}; expected one of {sorted(OPERATIONS)}")
    if z_inv <= 0:
        raise ValueError("z_inv must be positive")
    basis = build_basis()
    h0 = build_cnot(basis) + build_input_penalty(OPERATIONS[operation], mu, basis)
    hb = build_bias(preset, basis, h0)
    return HamiltonianSet(H0=h0, Hb=hb, Z=1.0 / z_inv, mu=mu, operation=operation)


def assemble(hset: HamiltonianSet, lam: float, dh: np.ndarray | None = None) -> np.ndarray:
    """Total Hamiltonian ``H0 + lam * Z * Hb + dh``."""
    h = hset.H0 + lam * hset.Z * hset.Hb
    if dh is None:
        return h
    dh = np.asarray(dh, dtype=float)
    if dh.shape != h.shape:
        raise ValueError(f"noise matrix shape {dh.shape} does not match Hamiltonian {h.shape}")
    return h + dh


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a @ b - b @ a, "fro"))


def all_operations() -> list[str]:
    return list(OPERATIONS)


def product_states() -> list[tuple[int, int]]:
    return list(itertools.product((0, 1), repeat=2))
