# ============================================================
# system.py
# Ladder n-level Hamiltonians: diagonal drift H0 = diag(λ) and
# nearest-neighbour couplings H_p = i X_p, X_p having −1 at
# (p, p+1) and +1 at (p+1, p). Energies in atomic units, ħ = 1.
# ============================================================

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import ishermitian

from .errors import NonDegeneracyError

log = logging.getLogger(__name__)


class LadderSystem(BaseModel):
    """Dense matrices of a ladder system; n is small so nothing sparse."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    lam: tuple[float, ...]
    H0: np.ndarray          # (n, n) real diagonal
    H: np.ndarray           # (n-1, n, n) complex, H[p-1] couples p and p+1

    @property
    def energies(self) -> np.ndarray:
        return np.array(self.lam, dtype=float)

    def control_hamiltonian(self, p: int) -> np.ndarray:
        """H_p with 1-based p."""
        return self.H[p - 1]


def coupling_matrix(n: int, p: int) -> np.ndarray:
    """H_p = i X_p for the 1-based link p between levels p and p+1."""
    h = np.zeros((n, n), dtype=complex)
    h[p - 1, p] = -1j
    h[p, p - 1] = 1j
    return h


def build_ladder(n: int, lam: Sequence[float]) -> LadderSystem:
    if n < 2:
        raise ValueError(f"a ladder needs n ≥ 2 levels, got {n}")
    lam = tuple(float(x) for x in lam)
    if len(lam) != n:
        raise ValueError(f"lambda has {len(lam)} entries, expected {n}")
    if not np.all(np.isfinite(lam)):
        raise ValueError(f"lambda must be finite, got {list(lam)}")
    if len(set(lam)) != n:
        dupes = sorted({x for x in lam if lam.count(x) > 1})
        raise NonDegeneracyError(f"H0 is degenerate: repeated energies {dupes}")

    H0 = np.diag(np.array(lam, dtype=float))
    H = np.stack([coupling_matrix(n, p) for p in range(1, n)])

    # every link must be steered away by the drift: [H0, H_p] ≠ 0
    for p in range(1, n):
        comm = H0 @ H[p - 1] - H[p - 1] @ H0
        if not np.any(np.abs(comm) > 0.0):
            raise NonDegeneracyError(f"[H0, H_{p}] vanishes")

    H0.setflags(write=False)
    H.setflags(write=False)
    log.debug(f"Built ladder system n={n}, λ={list(lam)}")
    return LadderSystem(n=n, lam=lam, H0=H0, H=H)


def hermiticity_check(system: LadderSystem) -> bool:
    """True iff H0 and every H_p equal their conjugate transposes entrywise."""
    if not ishermitian(system.H0):
        return False
    return all(ishermitian(h) for h in system.H)
