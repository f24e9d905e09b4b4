"""Revision protocols: switch-rate maps with fixed row budget.

A protocol assigns each (current strategy i, candidate j) an off-diagonal
switch rate; the diagonal "stay" rate is whatever is left of the budget
lambda, and rows always sum to lambda exactly.  Pairwise-comparison (PC)
protocols react only to payoffs, switching toward strictly better ones;
the impartial subclass (IPC) uses per-destination functions of the payoff
difference, phi_j, whose antiderivatives Psi_j feed the Lyapunov
diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NegativeStayRate, NotImpartial

GENERAL = "general"
PC = "pairwise-comparison"
IPC = "impartial-pairwise-comparison"


@dataclass(frozen=True)
class RevisionProtocol:
    n: int
    rate_budget: float
    kind: str = GENERAL
    name: str = "custom"
    # (i, j, xbar, payoffs) -> rate, for i != j
    off_diagonal: Callable[[int, int, np.ndarray, np.ndarray], float] | None = None
    # optional vectorized fast path: (xbar, payoffs) -> n x n matrix with zero diagonal
    off_diagonal_matrix: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    # IPC only: per-destination rate functions of the payoff difference and
    # their antiderivatives Psi_j(s) = integral_0^s phi_j
    phi: tuple[Callable[[float], float], ...] | None = None
    psi: tuple[Callable[[float], float], ...] | None = None

    @property
    def is_impartial(self) -> bool:
        return self.kind == IPC

    def rates(self, xbar: np.ndarray, payoffs: np.ndarray) -> np.ndarray:
        """Off-diagonal rate matrix at (xbar, payoffs); zero diagonal."""
        if self.off_diagonal_matrix is not None:
            off = np.array(self.off_diagonal_matrix(xbar, payoffs), dtype=float)
        else:
            off = np.zeros((self.n, self.n))
            for i in range(self.n):
                for j in range(self.n):
                    if i != j:
                        off[i, j] = self.off_diagonal(i, j, xbar, payoffs)
        np.fill_diagonal(off, 0.0)
        return off


def smith_protocol(n: int, rate_budget: float) -> RevisionProtocol:
    """Switch toward j at rate max(payoff_j - payoff_i, 0), capped by budget."""
    if rate_budget <= 0:
        raise ValueError("rate budget must be positive")

    def offdiag(i: int, j: int, xbar, p) -> float:
        return max(float(p[j]) - float(p[i]), 0.0)

    def offdiag_matrix(xbar, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.maximum(p[None, :] - p[:, None], 0.0)

    phi_one = lambda s: s if s > 0 else 0.0
    psi_one = lambda s: 0.5 * s * s if s > 0 else 0.0
    return RevisionProtocol(
        n=n,
        rate_budget=float(rate_budget),
        kind=IPC,
        name="smith",
        off_diagonal=offdiag,
        off_diagonal_matrix=offdiag_matrix,
        phi=tuple([phi_one] * n),
        psi=tuple([psi_one] * n),
    )


def null_protocol(n: int, rate_budget: float) -> RevisionProtocol:
    """No switching: every revision keeps the current strategy.

    Not pairwise-comparison (it ignores payoffs entirely); useful for
    isolating the pure stage-relaxation dynamics.
    """
    return RevisionProtocol(
        n=n,
        rate_budget=float(rate_budget),
        kind=GENERAL,
        name="null",
        off_diagonal=lambda i, j, xbar, p: 0.0,
        off_diagonal_matrix=lambda xbar, p: np.zeros((n, n)),
    )


def switch_rate_matrix(protocol: RevisionProtocol, xbar, payoffs) -> np.ndarray:
    """Full rate matrix with the stay rate on the diagonal.

    The diagonal is computed as budget minus the off-diagonal row sum, so
    rows sum to the budget bitwise.  Raises NegativeStayRate when some row's
    off-diagonal rates exceed the budget; we never clamp.
    """
    xbar = np.asarray(getattr(xbar, "entries", xbar), dtype=float)
    payoffs = np.asarray(getattr(payoffs, "entries", payoffs), dtype=float)
    off = protocol.rates(xbar, payoffs)
    if off.min() < 0:
        raise ValueError("off-diagonal switch rates must be nonnegative")
    stay = protocol.rate_budget - off.sum(axis=1)
    worst = int(np.argmin(stay))
    if stay[worst] < 0:
        raise NegativeStayRate(worst, float(stay[worst]))
    T = off
    T[np.diag_indices_from(T)] = stay
    return T


def phi_matrix(protocol: RevisionProtocol, payoffs) -> np.ndarray:
    """Pairwise-rate matrix of an impartial protocol at given payoffs.

    Entry (i, j), i != j, is phi_i(p_i - p_j); the diagonal carries the
    total outflow rate sum_j phi_j(p_j - p_i).  Requires the IPC tag.
    """
    if not protocol.is_impartial:
        raise NotImpartial(f"protocol {protocol.name!r} is not impartial")
    p = np.asarray(getattr(payoffs, "entries", payoffs), dtype=float)
    n = protocol.n
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                out[i, i] = sum(protocol.phi[k](float(p[k] - p[i])) for k in range(n))
            else:
                out[i, j] = protocol.phi[i](float(p[i] - p[j]))
    return out
