"""State algebra for the strategy simplex and its sub-strategy extension.

A population state lives on the simplex (proportions per strategy).  When
agents revise on an Erlang(m, lambda) clock, the bookkeeping state is the
extended state: an n x m grid of proportions per (strategy, stage) pair,
summing to one over all cells.  This module holds those value types plus
the aggregation/auxiliary maps and the equilibrium residuals used as
convergence metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Construction-time simplex tolerance; solver output is re-validated at the
# looser drift tolerance so input errors and integration drift stay distinct.
SIMPLEX_TOL = 1e-9
DRIFT_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PopulationState:
    """Proportions of agents per strategy; a point of the simplex."""

    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class ExtendedState:
    """Proportions per (strategy, stage) cell; a point of the nm-simplex."""

    grid: np.ndarray  # shape (n, m)

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @property
    def m(self) -> int:
        return self.grid.shape[1]


@dataclass(frozen=True)
class PayoffVector:
    """Per-strategy payoffs; any finite real vector."""

    entries: np.ndarray


@dataclass(frozen=True)
class TildeState:
    """Stage-mismatch blocks: block l is stage-l minus stage-m masses.

    For m = 1 the structure is empty and every mismatch diagnostic is 0.
    """

    blocks: np.ndarray  # shape (m-1, n)

    def stacked(self) -> np.ndarray:
        """Blocks concatenated stage-major into a vector of length n(m-1)."""
        return self.blocks.ravel()


def population_state(values, tol: float = SIMPLEX_TOL) -> PopulationState:
    """Validate and wrap a vector of proportions.

    Raises ValueError when entries are negative beyond tol or the total
    misses 1 by more than tol.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("population state must be a nonempty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("population state entries must be finite")
    if v.min() < -tol:
        raise ValueError(f"negative proportion {v.min():.3g}")
    s = v.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"proportions sum to {s!r}, not 1")
    return PopulationState(_frozen(np.maximum(v, 0.0)))


def extended_state(values, tol: float = SIMPLEX_TOL) -> ExtendedState:
    """Validate and wrap an n x m grid of proportions."""
    g = np.asarray(values, dtype=float)
    if g.ndim != 2 or g.size < 1:
        raise ValueError("extended state must be an n x m grid")
    if not np.all(np.isfinite(g)):
        raise ValueError("extended state entries must be finite")
    if g.min() < -tol:
        raise ValueError(f"negative proportion {g.min():.3g}")
    s = g.sum()
    if abs(s - 1.0) > tol:
        raise ValueError(f"proportions sum to {s!r}, not 1")
    return ExtendedState(_frozen(np.maximum(g, 0.0)))


def _grid(x) -> np.ndarray:
    if isinstance(x, ExtendedState):
        return x.grid
    return np.asarray(x, dtype=float)


def _vec(xbar) -> np.ndarray:
    if isinstance(xbar, PopulationState):
        return xbar.entries
    return np.asarray(xbar, dtype=float)


def aggregate(x: ExtendedState) -> PopulationState:
    """Sum stages per strategy: result_i = sum_l x_{i,l}."""
    g = _grid(x)
    return PopulationState(_frozen(g.sum(axis=1)))


def uniform_extension(xbar: PopulationState, m: int) -> ExtendedState:
    """Spread each strategy's mass equally over its m stages."""
    if m < 1:
        raise ValueError("m must be >= 1")
    v = _vec(xbar)
    return ExtendedState(_frozen(np.repeat(v[:, None] / m, m, axis=1)))


def tilde(x: ExtendedState) -> TildeState:
    """Stage-mismatch state: block l = x_{.,l} - x_{.,m} for l < m."""
    g = _grid(x)
    m = g.shape[1]
    blocks = (g[:, : m - 1] - g[:, [m - 1]]).T
    return TildeState(_frozen(blocks))


def ne_residual(game, xbar) -> float:
    """Weighted regret sum_i xbar_i (max_j F_j - F_i); zero exactly on NE.

    Chosen over a set distance because the equilibrium set is not
    enumerable in general.
    """
    v = _vec(xbar)
    p = np.asarray(game.payoff(v), dtype=float)
    # The dot product can overshoot max(p) by a few ulps when xbar piles
    # onto the best response; floor at 0 so the residual is a true gap.
    return max(float(p.max() - v @ p), 0.0)


def ene_residual(game, x) -> float:
    """NE residual of the aggregate plus the total stage-mismatch mass.

    Zero exactly on the extended-equilibrium set (aggregate is Nash and
    every strategy's mass is split uniformly over stages).
    """
    g = _grid(x)
    m = g.shape[1]
    xbar = g.sum(axis=1)
    mismatch = float(np.abs(g - xbar[:, None] / m).sum())
    return ne_residual(game, xbar) + mismatch
