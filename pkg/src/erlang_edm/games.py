"""Payoff mechanisms: evaluators, Jacobians, potentials, contractivity.

A game is a payoff map F on the simplex together with its Jacobian and an
optional scalar potential f with grad f = F.  Contractivity margins are
the extreme eigenvalues of the negated symmetric Jacobian part projected
onto the tangent space {eta : sum eta_i = 0}, with unit-Euclidean-norm
tangent vectors; gamma_lower > 0 is strict contractivity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Game:
    n: int
    payoff: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], float] | None = None
    linear: bool = False  # constant Jacobian; margins and c become exact
    name: str = "custom"


@dataclass(frozen=True)
class ContractivityMargins:
    gamma_lower: float
    gamma_upper: float


def linear_game(W) -> Game:
    """Game with payoff F(x) = W x; carries a potential iff W is symmetric."""
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("W must be a square matrix")
    if not np.all(np.isfinite(W)):
        raise ValueError("W must be finite")
    n = W.shape[0]
    W.setflags(write=False)
    potential = None
    if np.array_equal(W, W.T):
        potential = lambda x: 0.5 * float(np.asarray(x) @ W @ np.asarray(x))
    return Game(
        n=n,
        payoff=lambda x: W @ np.asarray(x, dtype=float),
        jacobian=lambda x: W,
        potential=potential,
        linear=True,
        name="linear",
    )


def congestion_game(link_costs, routes) -> Game:
    """Route-choice game over shared links with linear link costs.

    link_costs[l] is the cost coefficient of link l+1 (> 0); routes are
    lists of 1-based link indices.  The payoff is the negated route cost
    F(x) = -W x with W_rs the total coefficient of links shared by routes
    r and s; W is symmetric, so the game is a potential game with
    f(x) = -x' W x / 2.
    """
    c = np.asarray(link_costs, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("link_costs must be a nonempty vector")
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise ValueError("link cost coefficients must be positive and finite")
    if len(routes) == 0:
        raise ValueError("route list is empty")
    route_sets = []
    for r in routes:
        s = set(int(l) for l in r)
        if not s:
            raise ValueError("every route must contain at least one link")
        if any(l < 1 or l > c.size for l in s):
            raise ValueError(f"route {sorted(s)} references an unknown link")
        route_sets.append(s)
    n = len(route_sets)
    W = np.zeros((n, n))
    for r in range(n):
        for s in range(n):
            shared = route_sets[r] & route_sets[s]
            W[r, s] = sum(c[l - 1] for l in shared)
    W.setflags(write=False)
    return Game(
        n=n,
        payoff=lambda x: -(W @ np.asarray(x, dtype=float)),
        jacobian=lambda x: -W,
        potential=lambda x: -0.5 * float(np.asarray(x) @ W @ np.asarray(x)),
        linear=True,
        name="congestion",
    )


def tangent_basis(n: int) -> np.ndarray:
    """Orthonormal basis (n x (n-1)) of the zero-sum tangent space."""
    # SVD of the all-ones row; deterministic and exactly orthonormal.
    _, _, vt = np.linalg.svd(np.ones((1, n)))
    return vt[1:].T


def sample_simplex(n: int, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform (Dirichlet(1,...,1)) points of the simplex, one per row."""
    return rng.dirichlet(np.ones(n), size=samples)


def _projected_eigs(J: np.ndarray, Q: np.ndarray) -> np.ndarray:
    S = 0.5 * (J + J.T)
    return np.linalg.eigvalsh(Q.T @ (-S) @ Q)


def contractivity_margins(
    game: Game, samples: int = 10_000, rng: np.random.Generator | None = None
) -> ContractivityMargins:
    """Extreme projected eigenvalues of -sym(DF) over the simplex.

    Exact (single evaluation) for linear games; sampled over the simplex
    otherwise.  gamma_lower > 0 certifies strict contractivity.
    """
    Q = tangent_basis(game.n)
    if game.linear:
        eigs = _projected_eigs(np.asarray(game.jacobian(np.full(game.n, 1.0 / game.n))), Q)
        return ContractivityMargins(float(eigs.min()), float(eigs.max()))
    if rng is None:
        rng = np.random.default_rng(0)
    lo, hi = np.inf, -np.inf
    for xi in sample_simplex(game.n, samples, rng):
        eigs = _projected_eigs(np.asarray(game.jacobian(xi), dtype=float), Q)
        lo = min(lo, float(eigs.min()))
        hi = max(hi, float(eigs.max()))
    return ContractivityMargins(lo, hi)


def is_potential(
    game: Game,
    tol: float = 1e-8,
    samples: int = 100,
    rng: np.random.Generator | None = None,
) -> bool:
    """Jacobian symmetry at sampled points; on the convex simplex this is
    necessary and sufficient for a potential to exist."""
    if rng is None:
        rng = np.random.default_rng(0)
    if game.linear:
        pts = sample_simplex(game.n, 1, rng)
    else:
        pts = sample_simplex(game.n, samples, rng)
    for xi in pts:
        J = np.asarray(game.jacobian(xi), dtype=float)
        if np.abs(J - J.T).max() > tol:
            return False
    return True


def check_consistency(
    game: Game,
    samples: int = 100,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
) -> None:
    """Finite-difference audit of a game's evaluators on sampled points.

    Verifies DF against central differences of F and, when a potential is
    present, grad f against F.  Raises ValueError on mismatch; intended
    for user-supplied games and for the test suite.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    h = 1e-6
    eye = np.eye(game.n)
    for xi in sample_simplex(game.n, samples, rng):
        J = np.asarray(game.jacobian(xi), dtype=float)
        for k in range(game.n):
            fd = (np.asarray(game.payoff(xi + h * eye[k])) - np.asarray(game.payoff(xi - h * eye[k]))) / (2 * h)
            if np.abs(fd - J[:, k]).max() > tol:
                raise ValueError(f"jacobian column {k} off by {np.abs(fd - J[:, k]).max():.3g}")
        if game.potential is not None:
            for k in range(game.n):
                gd = (game.potential(xi + h * eye[k]) - game.potential(xi - h * eye[k])) / (2 * h)
                err = abs(gd - float(np.asarray(game.payoff(xi))[k]))
                if err > tol:
                    raise ValueError(f"potential gradient component {k} off by {err:.3g}")
