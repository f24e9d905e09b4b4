"""Exact finite-population simulation of the sub-strategy Markov chain.

Every agent carries a (strategy, stage) label.  Agents tick on independent
exponential(lambda) clocks, realized here as one aggregate clock of rate
lambda * N whose events hit a uniformly chosen agent; a tick advances the
agent one stage, and a tick at the last stage is a revision opportunity
whose destination is drawn from the protocol's rate row at the pre-event
state (staying with the residual probability).  Revision opportunities per
agent are then spaced Erlang(m, lambda) apart by construction.

Determinism is a contract: same seed and scenario give the identical event
sequence.  `gillespie_step` is the pure one-event transition on counts;
`simulate` is the equivalent (distribution-identical) agent-labelled loop
with block-prefetched random draws, cheap enough for desk-scale N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ErlangParams
from .errors import NegativeStayRate
from .games import Game
from .protocols import RevisionProtocol, switch_rate_matrix
from .states import ExtendedState

STAGE_ADVANCE = "stage-advance"
REVISION = "revision"

_BLOCK = 1 << 16  # random draws prefetched per block


@dataclass(frozen=True)
class AgentPopulation:
    counts: np.ndarray  # (n, m) nonnegative integers
    total: int
    clock: float = 0.0

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.total


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: str  # STAGE_ADVANCE or REVISION
    i: int  # strategy before the event
    l: int  # stage before the event (1-based to match state indexing)
    j: int | None = None  # revision destination (equals i on a stay)


@dataclass
class EmpiricalTrajectory:
    times: np.ndarray
    proportions: np.ndarray  # (len(times), n, m)
    seed: int
    total: int
    params: ErlangParams
    events: list[SimEvent] | None = None
    # per-agent revision gaps (start time, length), first gap per agent dropped
    rev_starts: np.ndarray | None = None
    rev_gaps: np.ndarray | None = None


def init_population(N: int, x0) -> AgentPopulation:
    """Largest-remainder rounding of N * x0; ties go to the lowest cell.

    Cells are ordered row-major by (strategy, stage), so deterministic for
    every input.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    g = x0.grid if isinstance(x0, ExtendedState) else np.asarray(x0, dtype=float)
    flat = g.ravel()
    base = np.floor(N * flat).astype(np.int64)
    frac = N * flat - base
    shortfall = int(N - base.sum())
    order = np.lexsort((np.arange(flat.size), -frac))
    base[order[:shortfall]] += 1
    counts = base.reshape(g.shape)
    counts.setflags(write=False)
    return AgentPopulation(counts=counts, total=N, clock=0.0)


def _cumulative_rows(protocol: RevisionProtocol, game: Game, xbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Destination CDF rows (off-diagonal mass / budget) at the given state.

    Validates every stay rate, so an ill-posed state raises regardless of
    which agent happens to revise first.
    """
    p = np.asarray(game.payoff(xbar), dtype=float)
    T = switch_rate_matrix(protocol, xbar, p)  # raises NegativeStayRate
    off = T.copy()
    np.fill_diagonal(off, 0.0)
    return np.cumsum(off, axis=1) / protocol.rate_budget, p


def gillespie_step(
    pop: AgentPopulation,
    game: Game,
    protocol: RevisionProtocol,
    rng: np.random.Generator,
) -> tuple[AgentPopulation, SimEvent]:
    """One exact event on the counts chain.

    Draw order (fixed for reproducibility): exponential holding time at
    rate lambda*N, one uniform for the cell (probability counts/N), and on
    a revision one uniform for the destination.
    """
    n, m = pop.counts.shape
    N = pop.total
    lam = protocol.rate_budget
    dt = rng.standard_exponential() / (lam * N)
    t = pop.clock + dt

    u = rng.random()
    flat = pop.counts.ravel()
    cum = np.cumsum(flat)
    cell = int(np.searchsorted(cum, u * N, side="right"))
    i, l = divmod(cell, m)

    counts = pop.counts.copy()
    if l < m - 1:
        counts[i, l] -= 1
        counts[i, l + 1] += 1
        event = SimEvent(time=t, kind=STAGE_ADVANCE, i=i, l=l + 1)
    else:
        xbar = pop.counts.sum(axis=1) / N
        cumrows, _ = _cumulative_rows(protocol, game, xbar)
        v = rng.random()
        row = cumrows[i]
        j = i if v >= row[-1] else int(np.searchsorted(row, v, side="right"))
        counts[i, m - 1] -= 1
        counts[j, 0] += 1
        event = SimEvent(time=t, kind=REVISION, i=i, l=m, j=j)
    counts.setflags(write=False)
    return AgentPopulation(counts=counts, total=N, clock=t), event


def simulate(
    N: int,
    game: Game,
    protocol: RevisionProtocol,
    params: ErlangParams,
    x0,
    horizon: float,
    seed: int,
    sample_times=None,
    sample_dt: float = 0.05,
    record_events: bool = False,
    record_interarrivals: bool = False,
) -> EmpiricalTrajectory:
    """Run the chain to the horizon, sampling proportions on a grid.

    Samples are piecewise-constant and right-continuous: a grid point that
    coincides with an event sees the post-event state.  Payoffs and
    destination rows are cached between strategy switches (stage advances
    leave the aggregate state unchanged).
    """
    if protocol.rate_budget != params.lam:
        raise ValueError("protocol rate budget must equal params.lam")
    n, m = params.n, params.m
    rng = np.random.Generator(np.random.PCG64(seed))
    pop0 = init_population(N, x0)

    if sample_times is None:
        sample_times = np.arange(0.0, horizon + sample_dt * 1e-9, sample_dt)
    else:
        sample_times = np.asarray(sample_times, dtype=float)
    samples = np.empty((len(sample_times), n, m))

    # agent labels consistent with the initial counts (cells are exchangeable)
    counts0 = pop0.counts
    strat = np.repeat(np.arange(n), counts0.sum(axis=1)).tolist()
    stage = np.concatenate(
        [np.repeat(np.arange(m), counts0[i]) for i in range(n)]
    ).tolist()
    counts = [[int(counts0[i, l]) for l in range(m)] for i in range(n)]
    rowsum = [int(counts0[i].sum()) for i in range(n)]

    events: list[SimEvent] | None = [] if record_events else None
    last_rev = [None] * N if record_interarrivals else None
    rev_starts: list[float] = []
    rev_gaps: list[float] = []

    R = params.lam * N
    mm1 = m - 1
    t = 0.0
    si = 0
    exp_blk = rng.standard_exponential(_BLOCK)
    ei = 0
    u_blk = rng.random(_BLOCK)
    ui = 0
    cache_valid = False
    cumrows = None

    while True:
        if ei >= _BLOCK:
            exp_blk = rng.standard_exponential(_BLOCK)
            ei = 0
        t += exp_blk[ei] / R
        ei += 1
        while si < len(sample_times) and sample_times[si] < t:
            samples[si] = np.asarray(counts, dtype=float) / N
            si += 1
        if t >= horizon:
            while si < len(sample_times):
                samples[si] = np.asarray(counts, dtype=float) / N
                si += 1
            break
        if ui >= _BLOCK:
            u_blk = rng.random(_BLOCK)
            ui = 0
        a = int(u_blk[ui] * N)
        ui += 1
        i = strat[a]
        l = stage[a]
        if l < mm1:
            counts[i][l] -= 1
            counts[i][l + 1] += 1
            stage[a] = l + 1
            if events is not None:
                events.append(SimEvent(time=t, kind=STAGE_ADVANCE, i=i, l=l + 1))
        else:
            if last_rev is not None:
                prev = last_rev[a]
                if prev is not None:
                    rev_starts.append(prev)
                    rev_gaps.append(t - prev)
                last_rev[a] = t
            if not cache_valid:
                xbar = np.asarray(rowsum, dtype=float) / N
                cumrows, _ = _cumulative_rows(protocol, game, xbar)
                cache_valid = True
            if ui >= _BLOCK:
                u_blk = rng.random(_BLOCK)
                ui = 0
            v = u_blk[ui]
            ui += 1
            row = cumrows[i]
            j = i if v >= row[n - 1] else int(np.searchsorted(row, v, side="right"))
            if j != i:
                counts[i][mm1] -= 1
                counts[j][0] += 1
                rowsum[i] -= 1
                rowsum[j] += 1
                strat[a] = j
                stage[a] = 0
                cache_valid = False
            else:
                counts[i][mm1] -= 1
                counts[i][0] += 1
                stage[a] = 0
            if events is not None:
                events.append(SimEvent(time=t, kind=REVISION, i=i, l=m, j=j))

    return EmpiricalTrajectory(
        times=sample_times,
        proportions=samples,
        seed=seed,
        total=N,
        params=params,
        events=events,
        rev_starts=np.asarray(rev_starts) if record_interarrivals else None,
        rev_gaps=np.asarray(rev_gaps) if record_interarrivals else None,
    )


def write_event_csv(path, events: list[SimEvent]) -> None:
    """Event log CSV: t,kind,i,l,j with 1-based strategy indices."""
    fmt = lambda v: format(float(v), ".17g")
    with open(path, "w") as fh:
        fh.write("t,kind,i,l,j\n")
        for e in events:
            j = "" if e.j is None else str(e.j + 1)
            fh.write(f"{fmt(e.time)},{e.kind},{e.i + 1},{e.l},{j}\n")
