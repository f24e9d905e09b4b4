"""Shared fixtures plus the acceptance-criteria scoreboard.

Acceptance tests call check_criterion(); the collected verdicts are printed
as one line per criterion in the terminal summary so a run can be audited
at a glance.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

import erlang_edm as edm

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def check_criterion(num: int, passed: bool, detail: str) -> None:
    """Record a criterion verdict, then assert it."""
    _ACCEPTANCE[num] = (bool(passed), detail)
    assert passed, f"criterion {num}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[num]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[acceptance] criterion {num}: {verdict} - {detail}")


def congestion_game_61():
    return edm.congestion_game(
        [2.5, 1.5, 0.5, 2.5, 0.7], [[1, 2], [4, 5], [1, 3, 5]]
    )


def rps_game_62():
    return edm.linear_game([[0.0, -2.0, 3.0], [3.0, 0.0, -2.0], [-2.0, 3.0, 0.0]])


@pytest.fixture(scope="session")
def congestion_setup():
    game = congestion_game_61()
    protocol = edm.smith_protocol(3, 5.0)
    params = edm.ErlangParams(3, 3, 5.0)
    x0 = np.zeros((3, 3))
    x0[0, 2] = 0.2
    x0[1, 0] = 0.2
    x0[2, 0] = 0.6
    return game, protocol, params, x0


@pytest.fixture(scope="session")
def rps_setup():
    game = rps_game_62()
    protocol = edm.smith_protocol(3, 5.8)
    params = edm.ErlangParams(3, 4, 5.8)
    x0 = np.zeros((3, 4))
    x0[0, 3] = 0.2
    x0[1, 0] = 0.2
    x0[2, 0] = 0.6
    return game, protocol, params, x0


def _timed_run(setup):
    game, protocol, params, x0 = setup
    start = time.perf_counter()
    traj = edm.integrate(game, protocol, params, x0, horizon=50.0, sample_dt=0.05)
    return traj, time.perf_counter() - start


@pytest.fixture(scope="session")
def congestion_run(congestion_setup):
    """(trajectory, wall seconds) for the three-route congestion benchmark."""
    return _timed_run(congestion_setup)


@pytest.fixture(scope="session")
def rps_run(rps_setup):
    """(trajectory, wall seconds) for the rock-paper-scissors benchmark."""
    return _timed_run(rps_setup)
