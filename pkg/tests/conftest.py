"""Shared fixtures: small scenarios with hand-checked behavior.

chain       D-1 1-3 2-3, heights 1 2 3: node 2 is the single stuck node.
reversed_pair  D-1 1-2 2-3, heights 2 1 1: node 3 starts with its only link
            already reversed toward it, the case that forces the counted
            partial schemes into a silent update followed by a full one.
star        D-1 1-2 1-3, heights 2 1 1: two stuck leaves at once.
"""

from __future__ import annotations

import pytest

from linkrev import Scenario, Schedule, SchemeId, SimEvent, run_scenario


@pytest.fixture
def chain() -> Scenario:
    return Scenario.create(3, [(0, 1), (1, 3), (2, 3)], heights=(1, 2, 3))


@pytest.fixture
def reversed_pair() -> Scenario:
    return Scenario.create(3, [(0, 1), (1, 2), (2, 3)], heights=(2, 1, 1))


@pytest.fixture
def star() -> Scenario:
    return Scenario.create(3, [(0, 1), (1, 2), (1, 3)], heights=(2, 1, 1))


@pytest.fixture
def diamond_cut() -> Scenario:
    """Losing link D-1 mid-run strands node 1; it recovers through node 3."""
    return Scenario.create(
        3,
        [(0, 1), (0, 2), (1, 3), (2, 3)],
        heights=(1, 1, 2),
        events=[SimEvent(at_step=1, kind="remove-link", edge=(0, 1))],
    )


@pytest.fixture
def sleepy_chain() -> Scenario:
    """Node 2 sleeps through two updates of node 3, drifting phases two apart."""
    return Scenario.create(
        3,
        [(0, 1), (1, 2), (2, 3)],
        heights=(1, 2, 1),
        events=[SimEvent(at_step=1, kind="sleep", node=2, duration=2)],
    )


@pytest.fixture
def run_single():
    """Run a scenario under the default single-node random schedule."""

    def _run(scenario: Scenario, scheme: SchemeId, seed: int = 0, **kwargs):
        return run_scenario(scenario, scheme, Schedule.single_random(seed), **kwargs)

    return _run
