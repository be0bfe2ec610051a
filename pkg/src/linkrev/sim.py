"""Deterministic round-based simulator for the reversal schemes.

Each step: scripted events due at the step are applied, stuck nodes are
detected through hello/ack probing on the awake part of the graph, the
schedule picks a nonempty subset of them, and the chosen nodes update
simultaneously against a snapshot of the pre-step states.  New states
become visible to neighbors from the next step on.  Stuck nodes are never
adjacent (each link has an outgoing endpoint), so simultaneous updates in
one step cannot observe each other, but the snapshot discipline is kept
explicit anyway.

A run ends Converged when no node is stuck and no scripted event remains,
StepLimit when the step budget is exhausted on a connected graph, and
Partitioned when the awake graph is disconnected: for the counter-carrying
schemes the certificate is a stuck node whose update count has reached the
node count (impossible on a connected graph); for the finite-state schemes
partition is reported when the step budget runs out while the awake graph
is disconnected.
"""

from __future__ import annotations

import heapq
import os
import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

from .errors import (
    AdditionForbiddenError,
    EmptyNeighborhoodError,
    EmptyStuckSetError,
    EventError,
    ScheduleError,
)
from .model import (
    DESTINATION,
    COUNTER_SCHEMES,
    HeightAssignment,
    RoutingDag,
    SchemeId,
    State,
    Topology,
    forwarding_set,
    is_destination_oriented,
    link_points_from,
    orientation_flips,
    routing_dag,
    stuck_set,
)
from .scenario import Scenario, SimEvent
from .schemes import RULES, apply_update, initial_states

STEP_LIMIT_ENV = "LINKREV_STEP_LIMIT"


def default_step_limit(n: int) -> int:
    """4*N*N unless overridden through the environment."""
    override = os.environ.get(STEP_LIMIT_ENV)
    if override:
        return int(override)
    return 4 * n * n


class Outcome(str, Enum):
    CONVERGED = "converged"
    STEP_LIMIT = "step-limit"
    PARTITIONED = "partitioned"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Schedule:
    """Adversary policy choosing which stuck nodes update each step."""

    kind: str  # "single-random" | "subset-random" | "fixed"
    seed: int | None = None
    steps: tuple[tuple[int, ...], ...] | None = None
    label: str | None = None

    @classmethod
    def single_random(cls, seed: int) -> Schedule:
        return cls(kind="single-random", seed=seed)

    @classmethod
    def subset_random(cls, seed: int) -> Schedule:
        return cls(kind="subset-random", seed=seed)

    @classmethod
    def fixed(cls, steps: Sequence[Sequence[int]], label: str | None = None) -> Schedule:
        frozen = tuple(tuple(sorted(step)) for step in steps)
        for step in frozen:
            if not step:
                raise ScheduleError("a fixed schedule step cannot be empty")
        return cls(kind="fixed", steps=frozen, label=label)

    def describe(self) -> str:
        if self.kind == "fixed":
            tag = f"[{self.label}]" if self.label else ""
            return f"fixed{tag}({len(self.steps or ())} steps)"
        return f"{self.kind}(seed={self.seed})"

    def selector(self) -> _Selector:
        return _Selector(self)


class _Selector:
    """Stateful per-run view of a schedule."""

    def __init__(self, schedule: Schedule):
        self.schedule = schedule
        self._rng = random.Random(schedule.seed) if schedule.kind != "fixed" else None

    def select(self, stuck: tuple[int, ...], index: int) -> tuple[int, ...]:
        kind = self.schedule.kind
        if kind == "single-random":
            return (self._rng.choice(stuck),)
        if kind == "subset-random":
            mask = self._rng.randrange(1, 1 << len(stuck))
            return tuple(i for bit, i in enumerate(stuck) if mask >> bit & 1)
        steps = self.schedule.steps or ()
        if index > len(steps):
            raise ScheduleError(
                f"fixed schedule exhausted after {len(steps)} steps but the network is still stuck"
            )
        chosen = steps[index - 1]
        extras = set(chosen) - set(stuck)
        if extras:
            raise ScheduleError(
                f"fixed schedule step {index} selects {sorted(extras)} which are not stuck"
            )
        return chosen


@dataclass(frozen=True)
class StepRecord:
    """What happened in one simulation step."""

    index: int
    stuck: tuple[int, ...]
    updated: tuple[int, ...]
    new_states: tuple[State, ...]
    dag_digest: str
    reversed_edges: tuple[tuple[int, int], ...]
    arcs: tuple[tuple[int, int], ...] | None = None


@dataclass(frozen=True)
class Trace:
    """Full record of a run; deterministic for a given scenario and schedule."""

    scheme: SchemeId
    n: int
    schedule: Schedule
    step_limit: int
    initial_arcs: tuple[tuple[int, int], ...]
    initial_digest: str
    steps: tuple[StepRecord, ...]
    outcome: Outcome
    certificate: str | None
    update_counts: Mapping[int, int]
    total_updates: int
    total_reversals: int
    final_digest: str
    final_states: tuple[State, ...]
    events_applied: tuple[tuple[int, str], ...]

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.CONVERGED


def hello_round(
    i: int,
    states: Mapping[int, State],
    topo: Topology,
    awake: frozenset[int],
    scheme: SchemeId,
    heights: HeightAssignment,
) -> bool:
    """True if node i finds itself stuck: no awake forwarding neighbor acks.

    Sleeping neighbors never answer, so their states are not consulted at
    all; the destination is always awake.
    """
    if i not in awake:
        raise ValueError(f"node {i} is not awake")
    own = states[i]
    for j in topo.neighbors(i):
        if j == DESTINATION:
            return False
        if j in awake and link_points_from(own, states[j], scheme, heights):
            return False
    return True


class Simulation:
    """Mutable run state; use run() for the whole trajectory or step() manually."""

    def __init__(
        self,
        scenario: Scenario,
        scheme: SchemeId,
        schedule: Schedule | None = None,
        step_limit: int | None = None,
        record_arcs: bool = True,
    ):
        self.scenario = scenario
        self.scheme = scheme
        self.heights = scenario.heights
        self.n = scenario.n
        self.schedule = schedule or Schedule.single_random(scenario.seed or 0)
        self._selector = self.schedule.selector()
        self.step_limit = step_limit if step_limit is not None else default_step_limit(scenario.n)
        self.record_arcs = record_arcs

        self.live: Topology = scenario.topology
        self.sleeping: dict[int, bool] = {}
        self.states: dict[int, State] = initial_states(scheme, self.live, self.heights)
        self.steps: list[StepRecord] = []
        self.events_applied: list[tuple[int, str]] = []
        self.update_counts: dict[int, int] = {i: 0 for i in self.live.nodes}
        self.total_reversals = 0

        self._queue: list[tuple[int, int, SimEvent]] = []
        self._queue_seq = 0
        for ev in scenario.events:
            self._push_event(ev)

        initial = routing_dag(self.states, self.live, scheme, self.heights)
        self.initial_arcs = initial.arcs
        self.initial_digest = initial.digest()
        self._last_dag = initial

    # -- topology bookkeeping ------------------------------------------------

    def _push_event(self, ev: SimEvent) -> None:
        heapq.heappush(self._queue, (ev.at_step, self._queue_seq, ev))
        self._queue_seq += 1

    @property
    def awake(self) -> frozenset[int]:
        return frozenset(i for i in self.live.nodes if i not in self.sleeping)

    def awake_topology(self) -> Topology:
        if not self.sleeping:
            return self.live
        return self.live.without(drop_nodes=self.sleeping)

    def apply_event(self, ev: SimEvent) -> None:
        """Apply one topology event immediately."""
        if ev.kind.startswith("add-"):
            raise AdditionForbiddenError("topology additions are not modeled")
        if ev.kind == "remove-node":
            if not self.live.has_node(ev.node) or ev.node == DESTINATION:
                raise EventError(f"cannot remove node {ev.node}")
            self.live = self.live.without(drop_nodes=(ev.node,))
            self.states.pop(ev.node, None)
            self.sleeping.pop(ev.node, None)
        elif ev.kind == "remove-link":
            if ev.edge not in set(self.live.edges):
                raise EventError(f"cannot remove missing link {ev.edge}")
            self.live = self.live.without(drop_edges=(ev.edge,))
        elif ev.kind == "sleep":
            if not self.live.has_node(ev.node) or ev.node == DESTINATION:
                raise EventError(f"cannot put node {ev.node} to sleep")
            self.sleeping[ev.node] = True
            wake = SimEvent(at_step=ev.at_step + ev.duration, kind="wake", node=ev.node)
            self._push_event(wake)
        elif ev.kind == "wake":
            self.sleeping.pop(ev.node, None)
        else:
            raise EventError(f"unknown event kind {ev.kind!r}")
        self.events_applied.append((ev.at_step, ev.describe()))

    def _apply_due_events(self) -> None:
        due_step = len(self.steps) + 1
        while self._queue and self._queue[0][0] <= due_step:
            _, _, ev = heapq.heappop(self._queue)
            self.apply_event(ev)

    def _fast_forward_events(self) -> None:
        # Converged but events still scheduled: time passes quietly until the
        # next event fires.  Step indices keep counting update steps only.
        if not self._queue:
            return
        next_step = self._queue[0][0]
        while self._queue and self._queue[0][0] == next_step:
            _, _, ev = heapq.heappop(self._queue)
            self.apply_event(ev)

    # -- stuck detection -----------------------------------------------------

    def stuck_nodes(self) -> tuple[int, ...]:
        """Sorted stuck set, cross-checked against the orientation view."""
        awake = self.awake
        by_probe = tuple(
            sorted(
                i
                for i in awake
                if hello_round(i, self.states, self.live, awake, self.scheme, self.heights)
            )
        )
        awake_topo = self.awake_topology()
        dag = routing_dag(self.states, awake_topo, self.scheme, self.heights)
        by_orientation = stuck_set(dag, awake_topo)
        assert set(by_probe) == by_orientation, (
            f"probe view {by_probe} disagrees with orientation view {sorted(by_orientation)}"
        )
        if awake_topo.is_connected:
            assert (not by_probe) == is_destination_oriented(dag, awake_topo), (
                "empty stuck set must coincide with destination orientation"
            )
        return by_probe

    # -- stepping ------------------------------------------------------------

    def _eligible(self, stuck: tuple[int, ...]) -> tuple[int, ...]:
        """Stuck nodes that can actually update now.

        The neighbor-aware rules need at least one awake neighbor to read;
        a stuck node isolated from every awake neighbor stays stuck but
        cannot be scheduled.  Oblivious rules are always eligible.
        """
        if not RULES[self.scheme].neighbor_aware:
            return stuck
        awake = self.awake
        return tuple(
            i
            for i in stuck
            if any(j != DESTINATION and j in awake for j in self.live.neighbors(i))
        )

    def step(self) -> StepRecord:
        """Run one update step; raises EmptyStuckSetError when already oriented."""
        stuck = self.stuck_nodes()
        if not stuck:
            raise EmptyStuckSetError("no node is stuck; nothing to schedule")
        eligible = self._eligible(stuck)
        if not eligible:
            raise EmptyNeighborhoodError(
                f"stuck nodes {list(stuck)} have no awake neighbor to read"
            )
        index = len(self.steps) + 1
        chosen = tuple(sorted(self._selector.select(eligible, index)))
        if not chosen or set(chosen) - set(eligible):
            raise ScheduleError(f"schedule returned an invalid subset {chosen}")

        snapshot = self.states
        fresh: dict[int, State] = {}
        awake = self.awake
        for i in chosen:
            own = snapshot[i]
            if RULES[self.scheme].neighbor_aware:
                # A stuck node is never destination-adjacent, so the snapshot
                # below only ever contains ordinary neighbor states.
                neighbor_states = [
                    snapshot[j]
                    for j in self.live.neighbors(i)
                    if j != DESTINATION and j in awake
                ]
                fresh[i] = apply_update(self.scheme, own, neighbor_states, self.heights)
            else:
                fresh[i] = apply_update(self.scheme, own, None, self.heights)
        self.states = {**snapshot, **fresh}
        for i in chosen:
            self.update_counts[i] += 1

        awake_topo = self.awake_topology()
        dag = routing_dag(self.states, awake_topo, self.scheme, self.heights)
        flipped = orientation_flips(self._last_dag, dag)
        self.total_reversals += len(flipped)
        record = StepRecord(
            index=index,
            stuck=stuck,
            updated=chosen,
            new_states=tuple(fresh[i] for i in chosen),
            dag_digest=dag.digest(),
            reversed_edges=flipped,
            arcs=dag.arcs if self.record_arcs else None,
        )
        self.steps.append(record)
        self._last_dag = dag
        return record

    def _partition_certificate(self, stuck: tuple[int, ...]) -> str | None:
        if self.scheme not in COUNTER_SCHEMES:
            return None
        for i in stuck:
            if self.states[i].updates >= self.n:
                return (
                    f"node {i} is stuck at update count {self.states[i].updates}; "
                    f"another update would exceed the node count {self.n}, "
                    "impossible on a connected graph"
                )
        return None

    def run(self) -> Trace:
        """Iterate until convergence, partition evidence, or the step budget."""
        outcome: Outcome
        certificate: str | None = None
        while True:
            self._apply_due_events()
            stuck = self.stuck_nodes()
            if not stuck:
                if self._queue:
                    self._fast_forward_events()
                    continue
                outcome = Outcome.CONVERGED
                break
            certificate = self._partition_certificate(stuck)
            if certificate is not None:
                outcome = Outcome.PARTITIONED
                break
            if not self._eligible(stuck):
                if self._queue:
                    # Isolation caused by sleep is transient: let the clock
                    # jump to the next scripted wake or removal.
                    self._fast_forward_events()
                    continue
                outcome = Outcome.PARTITIONED
                certificate = (
                    f"stuck nodes {list(stuck)} have no awake neighbor left to "
                    "read, which cannot happen on a connected graph"
                )
                break
            if len(self.steps) >= self.step_limit:
                if not self.awake_topology().is_connected:
                    outcome = Outcome.PARTITIONED
                    certificate = (
                        f"step budget {self.step_limit} exhausted while the awake "
                        "graph is disconnected"
                    )
                else:
                    outcome = Outcome.STEP_LIMIT
                break
            self.step()
        return self._finalize(outcome, certificate)

    def _finalize(self, outcome: Outcome, certificate: str | None) -> Trace:
        awake_topo = self.awake_topology()
        final = routing_dag(self.states, awake_topo, self.scheme, self.heights)
        return Trace(
            scheme=self.scheme,
            n=self.n,
            schedule=self.schedule,
            step_limit=self.step_limit,
            initial_arcs=self.initial_arcs,
            initial_digest=self.initial_digest,
            steps=tuple(self.steps),
            outcome=outcome,
            certificate=certificate,
            update_counts=dict(self.update_counts),
            total_updates=sum(self.update_counts.values()),
            total_reversals=self.total_reversals,
            final_digest=final.digest(),
            final_states=tuple(self.states[i] for i in sorted(self.states)),
            events_applied=tuple(self.events_applied),
        )


def run_scenario(
    scenario: Scenario,
    scheme: SchemeId,
    schedule: Schedule | None = None,
    step_limit: int | None = None,
    record_arcs: bool = True,
) -> Trace:
    """Convenience wrapper: build a Simulation and run it to completion."""
    sim = Simulation(scenario, scheme, schedule, step_limit, record_arcs)
    return sim.run()
