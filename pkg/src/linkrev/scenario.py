"""Scenario files: a line-oriented text format for topologies and event scripts.

Grammar (one directive per line, '#' starts a comment, blank lines ignored)::

    scenario v1                  header, must come first
    name <free text>             optional
    nodes <N>                    node ids are 1..N plus the destination "D"
    edges <a>-<b> [<c>-<d> ...]  repeatable, cumulative
    heights <h1> ... <hN>        optional; defaults to hop counts from D
    seed <k>                     optional default RNG seed for this scenario
    event <step> remove-node <i>
    event <step> remove-link <a>-<b>
    event <step> sleep <i> <duration>
    event <step> wake <i>

Node additions are outside the model and rejected.  Parsing validates
connectivity, height positivity and that the doubling height thresholds
stay within the signed 64-bit range for the given node count.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import (
    AdditionForbiddenError,
    DisconnectedGraphError,
    HeightRangeError,
    OverflowRiskError,
    ScenarioFormatError,
)
from .model import DESTINATION, HeightAssignment, Topology, hop_count_heights
from .schemes import INT63_MAX, threshold

HEADER = "scenario v1"

EVENT_KINDS = ("remove-node", "remove-link", "sleep", "wake")

_FORBIDDEN_EVENT_KINDS = ("add-node", "add-link")


@dataclass(frozen=True)
class SimEvent:
    """A scripted topology change, applied just before the given step runs."""

    at_step: int
    kind: str
    node: int | None = None
    edge: tuple[int, int] | None = None
    duration: int | None = None

    def describe(self) -> str:
        if self.kind == "remove-node":
            return f"remove-node {self.node}"
        if self.kind == "remove-link":
            a, b = self.edge
            return f"remove-link {_node_name(a)}-{_node_name(b)}"
        if self.kind == "sleep":
            return f"sleep {self.node} {self.duration}"
        return f"wake {self.node}"


def _node_name(i: int) -> str:
    return "D" if i == DESTINATION else str(i)


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario: topology, initial heights, and optional events."""

    n: int
    edges: tuple[tuple[int, int], ...]
    heights: HeightAssignment
    events: tuple[SimEvent, ...] = ()
    seed: int | None = None
    name: str | None = None
    explicit_heights: bool = True

    @classmethod
    def create(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        heights: Iterable[int] | None = None,
        events: Iterable[SimEvent] = (),
        seed: int | None = None,
        name: str | None = None,
    ) -> Scenario:
        """Build and validate a scenario from raw parts.

        Heights default to hop counts when omitted; edge lists are
        canonicalized so that equal scenarios compare equal.
        """
        topo = Topology.build(n, edges)
        if heights is None:
            assignment = hop_count_heights(topo)
            explicit = False
        else:
            values = tuple(heights)
            if len(values) != n:
                raise HeightRangeError(f"expected {n} heights, got {len(values)}")
            for idx, h in enumerate(values, start=1):
                if not isinstance(h, int) or isinstance(h, bool) or h < 1:
                    raise HeightRangeError(
                        f"initial height of node {idx} must be a positive integer, got {h!r}"
                    )
            assignment = HeightAssignment(values)
            explicit = True
        scenario = cls(
            n=n,
            edges=topo.edges,
            heights=assignment,
            events=tuple(events),
            seed=seed,
            name=name,
            explicit_heights=explicit,
        )
        scenario._validate_bounds()
        scenario._validate_events()
        return scenario

    @cached_property
    def topology(self) -> Topology:
        return Topology.build(self.n, self.edges)

    def scenario_id(self) -> str:
        """Stable short identifier for reports."""
        if self.name:
            return self.name
        tag = hashlib.sha256(repr((self.edges, self.heights.values)).encode()).hexdigest()[:6]
        return f"n{self.n}-e{len(self.edges)}-{tag}"

    def _validate_bounds(self) -> None:
        try:
            threshold(self.n, self.heights.max_height)
        except OverflowRiskError:
            raise OverflowRiskError(
                f"doubling thresholds overflow 64-bit range for n={self.n}, "
                f"max height {self.heights.max_height}"
            ) from None

    def _validate_events(self) -> None:
        topo = self.topology
        edge_set = set(topo.edges)
        for ev in self.events:
            if ev.at_step < 1:
                raise ScenarioFormatError(f"event step must be >= 1, got {ev.at_step}")
            if ev.kind not in EVENT_KINDS:
                raise ScenarioFormatError(f"unknown event kind {ev.kind!r}")
            if ev.kind == "remove-link":
                a, b = ev.edge
                e = (a, b) if a < b else (b, a)
                if e not in edge_set:
                    raise ScenarioFormatError(
                        f"event removes unknown link {_node_name(a)}-{_node_name(b)}"
                    )
            else:
                if ev.node == DESTINATION:
                    raise ScenarioFormatError("the destination is permanent and never sleeps")
                if not 1 <= ev.node <= self.n:
                    raise ScenarioFormatError(f"event refers to unknown node {ev.node}")
                if ev.kind == "sleep" and (ev.duration is None or ev.duration < 1):
                    raise ScenarioFormatError("sleep duration must be a positive integer")


# --- parsing ----------------------------------------------------------------


def _parse_node_token(token: str, n: int | None, lineno: int, column: int) -> int:
    if token == "D":
        return DESTINATION
    if not token.isdigit():
        raise ScenarioFormatError(f"expected a node id, got {token!r}", lineno, column)
    value = int(token)
    if value < 1 or (n is not None and value > n):
        raise ScenarioFormatError(f"node id {value} out of range", lineno, column)
    return value


def _parse_edge_token(token: str, n: int | None, lineno: int, column: int) -> tuple[int, int]:
    parts = token.split("-")
    if len(parts) != 2:
        raise ScenarioFormatError(f"expected <a>-<b>, got {token!r}", lineno, column)
    a = _parse_node_token(parts[0], n, lineno, column)
    b = _parse_node_token(parts[1], n, lineno, column + len(parts[0]) + 1)
    if a == b:
        raise ScenarioFormatError(f"self loop {token!r}", lineno, column)
    return (a, b) if a < b else (b, a)


def _parse_int(token: str, what: str, lineno: int, column: int, minimum: int = 0) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ScenarioFormatError(f"{what} must be an integer, got {token!r}", lineno, column) from None
    if value < minimum:
        raise ScenarioFormatError(f"{what} must be >= {minimum}, got {value}", lineno, column)
    return value


def parse_scenario(text: str, name: str | None = None) -> Scenario:
    """Parse scenario text; errors carry the offending line and column."""
    header_seen = False
    n: int | None = None
    declared_name: str | None = None
    edges: list[tuple[int, int]] = []
    edge_seen: set[tuple[int, int]] = set()
    heights: list[int] | None = None
    seed: int | None = None
    events: list[SimEvent] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        tokens = line.split()
        columns = _token_columns(line, tokens)
        if not header_seen:
            if line.strip() != HEADER:
                raise ScenarioFormatError(
                    f"first directive must be {HEADER!r}", lineno, columns[0]
                )
            header_seen = True
            continue
        keyword = tokens[0]
        if keyword == "name":
            declared_name = line.strip()[len("name") :].strip()
            if not declared_name:
                raise ScenarioFormatError("name directive needs a value", lineno, columns[0])
        elif keyword == "nodes":
            if len(tokens) != 2:
                raise ScenarioFormatError("usage: nodes <N>", lineno, columns[0])
            n = _parse_int(tokens[1], "node count", lineno, columns[1], minimum=1)
        elif keyword == "edges":
            if n is None:
                raise ScenarioFormatError("nodes must be declared before edges", lineno, columns[0])
            if len(tokens) < 2:
                raise ScenarioFormatError("edges directive needs at least one edge", lineno, columns[0])
            for token, col in zip(tokens[1:], columns[1:]):
                e = _parse_edge_token(token, n, lineno, col)
                if e in edge_seen:
                    raise ScenarioFormatError(f"duplicate edge {token!r}", lineno, col)
                edge_seen.add(e)
                edges.append(e)
        elif keyword == "heights":
            if n is None:
                raise ScenarioFormatError("nodes must be declared before heights", lineno, columns[0])
            if heights is not None:
                raise ScenarioFormatError("heights declared twice", lineno, columns[0])
            if len(tokens) - 1 != n:
                raise ScenarioFormatError(
                    f"expected {n} heights, got {len(tokens) - 1}", lineno, columns[0]
                )
            heights = []
            for token, col in zip(tokens[1:], columns[1:]):
                try:
                    value = int(token)
                except ValueError:
                    raise ScenarioFormatError(
                        f"height must be an integer, got {token!r}", lineno, col
                    ) from None
                if value < 1:
                    raise HeightRangeError(
                        f"initial heights must be positive, got {value}", lineno, col
                    )
                if value > INT63_MAX:
                    raise OverflowRiskError(f"height {value} exceeds the 64-bit range")
                heights.append(value)
        elif keyword == "seed":
            if len(tokens) != 2:
                raise ScenarioFormatError("usage: seed <k>", lineno, columns[0])
            seed = _parse_int(tokens[1], "seed", lineno, columns[1])
        elif keyword == "event":
            events.append(_parse_event(tokens, columns, n, lineno))
        else:
            raise ScenarioFormatError(f"unknown directive {keyword!r}", lineno, columns[0])

    if not header_seen:
        raise ScenarioFormatError("empty scenario: missing header", 1)
    if n is None:
        raise ScenarioFormatError("missing nodes directive", 1)
    if not edges:
        raise ScenarioFormatError("missing edges directive", 1)

    try:
        return Scenario.create(
            n,
            edges,
            heights=heights,
            events=events,
            seed=seed,
            name=declared_name if declared_name is not None else name,
        )
    except DisconnectedGraphError as exc:
        raise DisconnectedGraphError(str(exc)) from None


def _token_columns(line: str, tokens: list[str]) -> list[int]:
    columns = []
    cursor = 0
    for token in tokens:
        idx = line.index(token, cursor)
        columns.append(idx + 1)
        cursor = idx + len(token)
    return columns


def _parse_event(tokens: list[str], columns: list[int], n: int | None, lineno: int) -> SimEvent:
    if n is None:
        raise ScenarioFormatError("nodes must be declared before events", lineno, columns[0])
    if len(tokens) < 3:
        raise ScenarioFormatError("usage: event <step> <kind> <args>", lineno, columns[0])
    at_step = _parse_int(tokens[1], "event step", lineno, columns[1], minimum=1)
    kind = tokens[2]
    if kind in _FORBIDDEN_EVENT_KINDS:
        raise AdditionForbiddenError(
            f"line {lineno}: topology additions are not modeled ({kind})"
        )
    if kind not in EVENT_KINDS:
        raise ScenarioFormatError(f"unknown event kind {kind!r}", lineno, columns[2])
    args = tokens[3:]
    arg_cols = columns[3:]
    if kind == "remove-node":
        if len(args) != 1:
            raise ScenarioFormatError("usage: event <step> remove-node <i>", lineno, columns[2])
        node = _parse_node_token(args[0], n, lineno, arg_cols[0])
        if node == DESTINATION:
            raise ScenarioFormatError("the destination cannot be removed", lineno, arg_cols[0])
        return SimEvent(at_step, kind, node=node)
    if kind == "remove-link":
        if len(args) != 1:
            raise ScenarioFormatError("usage: event <step> remove-link <a>-<b>", lineno, columns[2])
        edge = _parse_edge_token(args[0], n, lineno, arg_cols[0])
        return SimEvent(at_step, kind, edge=edge)
    if kind == "sleep":
        if len(args) != 2:
            raise ScenarioFormatError("usage: event <step> sleep <i> <duration>", lineno, columns[2])
        node = _parse_node_token(args[0], n, lineno, arg_cols[0])
        duration = _parse_int(args[1], "sleep duration", lineno, arg_cols[1], minimum=1)
        return SimEvent(at_step, kind, node=node, duration=duration)
    if len(args) != 1:
        raise ScenarioFormatError("usage: event <step> wake <i>", lineno, columns[2])
    node = _parse_node_token(args[0], n, lineno, arg_cols[0])
    return SimEvent(at_step, kind, node=node)


# --- serialization ----------------------------------------------------------


def serialize_scenario(scenario: Scenario) -> str:
    """Render a scenario back to text; parse(serialize(s)) == s."""
    lines = [HEADER]
    if scenario.name:
        lines.append(f"name {scenario.name}")
    lines.append(f"nodes {scenario.n}")
    edge_tokens = [f"{_node_name(a)}-{_node_name(b)}" for a, b in scenario.edges]
    for start in range(0, len(edge_tokens), 12):
        lines.append("edges " + " ".join(edge_tokens[start : start + 12]))
    if scenario.explicit_heights:
        lines.append("heights " + " ".join(str(h) for h in scenario.heights.values))
    if scenario.seed is not None:
        lines.append(f"seed {scenario.seed}")
    for ev in scenario.events:
        lines.append(f"event {ev.at_step} {ev.describe()}")
    return "\n".join(lines) + "\n"


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    return parse_scenario(p.read_text(encoding="utf-8"), name=p.stem)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(serialize_scenario(scenario), encoding="utf-8")
