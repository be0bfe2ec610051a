"""Scenario file parsing, serialization, and trace exports."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from linkrev import (
    AdditionForbiddenError,
    DisconnectedGraphError,
    HeightRangeError,
    OverflowRiskError,
    Scenario,
    ScenarioFormatError,
    Schedule,
    SchemeId,
    SimEvent,
    load_scenario,
    parse_scenario,
    run_scenario,
    save_scenario,
    serialize_scenario,
)
from linkrev.traceio import (
    EXPORT_FORMATS,
    export_trace,
    iter_jsonl,
    trace_to_csv,
    trace_to_dot_frames,
    trace_to_jsonl,
)

GOOD = """\
scenario v1
# a three node chain with a raised middle
name chain-demo
nodes 3
edges D-1 1-3
edges 2-3
heights 1 2 3
seed 7
event 2 sleep 1 2
event 5 remove-link 2-3
"""


# --- parsing -----------------------------------------------------------------


def test_parse_good_scenario():
    sc = parse_scenario(GOOD)
    assert sc.name == "chain-demo"
    assert sc.n == 3
    assert sc.edges == ((0, 1), (1, 3), (2, 3))
    assert sc.heights.values == (1, 2, 3)
    assert sc.explicit_heights
    assert sc.seed == 7
    assert sc.events == (
        SimEvent(at_step=2, kind="sleep", node=1, duration=2),
        SimEvent(at_step=5, kind="remove-link", edge=(2, 3)),
    )
    assert sc.scenario_id() == "chain-demo"


def test_parse_defaults_heights_to_hop_counts():
    sc = parse_scenario("scenario v1\nnodes 2\nedges D-1 1-2\n")
    assert sc.heights.values == (1, 2)
    assert not sc.explicit_heights
    assert sc.seed is None
    assert sc.scenario_id().startswith("n2-e2-")


@pytest.mark.parametrize(
    "text, line, fragment",
    [
        ("nodes 2\n", 1, "first directive"),
        ("scenario v1\nbogus 1\n", 2, "unknown directive"),
        ("scenario v1\nedges D-1\n", 2, "nodes must be declared"),
        ("scenario v1\nnodes 0\n", 2, "node count"),
        ("scenario v1\nnodes 2\nedges D-1 D-1\n", 3, "duplicate edge"),
        ("scenario v1\nnodes 2\nedges D1\n", 3, "expected <a>-<b>"),
        ("scenario v1\nnodes 2\nedges D-5\n", 3, "out of range"),
        ("scenario v1\nnodes 2\nedges 1-1\n", 3, "self loop"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nheights 3\n", 4, "expected 2 heights"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nheights 1 x\n", 4, "must be an integer"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nheights 1 1\nheights 2 2\n", 5, "twice"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nevent 0 wake 1\n", 4, "event step"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nevent 1 explode 1\n", 4, "unknown event kind"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nevent 1 sleep 1\n", 4, "usage: event"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nname\n", 4, "name directive"),
        ("scenario v1\nnodes 2\nedges D-1 1-2\nseed x\n", 4, "seed"),
    ],
)
def test_parse_errors_carry_the_line_number(text, line, fragment):
    with pytest.raises(ScenarioFormatError, match=fragment) as err:
        parse_scenario(text)
    assert err.value.line == line
    assert err.value.column is not None


def test_parse_error_column_points_at_the_offending_node():
    with pytest.raises(ScenarioFormatError) as err:
        parse_scenario("scenario v1\nnodes 2\nedges D-1 1-9\n")
    # column 13 is the "9" inside the bad edge token, not the token start
    assert (err.value.line, err.value.column) == (3, 13)


def test_parse_rejects_nonpositive_heights():
    with pytest.raises(HeightRangeError) as err:
        parse_scenario("scenario v1\nnodes 2\nedges D-1 1-2\nheights 1 0\n")
    assert err.value.line == 4


def test_parse_rejects_additions():
    with pytest.raises(AdditionForbiddenError):
        parse_scenario("scenario v1\nnodes 2\nedges D-1 1-2\nevent 1 add-link 1-2\n")


def test_parse_rejects_disconnected_graphs():
    with pytest.raises(DisconnectedGraphError):
        parse_scenario("scenario v1\nnodes 3\nedges D-1 2-3\n")


def test_parse_rejects_overflowing_threshold_range():
    # 80 nodes of height 1000 push the doubling sequence past 64 bits
    edges = " ".join(f"{i}-{i + 1}" for i in range(1, 80)) + " D-1"
    text = f"scenario v1\nnodes 80\nedges {edges}\nheights {' '.join(['1000'] * 80)}\n"
    with pytest.raises(OverflowRiskError):
        parse_scenario(text)


def test_missing_sections_are_reported():
    with pytest.raises(ScenarioFormatError, match="missing nodes"):
        parse_scenario("scenario v1\n")
    with pytest.raises(ScenarioFormatError, match="missing edges"):
        parse_scenario("scenario v1\nnodes 2\n")
    with pytest.raises(ScenarioFormatError, match="missing header"):
        parse_scenario("")


def test_event_validation_against_the_topology():
    with pytest.raises(ScenarioFormatError, match="unknown link"):
        Scenario.create(
            3, [(0, 1), (1, 2), (2, 3)],
            events=[SimEvent(at_step=1, kind="remove-link", edge=(1, 3))],
        )
    with pytest.raises(ScenarioFormatError, match="destination"):
        Scenario.create(
            2, [(0, 1), (1, 2)],
            events=[SimEvent(at_step=1, kind="remove-node", node=0)],
        )
    with pytest.raises(ScenarioFormatError, match="duration"):
        Scenario.create(
            2, [(0, 1), (1, 2)],
            events=[SimEvent(at_step=1, kind="sleep", node=1, duration=0)],
        )


# --- round trips -------------------------------------------------------------


def test_serialize_round_trip(tmp_path):
    sc = parse_scenario(GOOD)
    assert parse_scenario(serialize_scenario(sc)) == sc
    path = tmp_path / "demo.scn"
    save_scenario(sc, path)
    assert load_scenario(path) == sc


def test_round_trip_preserves_default_heights():
    sc = parse_scenario("scenario v1\nnodes 2\nedges D-1 1-2\n")
    text = serialize_scenario(sc)
    assert "heights" not in text
    assert parse_scenario(text) == sc


def test_load_uses_the_file_stem_as_fallback_name(tmp_path):
    path = tmp_path / "my-case.scn"
    path.write_text("scenario v1\nnodes 2\nedges D-1 1-2\n", encoding="utf-8")
    assert load_scenario(path).name == "my-case"


def test_serialize_wraps_long_edge_lists():
    n = 30
    edges = [(0, 1)] + [(i, i + 1) for i in range(1, n)]
    sc = Scenario.create(n, edges)
    text = serialize_scenario(sc)
    edge_lines = [line for line in text.splitlines() if line.startswith("edges ")]
    assert len(edge_lines) == 3
    assert parse_scenario(text) == sc


@st.composite
def _random_scenarios(draw):
    n = draw(st.integers(2, 7))
    edges = {(0, 1)} | {(i - 1, i) for i in range(2, n + 1)}
    for _ in range(draw(st.integers(0, 4))):
        a = draw(st.integers(0, n - 1))
        b = draw(st.integers(a + 1, n))
        edges.add((a, b))
    heights = tuple(draw(st.lists(st.integers(1, 50), min_size=n, max_size=n)))
    seed = draw(st.none() | st.integers(0, 999))
    events = []
    if draw(st.booleans()):
        victim = draw(st.integers(1, n))
        events.append(SimEvent(at_step=draw(st.integers(1, 9)), kind="sleep", node=victim,
                               duration=draw(st.integers(1, 5))))
    return Scenario.create(n, edges, heights=heights, events=events, seed=seed,
                           name=draw(st.none() | st.just("fuzzed")))


@given(sc=_random_scenarios())
def test_round_trip_is_lossless(sc):
    assert parse_scenario(serialize_scenario(sc)) == sc


# --- trace exports -----------------------------------------------------------


@pytest.fixture
def one_step_trace(chain):
    return run_scenario(chain, SchemeId.NO_FULL, Schedule.single_random(0))


def test_jsonl_has_one_record_per_step_plus_totals(one_step_trace):
    lines = trace_to_jsonl(one_step_trace).splitlines()
    assert len(lines) == 2
    step = json.loads(lines[0])
    totals = json.loads(lines[1])
    assert step["type"] == "step"
    assert step["index"] == 1
    assert step["stuck"] == [2]
    assert step["updated"] == [2]
    assert step["states"] == {"2": {"updates": 1, "height": 5}}
    assert totals["type"] == "totals"
    assert totals["outcome"] == "converged"
    assert totals["scheme"] == "no-full"
    assert totals["total_updates"] == 1
    assert totals["updates_by_node"] == {"1": 0, "2": 1, "3": 0}
    assert totals["initial_dag"] != totals["final_dag"]
    assert totals["certificate"] is None


def test_truncated_jsonl_is_still_a_valid_prefix(one_step_trace):
    lines = trace_to_jsonl(one_step_trace).splitlines()
    parsed = list(iter_jsonl("\n".join(lines[:-1])))
    assert [rec["type"] for rec in parsed] == ["step"]


def test_csv_is_header_plus_one_totals_row(one_step_trace):
    lines = trace_to_csv(one_step_trace).splitlines()
    assert len(lines) == 2
    header = lines[0].split(",")
    row = lines[1].split(",")
    assert header[:2] == ["outcome", "scheme"]
    assert header[-3:] == ["updates_1", "updates_2", "updates_3"]
    assert row[0] == "converged"
    assert row[-3:] == ["0", "1", "0"]


def test_dot_frames_cover_initial_plus_each_step(one_step_trace):
    text = trace_to_dot_frames(one_step_trace)
    assert text.count("digraph") == len(one_step_trace.steps) + 1
    assert '"D" [shape=doublecircle];' in text
    assert '"2" [style=filled];' in text


def test_dot_frames_need_recorded_arcs(chain):
    trace = run_scenario(chain, SchemeId.NO_FULL, Schedule.single_random(0), record_arcs=False)
    with pytest.raises(ValueError, match="record_arcs"):
        trace_to_dot_frames(trace)


def test_export_trace_dispatch(one_step_trace):
    for fmt in EXPORT_FORMATS:
        assert export_trace(one_step_trace, fmt)
    with pytest.raises(ValueError, match="unknown trace format"):
        export_trace(one_step_trace, "yaml")
