"""Trace exports: JSON lines, a one-row CSV summary, and Graphviz frames.

The JSONL format writes one self-contained record per simulation step and
a final totals record, so a truncated file is still a valid prefix.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterator
from pathlib import Path

from .scenario import _node_name
from .schemes import state_payload
from .sim import Trace

EXPORT_FORMATS = ("jsonl", "csv", "dot-frames")


def _step_record(trace: Trace, index: int) -> dict:
    rec = trace.steps[index]
    return {
        "type": "step",
        "index": rec.index,
        "stuck": list(rec.stuck),
        "updated": list(rec.updated),
        "states": {str(s.node): state_payload(trace.scheme, s) for s in rec.new_states},
        "dag": rec.dag_digest,
        "reversed": [list(e) for e in rec.reversed_edges],
    }


def _totals_record(trace: Trace) -> dict:
    return {
        "type": "totals",
        "outcome": trace.outcome.value,
        "scheme": trace.scheme.value,
        "n": trace.n,
        "schedule": trace.schedule.describe(),
        "step_limit": trace.step_limit,
        "steps": len(trace.steps),
        "total_updates": trace.total_updates,
        "total_reversals": trace.total_reversals,
        "updates_by_node": {str(i): c for i, c in sorted(trace.update_counts.items())},
        "initial_dag": trace.initial_digest,
        "final_dag": trace.final_digest,
        "certificate": trace.certificate,
        "events": [[step, text] for step, text in trace.events_applied],
    }


def trace_to_jsonl(trace: Trace) -> str:
    """One JSON object per step, then one totals object."""
    lines = [
        json.dumps(_step_record(trace, i), sort_keys=True, separators=(",", ":"))
        for i in range(len(trace.steps))
    ]
    lines.append(json.dumps(_totals_record(trace), sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def trace_to_csv(trace: Trace) -> str:
    """Header plus a single totals row."""
    nodes = sorted(trace.update_counts)
    header = ["outcome", "scheme", "steps", "total_updates", "total_reversals"] + [
        f"updates_{i}" for i in nodes
    ]
    row = [
        trace.outcome.value,
        trace.scheme.value,
        len(trace.steps),
        trace.total_updates,
        trace.total_reversals,
    ] + [trace.update_counts[i] for i in nodes]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerow(row)
    return buffer.getvalue()


def _frame(name: str, label: str, arcs, highlight: tuple[int, ...] = ()) -> str:
    lines = [f"digraph {name} {{"]
    lines.append(f'  label="{label}";')
    lines.append('  "D" [shape=doublecircle];')
    for i in sorted(highlight):
        lines.append(f'  "{i}" [style=filled];')
    for s, d in arcs:
        lines.append(f'  "{_node_name(s)}" -> "{_node_name(d)}";')
    lines.append("}")
    return "\n".join(lines)


def trace_to_dot_frames(trace: Trace) -> str:
    """steps+1 digraph blocks: the initial orientation and one per step."""
    frames = [_frame("frame_0", "initial", trace.initial_arcs)]
    for rec in trace.steps:
        if rec.arcs is None:
            raise ValueError(
                "dot-frames needs per-step orientations; run with record_arcs=True"
            )
        updated = ",".join(str(i) for i in rec.updated)
        frames.append(
            _frame(f"frame_{rec.index}", f"step {rec.index}: updated {updated}", rec.arcs, rec.updated)
        )
    return "\n\n".join(frames) + "\n"


def export_trace(trace: Trace, fmt: str) -> str:
    if fmt == "jsonl":
        return trace_to_jsonl(trace)
    if fmt == "csv":
        return trace_to_csv(trace)
    if fmt == "dot-frames":
        return trace_to_dot_frames(trace)
    raise ValueError(f"unknown trace format {fmt!r}; expected one of {EXPORT_FORMATS}")


def write_trace(trace: Trace, path: str | Path, fmt: str) -> None:
    Path(path).write_text(export_trace(trace, fmt), encoding="utf-8")


def iter_jsonl(text: str) -> Iterator[dict]:
    """Parse a JSONL trace export; tolerates a missing totals line."""
    for line in text.splitlines():
        line = line.strip()
        if line:
            yield json.loads(line)
