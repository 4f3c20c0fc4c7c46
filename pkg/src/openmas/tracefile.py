"""Text formats for traces, event logs and figure CSVs.

Floats are written with 17 significant digits, which round-trips every
double exactly; identical runs therefore produce byte-identical files.

Trace file::

    # opdc trace v1
    epsilon <float>
    alpha <float>
    records <N>
    step <k>
    graph | graph same
    <graph block when not "same": "n m", n labels, m "u v" lines>
    x <values in ascending label order>
    u <values> | u same

The fixed points are not stored; readers recompute them from graph and
references, so a hand-edited trace is analysed as edited.

Event log::

    # opdc event log v1
    init ; n=<n> ; edges=<a-b,...|-> ; x=<v,...> ; u=<v,...>
    <k> ; departed=<label|-> ; arrived=<label|-> ; new_edges=<a-b,...|-> [; ref=<float>]

Initial labels are ``0..n-1``.  ``ref`` is present exactly when an agent arrives.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dyn_graph import GraphSnapshot, read_graph, write_graph
from .errors import InvalidInputError
from .opdc import OpdcParams, compute_tpi
from .open_state import OpenVector
from .scenario import Event
from .stability import TraceRecord, make_record

__all__ = [
    "TraceFormatError",
    "fmt",
    "write_trace",
    "read_trace",
    "write_events",
    "read_events",
    "EventLog",
    "write_csv",
    "FIGURE_COLUMNS",
]

TRACE_MAGIC = "# opdc trace v1"
EVENTS_MAGIC = "# opdc event log v1"


class TraceFormatError(InvalidInputError):
    """Malformed trace or event log; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None, path: str | Path | None = None):
        self.line = line
        self.path = str(path) if path is not None else None
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _floats(parts: Iterable[str]) -> np.ndarray:
    return np.asarray([float(s) for s in parts], dtype=np.float64)


# ---------------------------------------------------------------- traces


def write_trace(path: str | Path, trace: Sequence[TraceRecord], p: OpdcParams) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{TRACE_MAGIC}\nepsilon {fmt(p.epsilon)}\nalpha {fmt(p.alpha)}\nrecords {len(trace)}\n")
        prev: TraceRecord | None = None
        for rec in trace:
            fh.write(f"step {rec.k}\n")
            if prev is not None and rec.graph is prev.graph:
                fh.write("graph same\n")
            else:
                fh.write("graph\n")
                write_graph(rec.graph, fh)
            fh.write("x " + " ".join(map(fmt, rec.x.values)) + "\n")
            if prev is not None and rec.u is prev.u:
                fh.write("u same\n")
            else:
                fh.write("u " + " ".join(map(fmt, rec.u.values)) + "\n")
            prev = rec


class _Lines:
    """Line cursor that remembers 1-based positions for diagnostics."""

    def __init__(self, path: str | Path):
        self.path = path
        with open(path, encoding="ascii") as fh:
            self.lines = fh.read().split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def error(self, msg: str, line: int | None = None) -> TraceFormatError:
        return TraceFormatError(msg, line if line is not None else self.pos, self.path)

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise self.error(f"unexpected end of file, expected {what}", len(self.lines) + 1)
        self.pos += 1
        return self.lines[self.pos - 1]

    def keyed(self, key: str) -> str:
        line = self.next(key)
        head, _, rest = line.partition(" ")
        if head != key:
            raise self.error(f"expected '{key}', got {line[:40]!r}")
        return rest

    def __iter__(self):
        while True:
            yield self.next("graph data")


def read_trace(path: str | Path) -> tuple[list[TraceRecord], OpdcParams]:
    """Load a trace and recompute fixed points and derived distances."""
    cur = _Lines(path)
    if cur.next("header") != TRACE_MAGIC:
        raise cur.error("not an opdc trace file")
    try:
        params = OpdcParams(epsilon=float(cur.keyed("epsilon")), alpha=float(cur.keyed("alpha")))
        count = int(cur.keyed("records"))
    except (ValueError, InvalidInputError) as exc:
        if isinstance(exc, TraceFormatError):
            raise
        raise cur.error(f"bad header: {exc}") from exc
    if count < 1:
        raise cur.error("trace must contain at least one record")

    trace: list[TraceRecord] = []
    g: GraphSnapshot | None = None
    u: OpenVector | None = None
    xe: OpenVector | None = None
    for expected_k in range(count):
        try:
            k = int(cur.keyed("step"))
        except ValueError as exc:
            raise cur.error("bad step index") from exc
        if k != expected_k:
            raise cur.error(f"expected step {expected_k}, got {k}")
        graph_line = cur.next("graph")
        changed = False
        if graph_line == "graph same":
            if g is None:
                raise cur.error("'graph same' on the first record")
        elif graph_line == "graph":
            start = cur.pos + 1
            try:
                g = read_graph(cur)
            except InvalidInputError as exc:
                raise cur.error(f"malformed graph block starting here: {exc}", start) from exc
            changed = True
        else:
            raise cur.error(f"expected 'graph' or 'graph same', got {graph_line[:40]!r}")
        try:
            x = OpenVector(g.nodes, _floats(cur.keyed("x").split()))
        except (ValueError, InvalidInputError) as exc:
            raise cur.error(f"bad state line: {exc}") from exc
        u_line = cur.keyed("u")
        if u_line == "same":
            if u is None or not u.same_support(g.nodes):
                raise cur.error("'u same' does not fit the current node set")
        else:
            try:
                u = OpenVector(g.nodes, _floats(u_line.split()))
            except (ValueError, InvalidInputError) as exc:
                raise cur.error(f"bad reference line: {exc}") from exc
            changed = True
        if changed or xe is None:
            xe = compute_tpi(g, u, params)
        trace.append(make_record(k, g, x, u, xe))
    if cur.pos != len(cur.lines):
        raise cur.error("trailing data after the last record", cur.pos + 1)
    return trace, params


# ---------------------------------------------------------------- event logs


@dataclass(frozen=True, eq=False)
class EventLog:
    x0: OpenVector
    graph0: GraphSnapshot
    u0: OpenVector
    events: list[Event]


def _pairs(edges: Iterable[tuple[int, int]]) -> str:
    s = ",".join(f"{int(a)}-{int(b)}" for a, b in edges)
    return s or "-"


def write_events(path: str | Path, x0: OpenVector, graph0: GraphSnapshot, u0: OpenVector, events: Sequence[Event]) -> None:
    if not np.array_equal(graph0.nodes, np.arange(graph0.n)):
        raise InvalidInputError("initial labels must be 0..n-1")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(EVENTS_MAGIC + "\n")
        fh.write(
            f"init ; n={graph0.n} ; edges={_pairs(graph0.edges)} ; "
            f"x={','.join(map(fmt, x0.values))} ; u={','.join(map(fmt, u0.values))}\n"
        )
        for ev in events:
            dep = "-" if ev.departed is None else str(ev.departed)
            arr = "-" if ev.arrived is None else str(ev.arrived)
            line = f"{ev.k} ; departed={dep} ; arrived={arr} ; new_edges={_pairs(ev.new_edges)}"
            if ev.ref is not None:
                line += f" ; ref={fmt(ev.ref)}"
            fh.write(line + "\n")


def _fields(line: str, lineno: int, path) -> tuple[str, dict[str, str]]:
    parts = [p.strip() for p in line.split(";")]
    out: dict[str, str] = {}
    for part in parts[1:]:
        key, sep, val = part.partition("=")
        if not sep or key in out:
            raise TraceFormatError(f"bad field {part[:40]!r}", lineno, path)
        out[key] = val
    return parts[0], out


def _parse_pairs(text: str) -> list[tuple[int, int]]:
    if text == "-":
        return []
    out = []
    for item in text.split(","):
        a, b = item.split("-")
        out.append((int(a), int(b)))
    return out


def read_events(path: str | Path) -> EventLog:
    """Parse an event log; every problem is reported with its line number."""
    with open(path, encoding="ascii") as fh:
        raw = fh.read()
    lines = raw.split("\n")
    if not raw.endswith("\n"):
        # the last line was cut mid-write
        raise TraceFormatError("incomplete last line (log truncated?)", len(lines), path)
    lines.pop()
    if not lines or lines[0] != EVENTS_MAGIC:
        raise TraceFormatError("not an opdc event log", 1, path)
    if len(lines) < 2:
        raise TraceFormatError("missing init line", 2, path)
    head, f = _fields(lines[1], 2, path)
    if head != "init" or set(f) != {"n", "edges", "x", "u"}:
        raise TraceFormatError("malformed init line", 2, path)
    try:
        n = int(f["n"])
        g0 = GraphSnapshot.from_edges(range(n), _parse_pairs(f["edges"]))
        x0 = OpenVector(g0.nodes, _floats(f["x"].split(",")))
        u0 = OpenVector(g0.nodes, _floats(f["u"].split(",")))
    except (ValueError, InvalidInputError) as exc:
        raise TraceFormatError(f"malformed init line: {exc}", 2, path) from exc

    events = []
    for idx, line in enumerate(lines[2:]):
        lineno = idx + 3
        head, f = _fields(line, lineno, path)
        try:
            k = int(head)
        except ValueError as exc:
            raise TraceFormatError(f"bad step index {head[:20]!r}", lineno, path) from exc
        if k != idx:
            raise TraceFormatError(f"expected step {idx}, got {k}", lineno, path)
        required = {"departed", "arrived", "new_edges"}
        if not required <= set(f) or set(f) - required - {"ref"}:
            raise TraceFormatError("missing or unknown fields", lineno, path)
        try:
            dep = None if f["departed"] == "-" else int(f["departed"])
            arr = None if f["arrived"] == "-" else int(f["arrived"])
            edges = tuple(_parse_pairs(f["new_edges"]))
            ref = float(f["ref"]) if "ref" in f else None
        except ValueError as exc:
            raise TraceFormatError(f"bad value: {exc}", lineno, path) from exc
        if (arr is None) != (ref is None):
            raise TraceFormatError("ref must be given exactly for arrivals", lineno, path)
        if arr is None and edges:
            raise TraceFormatError("new edges without an arrival", lineno, path)
        events.append(Event(k, dep, arr, edges, ref))
    return EventLog(x0, g0, u0, events)


# ---------------------------------------------------------------- figures

# column name -> TraceRecord attribute
FIGURE_COLUMNS = {
    "n_agents": "n",
    "state_to_tpi": "dist_state_tpi",
    "tpi_to_mean": "dist_tpi_mean",
    "state_to_mean": "dist_state_mean",
}


def write_csv(path: str | Path, trace: Sequence[TraceRecord], column: str) -> None:
    """One row per record: ``k`` then the requested normalized quantity."""
    attr = FIGURE_COLUMNS[column]
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", column])
        for rec in trace:
            val = getattr(rec, attr)
            w.writerow([rec.k, val if isinstance(val, int) else fmt(val)])
