"""Seeded join/leave scenarios and their simulation.

Randomness comes from numpy's Philox-4x64 counter-based generator.  The
64-bit seed is expanded with ``SeedSequence`` and spawned into five
independent sub-streams, in this order: topology, departures, arrivals,
references, states.  Per step the draws are:

* departures: one uniform; if it is below ``leave_prob`` and the
  population may shrink, one integer picks the departing agent
  (uniform over the current agents in ascending label order);
* arrivals: one uniform, compared against ``join_prob``;
* for an arrival, topology gives one uniform per surviving agent (ascending
  labels) for its edges and references gives one uniform for its reference.

Initial states come from the states stream, initial references from the
references stream, the initial graph from the topology stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .dyn_graph import GraphSnapshot, erdos_renyi
from .errors import InvalidInputError
from .opdc import OpdcParams, StepInput, compute_tpi, step
from .open_state import OpenVector
from .stability import TraceRecord, make_record

__all__ = [
    "ScenarioConfig",
    "Event",
    "GeneratedScenario",
    "make_streams",
    "generate",
    "inputs_from_events",
    "simulate",
    "run",
    "fixed_membership",
    "config_from_mapping",
]

STREAM_NAMES = ("topology", "departures", "arrivals", "references", "states")


@dataclass(frozen=True)
class ScenarioConfig:
    n0: int = 200
    edge_prob: float = 0.05
    leave_prob: float = 0.06
    join_prob: float = 0.1
    ref_low: float = 0.0
    ref_high: float = 1.0
    state_low: float = -5000.0
    state_high: float = 5000.0
    horizon: int = 2000
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n0", "horizon", "seed"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)):
                raise InvalidInputError(f"{name} must be an integer, got {val!r}")
        if self.n0 < 1:
            raise InvalidInputError("n0 must be at least 1")
        if self.horizon < 0:
            raise InvalidInputError("horizon must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        for name in ("edge_prob", "leave_prob", "join_prob", "ref_low", "ref_high", "state_low", "state_high"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
                raise InvalidInputError(f"{name} must be a finite number, got {val!r}")
        for name in ("edge_prob", "leave_prob", "join_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if self.ref_low > self.ref_high:
            raise InvalidInputError("ref_low exceeds ref_high")
        if self.state_low > self.state_high:
            raise InvalidInputError("state_low exceeds state_high")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Event:
    """Membership change of one step; ``ref`` is the arrival's reference."""

    k: int
    departed: Optional[int] = None
    arrived: Optional[int] = None
    new_edges: tuple[tuple[int, int], ...] = ()
    ref: Optional[float] = None


@dataclass(frozen=True, eq=False)
class GeneratedScenario:
    x0: OpenVector
    graph0: GraphSnapshot
    u0: OpenVector
    inputs: list[StepInput]
    events: list[Event]


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.Generator(np.random.Philox(child)) for name, child in zip(STREAM_NAMES, children)}


def _apply_event(
    g: GraphSnapshot, u: OpenVector, ev: Event
) -> tuple[GraphSnapshot, OpenVector]:
    if ev.departed is None and ev.arrived is None:
        return g, u
    if ev.departed is not None:
        if ev.departed not in g:
            raise InvalidInputError(f"step {ev.k}: departing agent {ev.departed} is not present")
        g = g.without_node(ev.departed)
    if ev.arrived is not None:
        if ev.ref is None:
            raise InvalidInputError(f"step {ev.k}: arrival without reference")
        nbrs = []
        for a, b in ev.new_edges:
            if ev.arrived not in (a, b):
                raise InvalidInputError(f"step {ev.k}: new edge ({a}, {b}) does not touch the arrival")
            nbrs.append(b if a == ev.arrived else a)
        g = g.with_node(ev.arrived, nbrs)
    # references are constant over an agent's lifetime; an arrival takes the last slot
    mapping_vals = u.values[np.isin(u.labels, g.nodes, assume_unique=True)]
    if ev.arrived is not None:
        mapping_vals = np.append(mapping_vals, ev.ref)
    return g, OpenVector(g.nodes, mapping_vals)


def inputs_from_events(graph0: GraphSnapshot, u0: OpenVector, events: Sequence[Event]) -> list[StepInput]:
    """Rebuild the step inputs of a scenario from its event list."""
    inputs = []
    g, u = graph0, u0
    top = int(graph0.nodes[-1])
    for ev in events:
        if ev.arrived is not None:
            if ev.arrived <= top:
                raise InvalidInputError(f"step {ev.k}: arrival label {ev.arrived} is not fresh")
            top = ev.arrived
        g_next, u_next = _apply_event(g, u, ev)
        if g_next.n < 1:
            raise InvalidInputError(f"step {ev.k}: population would become empty")
        inputs.append(StepInput(g, u, g_next, u_next))
        g, u = g_next, u_next
    return inputs


def generate(config: ScenarioConfig) -> GeneratedScenario:
    """Draw the initial network and the join/leave process for ``config``."""
    rs = make_streams(config.seed)
    g = erdos_renyi(config.n0, config.edge_prob, rs["topology"])
    x0 = OpenVector(g.nodes, rs["states"].uniform(config.state_low, config.state_high, config.n0))
    u0 = OpenVector(g.nodes, rs["references"].uniform(config.ref_low, config.ref_high, config.n0))
    next_label = config.n0

    events = []
    n = g.n
    labels = g.nodes
    for k in range(config.horizon):
        leave = rs["departures"].random() < config.leave_prob
        join = rs["arrivals"].random() < config.join_prob
        departed = arrived = ref = None
        new_edges: tuple[tuple[int, int], ...] = ()
        if leave and (n >= 2 or join):
            departed = int(labels[rs["departures"].integers(n)])
        if join:
            arrived = next_label
            next_label += 1
            survivors = labels if departed is None else labels[labels != departed]
            wire = rs["topology"].random(survivors.size) < config.edge_prob
            new_edges = tuple((int(w), arrived) for w in survivors[wire])
            ref = float(rs["references"].uniform(config.ref_low, config.ref_high))
        ev = Event(k, departed, arrived, new_edges, ref)
        events.append(ev)
        if departed is not None:
            labels = labels[labels != departed]
        if arrived is not None:
            labels = np.append(labels, arrived)
        n = labels.size
    return GeneratedScenario(x0, g, u0, inputs_from_events(g, u0, events), events)


def simulate(
    x0: OpenVector, graph0: GraphSnapshot, u0: OpenVector, inputs: Sequence[StepInput], p: OpdcParams
) -> list[TraceRecord]:
    """Run the engine over ``inputs``; returns ``len(inputs) + 1`` records."""
    g, u = graph0, u0
    x = x0
    xe = compute_tpi(g, u, p)
    trace = [make_record(0, g, x, u, xe)]
    for k, inp in enumerate(inputs):
        if inp.g_now is not g or inp.u_now is not u:
            if not (inp.g_now == g and inp.u_now == u):
                raise InvalidInputError(f"step {k}: input does not continue the previous step")
        x = step(x, inp, p)
        if inp.g_next is not g or inp.u_next is not u:
            g, u = inp.g_next, inp.u_next
            xe = compute_tpi(g, u, p)
        trace.append(make_record(k + 1, g, x, u, xe))
    return trace


def run(config: ScenarioConfig, p: OpdcParams) -> list[TraceRecord]:
    sc = generate(config)
    return simulate(sc.x0, sc.graph0, sc.u0, sc.inputs, p)


def fixed_membership(config: ScenarioConfig) -> ScenarioConfig:
    """Same config with joins and departures switched off."""
    return replace(config, leave_prob=0.0, join_prob=0.0)


def config_from_mapping(data: Mapping[str, Any]) -> tuple[ScenarioConfig, OpdcParams]:
    """Strict parse of a flat mapping holding every config and gain field.

    Unknown or missing keys raise InvalidInputError.
    """
    if not isinstance(data, Mapping):
        raise InvalidInputError("config must be a JSON object")
    scen_keys = set(ScenarioConfig.field_names())
    param_keys = {"epsilon", "alpha"}
    unknown = sorted(set(data) - scen_keys - param_keys)
    if unknown:
        raise InvalidInputError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted((scen_keys | param_keys) - set(data))
    if missing:
        raise InvalidInputError(f"missing config keys: {', '.join(missing)}")
    for key in ("epsilon", "alpha"):
        if isinstance(data[key], bool) or not isinstance(data[key], (int, float)):
            raise InvalidInputError(f"{key} must be a number")
    config = ScenarioConfig(**{k: data[k] for k in scen_keys})
    return config, OpdcParams(epsilon=data["epsilon"], alpha=data["alpha"])
