"""Flat transistor-level circuit description shared by the expander, the
footer builder and the simulator.

A :class:`Circuit` is an immutable bag of devices over named nodes. All
voltage sources are grounded (one node, one value), which is all the
power-gating setups here need and keeps nodal analysis free of branch
currents.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

from .device_models import GnrDevice, MosParams, Polarity

VDD = "VDD"
GND = "GND"
VGNR = "VGNR"
RESERVED_NODES = frozenset({VDD, GND, VGNR})


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Mosfet:
    name: str
    drain: str
    gate: str
    source: str
    bulk: str
    params: MosParams
    multiplier: float = 1.0
    is_switch: bool = False

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.drain, self.gate, self.source, self.bulk)


@dataclass(frozen=True)
class Gnrfet:
    name: str
    drain: str
    gate: str
    source: str
    sub: str
    device: GnrDevice
    is_switch: bool = True

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.drain, self.gate, self.source, self.sub)


@dataclass(frozen=True)
class Capacitor:
    name: str
    a: str
    b: str
    value: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    value: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.a, self.b)


@dataclass(frozen=True)
class Switch:
    """Linear switch between ``a`` and ``b``: resistance ``r_on`` while
    V(ctrl) exceeds ``v_threshold``, ``r_off`` otherwise. Intended for
    control nodes held by sources, where it stays piecewise linear."""

    name: str
    a: str
    b: str
    ctrl: str
    r_on: float
    r_off: float = 1e15
    v_threshold: float = 0.5

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.a, self.b, self.ctrl)


@dataclass(frozen=True)
class VoltageSource:
    """Ideal source holding ``node`` at ``value`` volts against ground."""

    name: str
    node: str
    value: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.node,)


@dataclass(frozen=True)
class CurrentSource:
    """Constant current ``value`` flowing from node ``a`` through the source into ``b``."""

    name: str
    a: str
    b: str
    value: float

    @property
    def terminals(self) -> tuple[str, ...]:
        return (self.a, self.b)


Device = Union[Mosfet, Gnrfet, Capacitor, Resistor, Switch, VoltageSource, CurrentSource]


@dataclass(frozen=True)
class Circuit:
    """Devices over named nodes.

    ``inputs``/``outputs`` name the primary logic nodes, ``vcc`` is the
    module supply and ``mode_controls`` maps a power mode name to the
    control-node voltages that realise it (empty without a footer).
    """

    name: str
    devices: tuple[Device, ...]
    nodes: tuple[str, ...] = ()
    ground_ref: str = GND
    vcc: float = 0.7
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    footer: str | None = None
    mode_controls: tuple[tuple[str, tuple[tuple[str, float], ...]], ...] = ()
    notes: tuple[tuple[str, object], ...] = field(default=())

    def __post_init__(self):
        devices = tuple(self.devices)
        object.__setattr__(self, "devices", devices)
        seen = []
        known = set()
        for n in (self.ground_ref, *self.nodes):
            if n not in known:
                known.add(n)
                seen.append(n)
        for d in devices:
            for n in d.terminals:
                if n not in known:
                    known.add(n)
                    seen.append(n)
        object.__setattr__(self, "nodes", tuple(seen))
        names = [d.name for d in devices]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise CircuitError(f"duplicate device names: {dup[:5]}")
        driven = {}
        for d in devices:
            if isinstance(d, VoltageSource):
                if d.node == self.ground_ref:
                    raise CircuitError("a voltage source cannot drive the ground reference")
                if d.node in driven:
                    raise CircuitError(f"node {d.node!r} driven by two voltage sources")
                driven[d.node] = d

    # -- queries

    def sources(self) -> dict[str, VoltageSource]:
        return {d.node: d for d in self.devices if isinstance(d, VoltageSource)}

    def of_type(self, kind) -> list:
        return [d for d in self.devices if isinstance(d, kind)]

    def controls_for(self, mode: str) -> dict[str, float]:
        for m, pairs in self.mode_controls:
            if m == mode:
                return dict(pairs)
        raise CircuitError(f"circuit {self.name!r} has no controls for mode {mode!r}")

    @property
    def modes(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.mode_controls)

    def note(self, key: str, default=None):
        return dict(self.notes).get(key, default)

    # -- derivation

    def with_devices(self, extra, **changes) -> Circuit:
        return replace(self, devices=self.devices + tuple(extra), **changes)

    def with_sources(self, values: dict[str, float]) -> Circuit:
        """Copy with the named source nodes set to new values."""
        missing = set(values) - set(self.sources())
        if missing:
            raise CircuitError(f"no voltage source on nodes {sorted(missing)}")
        devs = tuple(replace(d, value=float(values[d.node]))
                     if isinstance(d, VoltageSource) and d.node in values else d
                     for d in self.devices)
        return replace(self, devices=devs)


def nmos_devices(c: Circuit, include_switches: bool = False) -> list[Mosfet]:
    return [d for d in c.devices if isinstance(d, Mosfet) and d.params.polarity is Polarity.N
            and (include_switches or not d.is_switch)]
