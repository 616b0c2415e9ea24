"""ISCAS85 ``.bench`` netlists: parsing, canonical serialization, Boolean
evaluation and expansion into static-CMOS transistor circuits.

Every pull-down network returns to the virtual ground rail ``VGNR`` rather
than ``GND`` so a footer switch can be attached afterwards without touching
the logic.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources

import numpy as np

from .circuit import GND, RESERVED_NODES, VDD, VGNR, Capacitor, Circuit, Mosfet, VoltageSource
from .device_models import MosPair


class NetlistError(ValueError):
    pass


class BenchSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DuplicateDriverError(NetlistError):
    pass


class UndefinedSignalError(NetlistError):
    pass


class CycleError(NetlistError):
    pass


class UnsupportedGateError(NetlistError):
    pass


class SequentialElementError(UnsupportedGateError):
    pass


class GateKind(str, enum.Enum):
    AND = "AND"
    NAND = "NAND"
    OR = "OR"
    NOR = "NOR"
    NOT = "NOT"
    BUFF = "BUFF"
    XOR = "XOR"
    XNOR = "XNOR"


_ALIASES = {"BUF": GateKind.BUFF, "INV": GateKind.NOT}
_SEQUENTIAL = {"DFF", "DFFR", "LATCH"}


@dataclass(frozen=True)
class Gate:
    output: str
    kind: GateKind
    fanins: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "fanins", tuple(self.fanins))
        unary = self.kind in (GateKind.NOT, GateKind.BUFF)
        if unary and len(self.fanins) != 1:
            raise NetlistError(f"{self.kind.value} gate {self.output!r} needs exactly one fanin")
        if not unary and len(self.fanins) < 2:
            raise NetlistError(f"{self.kind.value} gate {self.output!r} needs at least two fanins")


@dataclass(frozen=True)
class Netlist:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    gates: tuple[Gate, ...]

    def __post_init__(self):
        for f in ("inputs", "outputs", "gates"):
            object.__setattr__(self, f, tuple(getattr(self, f)))
        _validate(self)

    @cached_property
    def drivers(self) -> dict[str, Gate]:
        return {g.output: g for g in self.gates}

    @cached_property
    def topo_order(self) -> tuple[Gate, ...]:
        return _topological(self)

    @property
    def signals(self) -> tuple[str, ...]:
        return self.inputs + tuple(g.output for g in self.gates)


def _topological(nl: Netlist) -> tuple[Gate, ...]:
    drivers = {g.output: g for g in nl.gates}
    state: dict[str, int] = {}
    order: list[Gate] = []
    for root in nl.gates:
        if state.get(root.output) == 2:
            continue
        # iterative DFS; state 1 = on the stack, 2 = finished
        stack = [(root, 0)]
        state[root.output] = 1
        while stack:
            g, i = stack.pop()
            if i < len(g.fanins):
                stack.append((g, i + 1))
                src = drivers.get(g.fanins[i])
                if src is None:
                    continue
                s = state.get(src.output, 0)
                if s == 1:
                    raise CycleError(f"combinational cycle through {src.output!r}")
                if s == 0:
                    state[src.output] = 1
                    stack.append((src, 0))
            else:
                state[g.output] = 2
                order.append(g)
    return tuple(order)


def _validate(nl: Netlist):
    bad = RESERVED_NODES.intersection(nl.signals)
    if bad:
        raise NetlistError(f"signal names {sorted(bad)} are reserved for power rails")
    if len(set(nl.inputs)) != len(nl.inputs):
        raise DuplicateDriverError("input declared more than once")
    if len(set(nl.outputs)) != len(nl.outputs):
        raise NetlistError("output declared more than once")
    driven = set(nl.inputs)
    for g in nl.gates:
        if g.output in driven:
            raise DuplicateDriverError(f"signal {g.output!r} has more than one driver")
        driven.add(g.output)
    # cycles are reported before undefined fanins so a self-loop is named as such
    _topological(nl)
    for g in nl.gates:
        for f in g.fanins:
            if f not in driven:
                raise UndefinedSignalError(f"gate {g.output!r} reads undefined signal {f!r}")
    for o in nl.outputs:
        if o not in driven:
            raise UndefinedSignalError(f"output {o!r} is not driven")


# --------------------------------------------------------------------------
# parsing and serialization

_IDENT = r"[A-Za-z0-9_.\[\]$]+"
_DECL_RE = re.compile(rf"\s*(INPUT|OUTPUT)\s*\(\s*({_IDENT})\s*\)\s*$", re.IGNORECASE)
_GATE_RE = re.compile(rf"\s*({_IDENT})\s*=\s*([A-Za-z]+)\s*\((.*)\)\s*$")
_IDENT_RE = re.compile(rf"\s*({_IDENT})\s*$")


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_bench(text: str, name: str | None = None) -> Netlist:
    """Parse ``.bench`` text. The netlist name defaults to the first comment
    line (``# c17``) or ``"netlist"``."""
    inputs: list[str] = []
    outputs: list[str] = []
    gates: list[Gate] = []
    header = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if header is None and stripped.startswith("#") and not (inputs or outputs or gates):
            header = stripped[1:].strip() or None
        body = _strip_comment(raw)
        if not body.strip():
            continue
        m = _DECL_RE.match(body)
        if m:
            (inputs if m.group(1).upper() == "INPUT" else outputs).append(m.group(2))
            continue
        m = _GATE_RE.match(body)
        if not m:
            col = len(body) - len(body.lstrip()) + 1
            raise BenchSyntaxError(f"cannot parse {body.strip()!r}", lineno, col)
        kind_txt = m.group(2).upper()
        if kind_txt in _SEQUENTIAL:
            raise SequentialElementError(
                f"line {lineno}: sequential element {m.group(2)} is not supported")
        kind = _ALIASES.get(kind_txt)
        if kind is None:
            try:
                kind = GateKind(kind_txt)
            except ValueError:
                raise UnsupportedGateError(
                    f"line {lineno}, column {m.start(2) + 1}: unknown gate kind {m.group(2)!r}") from None
        fanins = []
        offset = m.start(3)
        for piece in m.group(3).split(","):
            im = _IDENT_RE.match(piece)
            if not im:
                lead = len(piece) - len(piece.lstrip())
                raise BenchSyntaxError(f"bad fanin {piece.strip()!r}", lineno, offset + lead + 1)
            fanins.append(im.group(1))
            offset += len(piece) + 1
        try:
            gates.append(Gate(m.group(1), kind, tuple(fanins)))
        except NetlistError as exc:
            raise BenchSyntaxError(str(exc), lineno, m.start(2) + 1) from None
    return Netlist(name or header or "netlist", tuple(inputs), tuple(outputs), tuple(gates))


def serialize_bench(nl: Netlist) -> str:
    """Canonical text form; ``parse_bench(serialize_bench(nl)) == nl``."""
    lines = [f"# {nl.name}", ""]
    lines += [f"INPUT({s})" for s in nl.inputs]
    lines.append("")
    lines += [f"OUTPUT({s})" for s in nl.outputs]
    lines.append("")
    lines += [f"{g.output} = {g.kind.value}({', '.join(g.fanins)})" for g in nl.gates]
    return "\n".join(lines) + "\n"


def read_bench(path) -> Netlist:
    """Parse a ``.bench`` file; error messages are prefixed with its path."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_bench(text)
    except NetlistError as exc:
        exc.args = (f"{path}: {exc}",)
        raise


def corpus_names() -> list[str]:
    root = resources.files("gnrpg") / "benches"
    return sorted(p.name[:-6] for p in root.iterdir() if p.name.endswith(".bench"))


def load_bench(name: str) -> Netlist:
    """Load a netlist from the bundled corpus, or build the inverter-chain fixture
    for names of the form ``invchain`` / ``invchain<C>x<L>``."""
    m = re.fullmatch(r"invchain(?:(\d+)x(\d+))?", name)
    if m:
        return inverter_chain_netlist(*(int(x) for x in m.groups() if x is not None))
    path = resources.files("gnrpg") / "benches" / f"{name}.bench"
    if not path.is_file():
        raise NetlistError(f"no bundled benchmark named {name!r}")
    return parse_bench(path.read_text(encoding="utf-8"))


def inverter_chain_netlist(chains: int = 20, length: int = 20) -> Netlist:
    """``chains`` independent chains of ``length`` inverters each."""
    inputs = tuple(f"in{i}" for i in range(chains))
    gates = []
    outputs = []
    for i in range(chains):
        prev = inputs[i]
        for j in range(length):
            out = f"c{i}_{j}"
            gates.append(Gate(out, GateKind.NOT, (prev,)))
            prev = out
        outputs.append(prev)
    name = "invchain" if (chains, length) == (20, 20) else f"invchain{chains}x{length}"
    return Netlist(name, inputs, tuple(outputs), tuple(gates))


# --------------------------------------------------------------------------
# Boolean evaluation


def _apply(kind: GateKind, vals):
    if kind in (GateKind.NOT, GateKind.BUFF):
        v = vals[0]
        return np.logical_not(v) if kind is GateKind.NOT else np.asarray(v, bool)
    if kind in (GateKind.AND, GateKind.NAND):
        v = np.logical_and.reduce(vals)
    elif kind in (GateKind.OR, GateKind.NOR):
        v = np.logical_or.reduce(vals)
    else:
        v = np.logical_xor.reduce(vals)
    return np.logical_not(v) if kind in (GateKind.NAND, GateKind.NOR, GateKind.XNOR) else v


def evaluate(nl: Netlist, assignment) -> dict[str, np.ndarray]:
    """Evaluate every signal. ``assignment`` maps each input to a bool or a
    bool array (vectors are evaluated in parallel)."""
    missing = set(nl.inputs) - set(assignment)
    if missing:
        raise UndefinedSignalError(f"no value for inputs {sorted(missing)}")
    vals = {s: np.asarray(assignment[s], dtype=bool) for s in nl.inputs}
    for g in nl.topo_order:
        vals[g.output] = _apply(g.kind, [vals[f] for f in g.fanins])
    return vals


def evaluate_outputs(nl: Netlist, bits) -> tuple[bool, ...]:
    vals = evaluate(nl, dict(zip(nl.inputs, (bool(b) for b in bits))))
    return tuple(bool(vals[o]) for o in nl.outputs)


# --------------------------------------------------------------------------
# transistor expansion

# devices per gate: NAND/NOR-k 2k; AND/OR adds an inverter; XOR-k cascades
# k-1 four-NAND2 XOR2 cells; XNOR adds an inverter.
def gate_device_count(kind: GateKind, k: int) -> int:
    kind = GateKind(kind)
    return {
        GateKind.NOT: 2,
        GateKind.BUFF: 4,
        GateKind.NAND: 2 * k,
        GateKind.NOR: 2 * k,
        GateKind.AND: 2 * k + 2,
        GateKind.OR: 2 * k + 2,
        GateKind.XOR: 16 * (k - 1),
        GateKind.XNOR: 16 * (k - 1) + 2,
    }[kind]


class _Expander:
    def __init__(self, mos: MosPair, c_load: float):
        self.mos = mos
        self.c_load = c_load
        self.devices: list = []
        self.count = 0

    def _fet(self, pol, d, g, s):
        self.count += 1
        if pol == "n":
            self.devices.append(Mosfet(f"MN{self.count}", d, g, s, GND, self.mos.nmos))
        else:
            self.devices.append(Mosfet(f"MP{self.count}", d, g, s, VDD, self.mos.pmos))

    def _load(self, node):
        if self.c_load > 0:
            self.devices.append(Capacitor(f"CL.{node}", node, GND, self.c_load))

    def _stack(self, pol, top, bottom, gates, tag):
        nodes = [top] + [f"{tag}~{pol}{i}" for i in range(1, len(gates))] + [bottom]
        for i, g in enumerate(gates):
            self._fet(pol, nodes[i], g, nodes[i + 1])

    def nand(self, out, ins):
        for a in ins:
            self._fet("p", out, a, VDD)
        self._stack("n", out, VGNR, ins, out)
        self._load(out)

    def nor(self, out, ins):
        self._stack("p", out, VDD, ins, out)
        for a in ins:
            self._fet("n", out, a, VGNR)
        self._load(out)

    def inv(self, out, a):
        self._fet("p", out, a, VDD)
        self._fet("n", out, a, VGNR)
        self._load(out)

    def xor2(self, out, a, b):
        m, p, q = f"{out}~m", f"{out}~p", f"{out}~q"
        self.nand(m, (a, b))
        self.nand(p, (a, m))
        self.nand(q, (b, m))
        self.nand(out, (p, q))

    def gate(self, g: Gate):
        out, ins, k = g.output, g.fanins, g.kind
        if k is GateKind.NOT:
            self.inv(out, ins[0])
        elif k is GateKind.BUFF:
            self.inv(f"{out}~b", ins[0])
            self.inv(out, f"{out}~b")
        elif k is GateKind.NAND:
            self.nand(out, ins)
        elif k is GateKind.NOR:
            self.nor(out, ins)
        elif k is GateKind.AND:
            self.nand(f"{out}~i", ins)
            self.inv(out, f"{out}~i")
        elif k is GateKind.OR:
            self.nor(f"{out}~i", ins)
            self.inv(out, f"{out}~i")
        elif k in (GateKind.XOR, GateKind.XNOR):
            final = out if k is GateKind.XOR else f"{out}~i"
            acc = ins[0]
            for j, b in enumerate(ins[1:], start=1):
                dst = final if j == len(ins) - 1 else f"{out}~x{j}"
                self.xor2(dst, acc, b)
                acc = dst
            if k is GateKind.XNOR:
                self.inv(out, final)
        else:  # pragma: no cover - GateKind is closed
            raise UnsupportedGateError(f"cannot expand gate kind {k}")


def expand_to_transistors(nl: Netlist, mos: MosPair | None = None, c_load: float = 0.1e-15,
                          vcc: float = 0.7) -> Circuit:
    """Static-CMOS expansion. Primary inputs become grounded sources at 0 V
    and ``VDD`` a source at ``vcc``; ``VGNR`` is left for a footer."""
    mos = mos or MosPair.default()
    ex = _Expander(mos, c_load)
    for g in nl.gates:
        ex.gate(g)
    sources = [VoltageSource("V.VDD", VDD, vcc)]
    sources += [VoltageSource(f"V.{s}", s, 0.0) for s in nl.inputs]
    return Circuit(nl.name, tuple(sources + ex.devices), nodes=(VDD, VGNR), vcc=vcc,
                   inputs=nl.inputs, outputs=nl.outputs)


def total_nmos_width(c: Circuit) -> float:
    """Summed N-channel width in nm, power switches excluded."""
    return float(sum(d.params.width * d.multiplier for d in c.devices
                     if isinstance(d, Mosfet) and d.params.polarity.value == "N"
                     and not d.is_switch))
