"""Four-valued cycle simulation of flat LUT+DFF netlists.

Values are small ints: 0, 1, X (unknown), Z (high impedance). Every signal
conceptually starts at X "before time", so the event list opens with whatever
each signal first resolves to at time step 0; nets with no driver at all go to
Z at step 0 and stay there. One time step = one clock cycle: inputs apply,
combinational logic settles by delta-cycle sweeps, events flush, then DFFs
capture for the next step. The clock itself is implicit (cycle-based model)
and never appears in stimuli or traces.
"""

from __future__ import annotations

import json
import random
from bisect import bisect_right
from dataclasses import dataclass, field

from .netlist import Netlist, Module, clock_net

X = 2
Z = 3

VALUE_CHARS = "01xz"


class SimulationError(Exception):
    """Bad simulation input (unknown signal, short stimulus, ...)."""


class OscillationError(SimulationError):
    """Combinational logic failed to settle within the iteration cap."""

    def __init__(self, time_step, nets):
        self.time_step = time_step
        self.nets = sorted(nets)
        shown = ", ".join(self.nets[:8]) + ("..." if len(self.nets) > 8 else "")
        super().__init__(
            f"combinational logic did not settle at time step {time_step}; "
            f"oscillating nets: {shown}"
        )


def lut_eval(init: int, addr) -> int:
    """Evaluate a LUT truth table on four-valued address lines.

    ``addr[0]`` is the least significant address bit. With any line at X or Z
    the result is the common value of all reachable table entries, or X when
    they disagree.
    """
    k = len(addr)
    if k < 1 or k > 6:
        raise ValueError(f"address width {k} out of range 1..6")
    if not 0 <= init < (1 << (1 << k)):
        raise ValueError(f"INIT value out of range for {1 << k} entries")
    return _lut_eval(init, addr)


def _lut_eval(init, addr):
    base = 0
    unknown = []
    for i, v in enumerate(addr):
        if v == 1:
            base |= 1 << i
        elif v != 0:
            unknown.append(i)
    if not unknown:
        return (init >> base) & 1
    first = None
    for m in range(1 << len(unknown)):
        idx = base
        for j, pos in enumerate(unknown):
            if (m >> j) & 1:
                idx |= 1 << pos
        bit = (init >> idx) & 1
        if first is None:
            first = bit
        elif bit != first:
            return X
    return first


@dataclass
class Stimulus:
    """Per-port input vector sequences, one int per time step (bit i of the
    value drives ``port[i]``). Generated sequences note their seed."""
    ports: dict
    length: int
    seed: int | None = None

    def __post_init__(self):
        for name, seq in self.ports.items():
            if len(seq) != self.length:
                raise SimulationError(
                    f"stimulus for {name!r} has {len(seq)} steps, expected {self.length}"
                )

    def to_json(self):
        return json.dumps(
            {"seed": self.seed, "length": self.length, "ports": self.ports},
            indent=2, sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(ports=d["ports"], length=d["length"], seed=d.get("seed"))


def random_stimulus(seed, widths, cycles, reset=None):
    """Uniform random stimulus, deterministic in ``seed``.

    ``widths`` maps port name to bit width. Draws are cycle-major over sorted
    port names, so a longer run with the same seed extends a shorter one
    step-for-step. ``reset=(port, n, active)`` pins the named port to
    ``active`` for the first n steps and its complement afterwards (its random
    draws are still consumed, keeping other ports' sequences stable).
    """
    rng = random.Random(seed)
    ports = {name: [] for name in widths}
    order = sorted(widths)
    for _ in range(cycles):
        for name in order:
            ports[name].append(rng.getrandbits(widths[name]) if widths[name] else 0)
    if reset is not None:
        rport, rcycles, active = reset
        if rport not in ports:
            raise SimulationError(f"reset port {rport!r} not among stimulus ports")
        if widths[rport] != 1:
            raise SimulationError(f"reset port {rport!r} must be 1 bit wide")
        ports[rport] = [
            active if t < rcycles else 1 - active for t in range(cycles)
        ]
    return Stimulus(ports=ports, length=cycles, seed=seed)


@dataclass
class ReplaySequence:
    """Exact input sequence (list of per-step dicts: port name -> vector value
    or bit name -> 0/1) with an optional initial DFF state (q net -> 0/1).
    Ports absent from a step's dict are driven to 0."""
    inputs: list
    initial_state: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {"inputs": self.inputs, "initial_state": self.initial_state},
            indent=2, sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(inputs=d["inputs"], initial_state=d.get("initial_state", {}))


@dataclass
class EventTrace:
    """Minimal event list: (time_step, signal, new_value) sorted by time, plus
    the table of traceable signals. No two consecutive events on one signal
    carry the same value."""
    signals: list
    events: list
    length: int

    def __post_init__(self):
        self._index = None

    def per_signal(self):
        if self._index is None:
            idx = {s: [] for s in self.signals}
            for t, sig, v in self.events:
                idx[sig].append((t, v))
            self._index = idx
        return self._index

    def value_at(self, signal, t):
        """Value of ``signal`` at time step t (X before its first event)."""
        seq = self.per_signal()[signal]
        pos = bisect_right(seq, (t, 4)) - 1
        return seq[pos][1] if pos >= 0 else X

    def final_value(self, signal):
        seq = self.per_signal()[signal]
        return seq[-1][1] if seq else X

    def values_at(self, t):
        return {s: self.value_at(s, t) for s in self.signals}


# ---------------------------------------------------------------------------
# engine

class _Compiled:
    """Per-netlist immutable tables; simulation state lives in the run."""

    def __init__(self, n: Netlist):
        if not n.is_flat:
            raise SimulationError("netlist must be flattened before simulation")
        mod = n.top_module
        self.mod = mod
        self.clock = clock_net(mod)
        self.signals = [s for s in mod.signals() if s != self.clock]
        sigset = set(self.signals)
        self.comb = [c for c in mod.cells if c.kind != "DFF"]
        self.dffs = [c for c in mod.cells if c.kind == "DFF"]
        for c in mod.cells:
            for pin, sig in c.pins.items():
                if sig not in sigset and sig != self.clock:
                    raise SimulationError(f"cell {c.name!r} pin {pin} references undeclared {sig!r}")
        self.inputs = [b for b in mod.input_bits() if b != self.clock]
        driven = {c.output for c in mod.cells} | set(mod.input_bits())
        self.undriven = sorted(sigset - driven)
        # fanout: signal -> indices into self.comb
        self.fanout = {}
        for ci, c in enumerate(self.comb):
            for sig in (c.address_lines() if c.is_lut else []):
                self.fanout.setdefault(sig, []).append(ci)
        self.rank = self._topo_rank()
        self.cap = 10 * max(1, len(self.comb))
        # input port bit map: port name -> list of bit signal names (LSB first)
        self.port_bits = {}
        for p in mod.ports:
            if p.direction == "input" and p.name != self.clock:
                self.port_bits[p.name] = p.bits()

    def _topo_rank(self):
        """Best-effort topological rank of comb cells (cycles get ties)."""
        drv = {}
        for ci, c in enumerate(self.comb):
            drv[c.output] = ci
        rank = {}

        def depth(ci, seen):
            if ci in rank:
                return rank[ci]
            if ci in seen:
                return 0
            seen.add(ci)
            c = self.comb[ci]
            d = 0
            for sig in (c.address_lines() if c.is_lut else []):
                if sig in drv:
                    d = max(d, depth(drv[sig], seen) + 1)
            seen.discard(ci)
            rank[ci] = d
            return d

        import sys
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 100000))
        try:
            for ci in range(len(self.comb)):
                depth(ci, set())
        finally:
            sys.setrecursionlimit(old)
        return rank


def _eval_cell(c, values):
    if c.kind == "CONST0":
        return 0
    if c.kind == "CONST1":
        return 1
    return _lut_eval(c.init, [values[s] for s in c.address_lines()])


def _run(cd: _Compiled, input_at, cycles, initial_state=None):
    """Shared engine. ``input_at(t)`` returns {input bit signal: 0/1}."""
    values = {s: X for s in cd.signals}
    for s in cd.undriven:
        values[s] = Z
    last_recorded = {s: X for s in cd.signals}
    events = []
    pending_q = None

    for t in range(cycles):
        changed = set()
        if t == 0:
            changed.update(cd.undriven)  # X -> Z shows up in the trace
            for q, v in (initial_state or {}).items():
                values[q] = v
                changed.add(q)
            dirty = set(range(len(cd.comb)))
        else:
            dirty = set()
            for q, v in pending_q.items():
                if values[q] != v:
                    values[q] = v
                    changed.add(q)
                    dirty.update(cd.fanout.get(q, ()))
        for sig, v in input_at(t).items():
            if values[sig] != v:
                values[sig] = v
                changed.add(sig)
                dirty.update(cd.fanout.get(sig, ()))

        # delta-cycle settle: sweep dirty cells in topo rank order with
        # immediate updates; fanouts of changes form the next sweep
        sweeps = 0
        while dirty:
            sweeps += 1
            if sweeps > cd.cap:
                osc = {cd.comb[ci].output for ci in dirty}
                raise OscillationError(t, osc)
            batch = sorted(dirty, key=lambda ci: (cd.rank[ci], ci))
            dirty = set()
            for ci in batch:
                c = cd.comb[ci]
                v = _eval_cell(c, values)
                out = c.output
                if values[out] != v:
                    values[out] = v
                    changed.add(out)
                    dirty.update(cd.fanout.get(out, ()))

        for sig in sorted(changed):
            v = values[sig]
            if last_recorded[sig] != v:
                events.append((t, sig, v))
                last_recorded[sig] = v

        pending_q = {}
        for c in cd.dffs:
            d = values[c.pins["D"]]
            r = values[c.pins["R"]] if "R" in c.pins else 0
            if r == 1:
                nq = c.reset_value
            elif r == 0:
                nq = d
            else:
                nq = d if d == c.reset_value else X
            pending_q[c.pins["Q"]] = nq

    return EventTrace(signals=list(cd.signals), events=events, length=cycles)


def simulate(n: Netlist, stimulus: Stimulus, cycles=None) -> EventTrace:
    """Simulate ``cycles`` steps (default: the stimulus length)."""
    cd = _Compiled(n)
    if cycles is None:
        cycles = stimulus.length
    if stimulus.length < cycles:
        raise SimulationError(
            f"stimulus has {stimulus.length} steps, {cycles} requested"
        )
    if cd.clock is not None and cd.clock in stimulus.ports:
        raise SimulationError(
            f"clock {cd.clock!r} is implicit and cannot be driven by stimulus"
        )
    missing = [p for p in cd.port_bits if p not in stimulus.ports]
    if missing:
        raise SimulationError(f"stimulus missing input port {missing[0]!r}")
    unknown = [p for p in stimulus.ports if p not in cd.port_bits]
    if unknown:
        raise SimulationError(f"stimulus names unknown input port {unknown[0]!r}")

    def input_at(t):
        out = {}
        for port, bits in cd.port_bits.items():
            v = stimulus.ports[port][t]
            for i, sig in enumerate(bits):
                out[sig] = (v >> i) & 1
        return out

    return _run(cd, input_at, cycles)


def replay(n: Netlist, seq: ReplaySequence, cycles=None) -> EventTrace:
    """Drive an exact input sequence, optionally from a chosen register state.

    Step dicts accept whole-port values (``{"data": 5}``) and single bits
    (``{"data[0]": 1}``, bit keys win); unassigned inputs default to 0.
    ``initial_state`` pins DFF q nets at time step 0.
    """
    cd = _Compiled(n)
    if cycles is None:
        cycles = len(seq.inputs)
    if len(seq.inputs) < cycles:
        raise SimulationError(f"replay has {len(seq.inputs)} steps, {cycles} requested")

    bit_owner = {}
    for port, bits in cd.port_bits.items():
        for sig in bits:
            bit_owner[sig] = port
    qnets = {c.pins["Q"] for c in cd.dffs}
    for q in seq.initial_state:
        if q not in qnets:
            raise SimulationError(f"initial state names non-register signal {q!r}")
    for step in seq.inputs:
        for key in step:
            if key not in cd.port_bits and key not in bit_owner:
                raise SimulationError(f"replay step names unknown input {key!r}")

    def input_at(t):
        step = seq.inputs[t]
        out = {}
        for port, bits in cd.port_bits.items():
            v = step.get(port, 0)
            for i, sig in enumerate(bits):
                out[sig] = (v >> i) & 1
        for key, v in step.items():
            if key in bit_owner:
                out[key] = v & 1
        return out

    init = {q: v & 1 for q, v in seq.initial_state.items()}
    return _run(cd, input_at, cycles, initial_state=init)


def reset_state(n: Netlist) -> dict:
    """Map of every DFF q net to its reset value."""
    cd = _Compiled(n)
    return {c.pins["Q"]: c.reset_value for c in cd.dffs}
