"""Parametric netlists with planted triggers and known ground truth.

Three archetypes at desk scale:

  * pattern lock: a comparator tree raises a registered trigger when the
    registered data word equals a planted pattern; payload LUTs XOR a hidden
    constant onto the outputs while the trigger is high,
  * counter lock: a free-running counter fires a combinational trigger when
    it reaches a planted threshold,
  * sdc pair: two internal signals that each toggle freely but can never be
    high together; payload LUTs use them as their two high address lines and
    leak a registered key byte under that unreachable combination.

Each generator also returns a ground-truth dictionary naming the trigger,
the payload cells, the cells expected to end up low-coverage, and the port
roles, plus an activation recipe replayable in the simulator when one
exists. Generation is a pure function of its arguments: the same call
yields byte-identical netlist text.
"""

from __future__ import annotations

import random

from .netlist import Cell, Module, NetDecl, Netlist, Port


class BenchError(Exception):
    pass


# ---------------------------------------------------------------------------
# building blocks

class _Builder:
    def __init__(self, name):
        self.name = name
        self.ports = []
        self.wires = []
        self.cells = []

    def port(self, name, direction, msb=None, lsb=None):
        self.ports.append(Port(name=name, direction=direction, msb=msb, lsb=lsb))

    def wire(self, name):
        self.wires.append(NetDecl(name=name))
        return name

    def lut(self, name, inputs, init, out):
        pins = {f"I{i}": sig for i, sig in enumerate(inputs)}
        pins["O"] = out
        self.cells.append(Cell(name=name, kind=f"LUT{len(inputs)}",
                               pins=pins, init=init))
        return out

    def dff(self, name, d, q, rst=None, rval=0):
        pins = {"C": "clk", "D": d, "Q": q}
        if rst is not None:
            pins["R"] = rst
        self.cells.append(Cell(name=name, kind="DFF", pins=pins,
                               reset_value=rval))
        return q

    def netlist(self):
        mod = Module(name=self.name, ports=self.ports, wires=self.wires,
                     cells=self.cells)
        return Netlist(modules={self.name: mod}, top=self.name)


def _comparator_tree(b: _Builder, bits, pattern, root):
    """Equality test against a constant: one LUT per 2-bit chunk, joined by
    an AND tree whose final net is named ``root``. Returns the cell names
    (comparators plus joins) and the name of the root's driving cell."""
    layer = []
    names = []
    idx = 0
    for i in range(0, len(bits), 2):
        last = len(bits) - i <= 2 and len(bits) <= 2
        out = root if last else b.wire(f"c{idx}")
        if i + 1 < len(bits):
            want = (pattern >> i) & 3
            b.lut(f"cmp{idx}", [bits[i], bits[i + 1]], 1 << want, out)
        else:
            want = (pattern >> i) & 1
            b.lut(f"cmp{idx}", [bits[i]], 0b10 if want else 0b01, out)
        names.append(f"cmp{idx}")
        layer.append(out)
        idx += 1
    level = 0
    while len(layer) > 1:
        nxt = []
        for j in range(0, len(layer) - 1, 2):
            last = len(layer) <= 2
            out = root if last else b.wire(f"m{level}_{j // 2}")
            name = f"join{level}_{j // 2}"
            b.lut(name, [layer[j], layer[j + 1]], 0x8, out)
            names.append(name)
            nxt.append(out)
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
        level += 1
    return names, names[-1]


def _benign_sprinkle(b: _Builder, rng, sources, count):
    """XOR-family mixing cells over distinct source pairs. Every output
    switches and every address combination is exercised under random
    stimulus, keeping this logic out of both suspect sets."""
    pool = list(sources)
    used = set()
    out = None
    for i in range(count):
        while True:
            pair = tuple(rng.sample(pool, 2))
            if frozenset(pair) not in used:
                used.add(frozenset(pair))
                break
        out = b.wire(f"b{i}")
        b.lut(f"bx{i}", list(pair), rng.choice((0x6, 0x9)), out)
        pool.append(out)
    return out


# ---------------------------------------------------------------------------
# archetypes

def gen_pattern_lock(width, pattern, seed):
    """Netlist whose trigger fires one cycle after the data word matches."""
    if not 1 <= width <= 32:
        raise BenchError(f"data width {width} out of range 1..32")
    if not 0 <= pattern < (1 << width):
        raise BenchError(
            f"pattern {pattern:#x} does not fit {width} data bit(s)")
    rng = random.Random(seed)

    b = _Builder("pattern_lock")
    b.port("clk", "input")
    b.port("rst", "input")
    b.port("data", "input", msb=width - 1, lsb=0)
    b.port("y", "output", msb=width - 1, lsb=0)
    b.port("chk", "output")

    b.wires.append(NetDecl(name="d_q", msb=width - 1, lsb=0))
    d_q = []
    for i in range(width):
        d_q.append(b.dff(f"q{i}", f"data[{i}]", f"d_q[{i}]", rst="rst"))

    b.wire("match")
    _tree_cells, root_cell = _comparator_tree(b, d_q, pattern, "match")
    b.dff("qt", "match", b.wire("trig"), rst="rst")

    hidden = rng.getrandbits(width) or 1
    payload = []
    for i in range(width):
        init = 0x6 if (hidden >> i) & 1 else 0xA
        b.lut(f"p{i}", [f"d_q[{i}]", "trig"], init, f"y[{i}]")
        payload.append(f"p{i}")

    mixed = _benign_sprinkle(b, rng, d_q, max(3, width // 2))
    b.lut("chkbuf", [mixed], 0b10, "chk")

    n = b.netlist()
    digits = max(1, (width + 3) // 4)
    truth = {
        "archetype": "pattern-lock",
        "trigger": {
            "signal": "trig",
            "match_signal": "match",
            "pattern_hex": format(pattern, f"0{digits}x"),
            "width": width,
            "activation": {
                "inputs": [{"data": pattern}, {}, {}],
                "initial_state": {},
                "violation_cycle": 2,
            },
        },
        "payload_cells": payload,
        "hidden_constant_hex": format(hidden, f"0{digits}x"),
        "expected_low_coverage_cells": sorted(payload + [root_cell]),
        "expected_low_switching": ["match", "trig"],
        "roles": {
            "clock": "clk",
            "reset": {"port": "rst", "active": 1, "cycles": 2},
            "data_ports": ["data"],
            "output_ports": ["y", "chk"],
        },
    }
    return n, truth


def gen_counter_lock(counter_bits, threshold, seed):
    """Free-running counter with a combinational trigger at a threshold.

    From reset the count equals the frame number, so the trigger is first
    reachable exactly ``threshold`` frames in.
    """
    if not 1 <= counter_bits <= 12:
        raise BenchError(f"counter width {counter_bits} out of range 1..12")
    if not 0 <= threshold < (1 << counter_bits):
        raise BenchError(
            f"threshold {threshold} needs more than {counter_bits} bit(s)")
    rng = random.Random(seed)

    b = _Builder("counter_lock")
    b.port("clk", "input")
    b.port("rst", "input")
    b.port("count", "output", msb=counter_bits - 1, lsb=0)
    b.port("y", "output")
    b.port("chk", "output")

    cnt = [f"count[{i}]" for i in range(counter_bits)]
    b.lut("inc0", [cnt[0]], 0b01, b.wire("n0"))
    carry = cnt[0]
    for i in range(1, counter_bits):
        if i > 1:
            carry = b.lut(f"car{i - 1}", [carry, cnt[i - 1]], 0x8,
                          b.wire(f"ca{i - 1}"))
        b.lut(f"inc{i}", [carry, cnt[i]], 0x6, b.wire(f"n{i}"))
    for i in range(counter_bits):
        b.dff(f"r{i}", f"n{i}", cnt[i], rst="rst")

    b.wire("trig")
    _comparator_tree(b, cnt, threshold, "trig")
    b.lut("pay0", [cnt[0], "trig"], 0x6, "y")

    pool = cnt if counter_bits > 1 else cnt + ["n0"]
    mixed = _benign_sprinkle(b, rng, pool, 3)
    b.lut("chkbuf", [mixed], 0b10, "chk")

    n = b.netlist()
    truth = {
        "archetype": "counter-lock",
        "trigger": {
            "signal": "trig",
            "threshold": threshold,
            "counter_bits": counter_bits,
            "violation_frame": threshold,
            "activation": {
                "inputs": [{"rst": 1}] + [{} for _ in range(threshold + 1)],
                "initial_state": {},
                "violation_cycle": threshold + 1,
            },
        },
        "payload_cells": ["pay0"],
        "expected_low_coverage_cells": [],
        "expected_low_switching": [],
        "roles": {
            "clock": "clk",
            "reset": {"port": "rst", "active": 1, "cycles": 2},
            "data_ports": [],
            "output_ports": ["count", "y", "chk"],
        },
    }
    return n, truth


def gen_sdc_pair(seed):
    """Netlist with a satisfiability-don't-care signal pair.

    dc1 and dc2 each switch freely under random stimulus but can never be
    high together, so switching analysis alone cannot flag them. Payload
    LUTs carry the pair on their two high address lines and multiplex a
    registered key bit onto the output under the unreachable combination;
    their address coverage converges with exactly that block uncovered.
    """
    rng = random.Random(seed)

    b = _Builder("sdc_pair")
    b.port("clk", "input")
    b.port("rst", "input")
    b.port("data", "input", msb=7, lsb=0)
    b.port("key", "input", msb=7, lsb=0)
    b.port("y", "output", msb=7, lsb=0)
    b.port("chk", "output")

    b.wires.append(NetDecl(name="d_q", msb=7, lsb=0))
    b.wires.append(NetDecl(name="k_q", msb=7, lsb=0))
    d_q, k_q = [], []
    for i in range(8):
        d_q.append(b.dff(f"qd{i}", f"data[{i}]", f"d_q[{i}]", rst="rst"))
        k_q.append(b.dff(f"qk{i}", f"key[{i}]", f"k_q[{i}]", rst="rst"))

    # the pair: both functions of d_q[1:0], high together for no input
    b.lut("g_dc1", [d_q[0], d_q[1]], 0x8, b.wire("dc1"))
    b.lut("g_dc2", [d_q[0], d_q[1]], 0x2, b.wire("dc2"))

    clean = []
    for i in range(8):
        clean.append(b.lut(f"mix{i}", [d_q[i], k_q[i]], 0x6,
                           b.wire(f"clean{i}")))

    payload = []
    for i in range(8):
        if i < 2:
            b.lut(f"buf{i}", [clean[i]], 0b10, f"y[{i}]")
        else:
            b.lut(f"pay{i}", [k_q[i], clean[i], "dc2", "dc1"], 0xACCC,
                  f"y[{i}]")
            payload.append(f"pay{i}")

    mixed = _benign_sprinkle(b, rng, d_q + k_q, 6)
    b.lut("chkbuf", [mixed], 0b10, "chk")

    n = b.netlist()
    truth = {
        "archetype": "sdc-pair",
        "trigger": {
            "signal": None,
            "dc_pair": ["dc1", "dc2"],
            "activation": None,
        },
        "payload_cells": payload,
        "expected_low_coverage_cells": list(payload),
        "expected_cover_hex": "0fff",
        "expected_low_switching": [],
        "roles": {
            "clock": "clk",
            "reset": {"port": "rst", "active": 1, "cycles": 2},
            "data_ports": ["data", "key"],
            "output_ports": ["y", "chk"],
        },
    }
    return n, truth


# ---------------------------------------------------------------------------
# dispatch

ARCHETYPES = ("pattern-lock", "counter-lock", "sdc-pair")


def generate(archetype, width=None, trigger=None, seed=0):
    """Uniform entry point: archetype name plus its trigger parameter."""
    if archetype == "pattern-lock":
        if width is None or trigger is None:
            raise BenchError("pattern-lock needs a width and a pattern")
        return gen_pattern_lock(width, trigger, seed)
    if archetype == "counter-lock":
        if width is None or trigger is None:
            raise BenchError("counter-lock needs a width and a threshold")
        return gen_counter_lock(width, trigger, seed)
    if archetype == "sdc-pair":
        return gen_sdc_pair(seed)
    raise BenchError(f"unknown archetype {archetype!r}; "
                     f"pick one of {', '.join(ARCHETYPES)}")
