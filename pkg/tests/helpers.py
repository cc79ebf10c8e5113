"""Shared test helpers: random netlist construction, direct cone evaluation."""

import random

from lutscope.netlist import Cell, Module, NetDecl, Netlist, Port


def eval_cone(mod, net, env):
    """Recursive table lookup, no simulator involved."""
    if net in env:
        return env[net]
    cell = next(c for c in mod.cells if c.output == net)
    addr = 0
    for i, line in enumerate(cell.address_lines()):
        addr |= eval_cone(mod, line, env) << i
    value = (cell.init >> addr) & 1
    env[net] = value
    return value


def random_netlist(seed, n_cells=30, n_inputs=4, with_dffs=True):
    """Random acyclic LUT/DFF netlist. Some DFFs get no reset pin so X states
    persist; a slice of nets is left undriven to exercise Z handling."""
    rng = random.Random(seed)
    ports = [Port(name="clk", direction="input")]
    in_names = []
    for i in range(n_inputs):
        name = f"in{i}"
        ports.append(Port(name=name, direction="input"))
        in_names.append(name)
    avail = list(in_names)
    cells = []
    wires = []

    n_undriven = rng.randrange(0, 3)
    for i in range(n_undriven):
        name = f"float{i}"
        wires.append(NetDecl(name=name))
        avail.append(name)

    for i in range(n_cells):
        out = f"n{i}"
        wires.append(NetDecl(name=out))
        if with_dffs and rng.random() < 0.25:
            pins = {"C": "clk", "D": rng.choice(avail), "Q": out}
            rval = rng.randrange(2)
            if rng.random() < 0.6:
                pins["R"] = "in0"
            cells.append(Cell(name=f"c{i}", kind="DFF", pins=pins, reset_value=rval))
        else:
            k = rng.randrange(1, 5)
            kind = f"LUT{k}"
            pins = {"O": out}
            for j in range(k):
                pins[f"I{j}"] = rng.choice(avail)
            init = rng.getrandbits(1 << k)
            cells.append(Cell(name=f"c{i}", kind=kind, pins=pins, init=init))
        avail.append(out)

    out_port = Port(name="out", direction="output")
    ports.append(out_port)
    cells.append(Cell(name="obuf", kind="LUT1",
                      pins={"I0": avail[-1], "O": "out"}, init=0b10))
    mod = Module(name="rand", ports=ports, wires=wires, cells=cells)
    return Netlist(modules={"rand": mod}, top="rand")
