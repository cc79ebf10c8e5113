"""LUT-level netlist model: parsing, validation, flattening, emission.

The on-disk format is a small structural-Verilog subset:

  * ``module name (port, ...); ... endmodule``
  * ``input``/``output``/``wire`` declarations, scalar or ``[msb:lsb]`` vectors
  * primitive instantiations: ``LUT1`` .. ``LUT6`` with a mandatory
    ``#(.INIT(<sized literal>))`` parameter, ``DFF`` (posedge, optional
    synchronous reset pin ``R`` with reset value parameter ``RVAL``),
    ``CONST0`` / ``CONST1`` constant drivers
  * instances of other modules in the same file, connected by name
  * ``assign`` of constants and simple aliases (desugared at parse time into
    CONST0/CONST1/LUT1 cells, so the in-memory graph is cells-only)

INIT convention (pinned; vendor dumps disagree among themselves): bit ``i`` of
INIT is the LUT output when the address lines encode the integer ``i``, with
input ``I0`` as the least significant address bit.

Identifiers may contain ``.`` so that flattened netlists (hierarchical names
joined with ``.``) re-parse with the same grammar. Scalar signals are referred
to by name, vector bits as ``name[i]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

LUT_KINDS = {"LUT1": 1, "LUT2": 2, "LUT3": 3, "LUT4": 4, "LUT5": 5, "LUT6": 6}
PRIMITIVES = set(LUT_KINDS) | {"DFF", "CONST0", "CONST1"}

_CONST0_NET = "__const0"
_CONST1_NET = "__const1"


class NetlistError(Exception):
    """Base error for netlist construction problems."""


class ParseError(NetlistError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", col {col}" if col is not None else "")
        super().__init__(message + where)


class RecursionLimitError(NetlistError):
    """Recursive module instantiation."""


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    kind: str      # short machine tag, e.g. "multi-driver"
    message: str

    def __str__(self):
        return f"{self.severity}: [{self.kind}] {self.message}"


@dataclass
class NetDecl:
    """A declared net: scalar (msb is None) or vector [msb:lsb]."""
    name: str
    msb: int | None = None
    lsb: int = 0

    @property
    def is_vector(self):
        return self.msb is not None

    @property
    def width(self):
        return 1 if self.msb is None else self.msb - self.lsb + 1

    def bits(self):
        """Scalar signal names, LSB first."""
        if self.msb is None:
            return [self.name]
        return [f"{self.name}[{i}]" for i in range(self.lsb, self.msb + 1)]


@dataclass
class Port(NetDecl):
    direction: str = "input"  # "input" | "output"


@dataclass
class Cell:
    """A primitive instance. ``pins`` maps pin name to a scalar signal name."""
    name: str
    kind: str
    pins: dict = field(default_factory=dict)
    init: int | None = None
    reset_value: int = 0
    line: int | None = field(default=None, compare=False)

    @property
    def is_lut(self):
        return self.kind in LUT_KINDS

    @property
    def num_inputs(self):
        return LUT_KINDS.get(self.kind, 0)

    @property
    def init_width(self):
        return 1 << self.num_inputs

    def input_pins(self):
        return [f"I{i}" for i in range(self.num_inputs)]

    def address_lines(self):
        """Signals on I0..Ik-1, index 0 = least significant address bit."""
        return [self.pins[p] for p in self.input_pins()]

    @property
    def output(self):
        return self.pins["Q"] if self.kind == "DFF" else self.pins["O"]


@dataclass
class Instance:
    """An instance of another module; bindings are scalar lists, LSB first."""
    name: str
    module: str
    bindings: dict = field(default_factory=dict)
    line: int | None = field(default=None, compare=False)


@dataclass
class Module:
    name: str
    ports: list = field(default_factory=list)
    wires: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    instances: list = field(default_factory=list)

    def decls(self):
        return list(self.ports) + list(self.wires)

    def decl_map(self):
        return {d.name: d for d in self.decls()}

    def signals(self):
        """All scalar signal names in declaration order."""
        out = []
        for d in self.decls():
            out.extend(d.bits())
        return out

    def port_map(self):
        return {p.name: p for p in self.ports}

    def input_bits(self):
        out = []
        for p in self.ports:
            if p.direction == "input":
                out.extend(p.bits())
        return out

    def output_bits(self):
        out = []
        for p in self.ports:
            if p.direction == "output":
                out.extend(p.bits())
        return out

    def driver_map(self):
        """signal -> driving cell, for cells only (ports handled separately)."""
        drv = {}
        for c in self.cells:
            drv[c.output] = c
        return drv


@dataclass
class Netlist:
    modules: dict
    top: str

    @property
    def top_module(self):
        return self.modules[self.top]

    @property
    def is_flat(self):
        return len(self.modules) == 1 and not self.top_module.instances


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<sized>\d+'[hbd][0-9a-fA-F_xzXZ]+)
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_$\\][A-Za-z0-9_$.\\]*)
  | (?P<sym>\#|\(|\)|\[|\]|\{|\}|,|;|:|\.|=)
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {"module", "endmodule", "input", "output", "wire", "assign", "inout"}


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            col = pos - line_start + 1
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            col = m.start() - line_start + 1
            if kind == "ident" and tok in _KEYWORDS:
                kind = "kw"
            tokens.append(_Token(kind, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = m.start() + tok.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, 1))
    return tokens


def _parse_sized_literal(tok: _Token):
    """Return (width, value) for a literal like 16'hACCC."""
    width_s, rest = tok.text.split("'", 1)
    base, digits = rest[0].lower(), rest[1:].replace("_", "")
    width = int(width_s)
    if any(ch in "xzXZ" for ch in digits):
        raise ParseError("x/z digits are not supported in literals", tok.line, tok.col)
    try:
        value = int(digits, {"h": 16, "b": 2, "d": 10}[base])
    except ValueError:
        raise ParseError(f"bad literal {tok.text!r}", tok.line, tok.col)
    if value >= (1 << width):
        raise ParseError(f"literal {tok.text!r} overflows its width", tok.line, tok.col)
    return width, value


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, kind, text=None):
        t = self.next()
        if t.kind != kind or (text is not None and t.text != text):
            want = text if text is not None else kind
            raise ParseError(f"expected {want!r}, got {t.text!r}", t.line, t.col)
        return t

    def accept(self, kind, text=None):
        t = self.peek()
        if t.kind == kind and (text is None or t.text == text):
            self.i += 1
            return t
        return None

    # -- grammar ------------------------------------------------------------

    def parse_netlist(self):
        modules = {}
        first = None
        while self.peek().kind != "eof":
            mod = self.parse_module()
            if mod.name in modules:
                raise ParseError(f"duplicate module {mod.name!r}")
            modules[mod.name] = mod
            if first is None:
                first = mod.name
        if not modules:
            raise ParseError("no module found")
        top = _find_top(modules, first)
        return Netlist(modules=modules, top=top)

    def parse_module(self):
        self.expect("kw", "module")
        name_t = self.expect("ident")
        header_ports = []
        self.expect("sym", "(")
        if not self.accept("sym", ")"):
            while True:
                header_ports.append(self.expect("ident").text)
                if self.accept("sym", ")"):
                    break
                self.expect("sym", ",")
        self.expect("sym", ";")

        mod = _ModuleBuilder(name_t.text, header_ports)
        while True:
            t = self.peek()
            if t.kind == "kw" and t.text == "endmodule":
                self.next()
                break
            if t.kind == "eof":
                raise ParseError("missing endmodule", t.line, t.col)
            self.parse_item(mod)
        return mod.finish()

    def parse_item(self, mod):
        t = self.peek()
        if t.kind == "kw" and t.text in ("input", "output", "wire"):
            self.parse_decl(mod)
        elif t.kind == "kw" and t.text == "inout":
            raise ParseError("inout ports are not supported", t.line, t.col)
        elif t.kind == "kw" and t.text == "assign":
            self.parse_assign(mod)
        elif t.kind == "ident":
            self.parse_instantiation(mod)
        else:
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col)

    def parse_decl(self, mod):
        kw = self.next().text
        msb = lsb = None
        if self.accept("sym", "["):
            msb = int(self.expect("number").text)
            self.expect("sym", ":")
            lsb = int(self.expect("number").text)
            self.expect("sym", "]")
            if msb < lsb:
                raise ParseError("descending ranges only: [msb:lsb] with msb >= lsb")
        while True:
            name_t = self.expect("ident")
            mod.declare(kw, name_t.text, msb, lsb, name_t.line)
            if self.accept("sym", ";"):
                break
            self.expect("sym", ",")

    def parse_ref(self, mod):
        """A net reference or literal -> list of scalar names, LSB first."""
        t = self.peek()
        if t.kind == "sized":
            self.next()
            width, value = _parse_sized_literal(t)
            return [mod.const_bit((value >> i) & 1, t.line) for i in range(width)]
        name_t = self.expect("ident")
        if self.accept("sym", "["):
            hi = int(self.expect("number").text)
            lo = hi
            if self.accept("sym", ":"):
                lo = int(self.expect("number").text)
            self.expect("sym", "]")
            if hi < lo:
                raise ParseError("descending part-select only", name_t.line, name_t.col)
            return mod.select(name_t, lo, hi)
        return mod.whole(name_t)

    def parse_assign(self, mod):
        kw_t = self.next()
        lhs = self.parse_ref(mod)
        self.expect("sym", "=")
        rhs = self.parse_ref(mod)
        self.expect("sym", ";")
        if len(lhs) != len(rhs):
            raise ParseError(
                f"assign width mismatch ({len(lhs)} vs {len(rhs)})", kw_t.line, kw_t.col
            )
        mod.add_assign(lhs, rhs, kw_t.line)

    def parse_params(self):
        params = {}
        self.expect("sym", "(")
        while True:
            self.expect("sym", ".")
            pname = self.expect("ident").text
            self.expect("sym", "(")
            lit = self.expect("sized")
            params[pname] = _parse_sized_literal(lit) + (lit,)
            self.expect("sym", ")")
            if self.accept("sym", ")"):
                break
            self.expect("sym", ",")
        return params

    def parse_instantiation(self, mod):
        kind_t = self.next()
        params = {}
        if self.accept("sym", "#"):
            params = self.parse_params()
        inst_t = self.expect("ident")
        conns = {}
        self.expect("sym", "(")
        if not self.accept("sym", ")"):
            while True:
                self.expect("sym", ".")
                pin = self.expect("ident").text
                self.expect("sym", "(")
                if self.accept("sym", ")"):
                    conns[pin] = []  # explicitly unconnected
                else:
                    conns[pin] = self.parse_ref(mod)
                    self.expect("sym", ")")
                if self.accept("sym", ")"):
                    break
                self.expect("sym", ",")
        self.expect("sym", ";")
        mod.add_instantiation(kind_t, params, inst_t.text, conns)


def _find_top(modules, first):
    """Top = the module never instantiated; ties broken by file order."""
    instantiated = set()
    for m in modules.values():
        for inst in m.instances:
            instantiated.add(inst.module)
    roots = [name for name in modules if name not in instantiated]
    if not roots:
        # mutual recursion: every module is instantiated; fall back to file
        # order and let validate() report the recursion
        return first
    # preserve file order preference
    for name in modules:
        if name in roots:
            return name
    return first


class _ModuleBuilder:
    def __init__(self, name, header_ports):
        self.name = name
        self.header_ports = header_ports
        self.ports = []
        self.wires = []
        self.cells = []
        self.instances = []
        self.decl_names = {}
        self.gen_counter = 0

    def declare(self, kw, name, msb, lsb, line):
        if name in self.decl_names:
            raise ParseError(f"duplicate declaration of {name!r}", line)
        if kw in ("input", "output"):
            if name not in self.header_ports:
                raise ParseError(f"port {name!r} missing from module header", line)
            d = Port(name=name, msb=msb, lsb=lsb or 0, direction=kw)
            self.ports.append(d)
        else:
            d = NetDecl(name=name, msb=msb, lsb=lsb or 0)
            self.wires.append(d)
        self.decl_names[name] = d

    def _decl(self, tok):
        d = self.decl_names.get(tok.text)
        if d is None:
            raise ParseError(f"undeclared net {tok.text!r}", tok.line, tok.col)
        return d

    def whole(self, tok):
        return self._decl(tok).bits()

    def select(self, tok, lo, hi):
        d = self._decl(tok)
        if not d.is_vector:
            raise ParseError(f"{tok.text!r} is scalar, cannot index", tok.line, tok.col)
        if lo < d.lsb or hi > d.msb:
            raise ParseError(
                f"index [{hi}:{lo}] out of range for {tok.text!r}", tok.line, tok.col
            )
        return [f"{d.name}[{i}]" for i in range(lo, hi + 1)]

    def const_bit(self, bit, line):
        """Literal bits reference a shared constant net per polarity; the
        driver cell and declaration materialize in finish() only when some pin
        still reads the net after assign desugaring."""
        return _CONST1_NET if bit else _CONST0_NET

    def add_assign(self, lhs, rhs, line):
        # constants become CONST cells (shared nets already inserted by
        # parse_ref), aliases become identity LUT1 buffers
        for i, (dst, src) in enumerate(zip(lhs, rhs)):
            if dst in (_CONST0_NET, _CONST1_NET):
                raise ParseError("cannot assign to a literal", line)
            name = f"__assign_{line}_{self.gen_counter}"
            self.gen_counter += 1
            if src == _CONST0_NET:
                self.cells.append(Cell(name=name, kind="CONST0", pins={"O": dst}, line=line))
            elif src == _CONST1_NET:
                self.cells.append(Cell(name=name, kind="CONST1", pins={"O": dst}, line=line))
            else:
                self.cells.append(
                    Cell(name=name, kind="LUT1", pins={"I0": src, "O": dst},
                         init=0b10, line=line)
                )

    def add_instantiation(self, kind_t, params, inst_name, conns):
        kind = kind_t.text
        line = kind_t.line
        if kind in LUT_KINDS:
            self._add_lut(kind, params, inst_name, conns, line)
        elif kind == "DFF":
            self._add_dff(params, inst_name, conns, line)
        elif kind in ("CONST0", "CONST1"):
            self._add_const(kind, inst_name, conns, line)
        elif re.fullmatch(r"LUT\d+", kind):
            raise ParseError(f"unknown primitive {kind!r} (LUT1..LUT6 supported)", line)
        else:
            self.instances.append(
                Instance(name=inst_name, module=kind, bindings=conns, line=line)
            )

    def _one_bit(self, conns, pin, who, line, required=True):
        if pin not in conns or conns[pin] == []:
            if required:
                raise ParseError(f"{who}: pin {pin} is unconnected", line)
            return None
        sig = conns[pin]
        if len(sig) != 1:
            raise ParseError(f"{who}: pin {pin} must be 1 bit wide", line)
        return sig[0]

    def _add_lut(self, kind, params, name, conns, line):
        k = LUT_KINDS[kind]
        if "INIT" not in params:
            raise ParseError(f"{kind} {name!r}: missing INIT parameter", line)
        width, value, tok = params["INIT"]
        if width != (1 << k):
            raise ParseError(
                f"{kind} {name!r}: INIT width {width} does not match {1 << k}",
                tok.line, tok.col,
            )
        extra = set(params) - {"INIT"}
        if extra:
            raise ParseError(f"{kind} {name!r}: unknown parameter {sorted(extra)[0]}", line)
        pins = {}
        expected = {f"I{i}" for i in range(k)} | {"O"}
        unknown = set(conns) - expected
        if unknown:
            raise ParseError(f"{kind} {name!r}: unknown pin {sorted(unknown)[0]}", line)
        for pin in sorted(expected):
            pins[pin] = self._one_bit(conns, pin, f"{kind} {name!r}", line)
        self.cells.append(Cell(name=name, kind=kind, pins=pins, init=value, line=line))

    def _add_dff(self, params, name, conns, line):
        rval = 0
        if "RVAL" in params:
            width, value, tok = params["RVAL"]
            if width != 1:
                raise ParseError(f"DFF {name!r}: RVAL must be 1 bit", tok.line, tok.col)
            rval = value
        extra = set(params) - {"RVAL"}
        if extra:
            raise ParseError(f"DFF {name!r}: unknown parameter {sorted(extra)[0]}", line)
        unknown = set(conns) - {"C", "D", "Q", "R"}
        if unknown:
            raise ParseError(f"DFF {name!r}: unknown pin {sorted(unknown)[0]}", line)
        pins = {}
        for pin in ("C", "D", "Q"):
            pins[pin] = self._one_bit(conns, pin, f"DFF {name!r}", line)
        r = self._one_bit(conns, "R", f"DFF {name!r}", line, required=False)
        if r is not None:
            pins["R"] = r
        self.cells.append(
            Cell(name=name, kind="DFF", pins=pins, reset_value=rval, line=line)
        )

    def _add_const(self, kind, name, conns, line):
        unknown = set(conns) - {"O"}
        if unknown:
            raise ParseError(f"{kind} {name!r}: unknown pin {sorted(unknown)[0]}", line)
        pins = {"O": self._one_bit(conns, "O", f"{kind} {name!r}", line)}
        self.cells.append(Cell(name=name, kind=kind, pins=pins, line=line))

    def finish(self):
        missing = [p for p in self.header_ports if p not in self.decl_names]
        if missing:
            raise ParseError(
                f"module {self.name!r}: header port {missing[0]!r} has no direction "
                "declaration"
            )
        self._materialize_consts()
        ports = sorted(self.ports, key=lambda p: self.header_ports.index(p.name))
        return Module(
            name=self.name, ports=ports, wires=self.wires,
            cells=self.cells, instances=self.instances,
        )

    def _materialize_consts(self):
        referenced = set()
        for c in self.cells:
            for pin, sig in c.pins.items():
                if pin not in ("O", "Q") and sig in (_CONST0_NET, _CONST1_NET):
                    referenced.add(sig)
        for inst in self.instances:
            for sigs in inst.bindings.values():
                for s in sigs:
                    if s in (_CONST0_NET, _CONST1_NET):
                        referenced.add(s)
        driven = {c.pins.get("Q" if c.kind == "DFF" else "O") for c in self.cells}
        for bit, net in ((0, _CONST0_NET), (1, _CONST1_NET)):
            if net not in referenced:
                continue
            if net not in self.decl_names:
                d = NetDecl(name=net)
                self.wires.append(d)
                self.decl_names[net] = d
            if net not in driven:
                self.cells.append(Cell(
                    name=f"__genconst{bit}", kind=f"CONST{bit}", pins={"O": net},
                ))


def parse_netlist(text, check=True):
    """Parse netlist text. With ``check`` (default), raise on any error-grade
    diagnostic so the result satisfies all structural invariants."""
    n = _Parser(text).parse_netlist()
    if check:
        errors = [d for d in validate(n) if d.severity == "error"]
        if errors:
            raise NetlistError("; ".join(str(d) for d in errors))
    return n


# ---------------------------------------------------------------------------
# validation

def validate(n: Netlist):
    """Structural checks. Returns a list of diagnostics (possibly empty).

    Errors: multiple drivers, unknown instance module, bad instance bindings,
    combinational cycles through LUTs, multiple clock nets, recursive
    instantiation. Warnings: nets that are read but never driven (these
    simulate as high-impedance).
    """
    diags = []
    for mod in n.modules.values():
        diags.extend(_validate_module(mod, n))
    # cross-module structure: cycles and clocking are properties of the
    # flattened design; hierarchy errors above make flattening meaningless
    if any(d.kind in ("unknown-module", "port-width", "unknown-net") for d in diags):
        return diags
    try:
        flat = n if n.is_flat else _flatten(n)
    except RecursionLimitError as e:
        diags.append(Diagnostic("error", "recursive-instantiation", str(e)))
        return diags
    except NetlistError as e:
        diags.append(Diagnostic("error", "flatten", str(e)))
        return diags
    diags.extend(_validate_flat(flat.top_module))
    return diags


def _validate_module(mod: Module, n: Netlist):
    diags = []
    known = set(mod.signals()) | {_CONST0_NET, _CONST1_NET}
    drivers = {}

    def drive(sig, who):
        if sig in drivers:
            diags.append(Diagnostic(
                "error", "multi-driver",
                f"{mod.name}: net {sig!r} driven by both {drivers[sig]} and {who}",
            ))
        else:
            drivers[sig] = who

    for p in mod.ports:
        if p.direction == "input":
            for b in p.bits():
                drive(b, f"input port {p.name!r}")
    for c in mod.cells:
        for pin, sig in c.pins.items():
            if sig not in known:
                diags.append(Diagnostic(
                    "error", "unknown-net",
                    f"{mod.name}: cell {c.name!r} pin {pin} references {sig!r}",
                ))
        out = c.pins.get("Q" if c.kind == "DFF" else "O")
        if out is not None:
            drive(out, f"cell {c.name!r}")
    for inst in mod.instances:
        child = n.modules.get(inst.module)
        if child is None:
            diags.append(Diagnostic(
                "error", "unknown-module",
                f"{mod.name}: instance {inst.name!r} of undefined module {inst.module!r}",
            ))
            continue
        child_ports = child.port_map()
        for pname, sigs in inst.bindings.items():
            cp = child_ports.get(pname)
            if cp is None:
                diags.append(Diagnostic(
                    "error", "unknown-port",
                    f"{mod.name}: instance {inst.name!r} binds unknown port {pname!r}",
                ))
                continue
            if sigs and len(sigs) != cp.width:
                diags.append(Diagnostic(
                    "error", "port-width",
                    f"{mod.name}: instance {inst.name!r} port {pname}: "
                    f"bound {len(sigs)} bits, expected {cp.width}",
                ))
            if cp.direction == "output":
                for s in sigs:
                    drive(s, f"instance {inst.name!r}.{pname}")

    # reads of never-driven nets simulate as Z; worth flagging, not fatal
    reads = set()
    for c in mod.cells:
        for pin, sig in c.pins.items():
            if pin not in ("O", "Q"):
                reads.add(sig)
    for inst in mod.instances:
        child = n.modules.get(inst.module)
        if child is None:
            continue
        for pname, sigs in inst.bindings.items():
            cp = child.port_map().get(pname)
            if cp is not None and cp.direction == "input":
                reads.update(sigs)
    for p in mod.ports:
        if p.direction == "output":
            reads.update(p.bits())
    for sig in sorted(reads - set(drivers)):
        if sig in known:
            diags.append(Diagnostic(
                "warning", "undriven",
                f"{mod.name}: net {sig!r} is read but never driven (simulates as Z)",
            ))
    return diags


def _validate_flat(mod: Module):
    diags = []
    # combinational cycle check over LUT cells only (DFFs break paths)
    edges = {}
    for c in mod.cells:
        if c.is_lut:
            edges[c.output] = c.address_lines()
    color = {}
    stack_cells = []

    def dfs(sig):
        color[sig] = 1
        for src in edges.get(sig, ()):
            st = color.get(src)
            if st == 1:
                cyc = [src]
                for s in reversed(stack_cells):
                    cyc.append(s)
                    if s == src:
                        break
                diags.append(Diagnostic(
                    "error", "comb-cycle",
                    "combinational cycle through LUTs: " + " -> ".join(reversed(cyc)),
                ))
            elif st is None:
                stack_cells.append(src)
                dfs(src)
                stack_cells.pop()
        color[sig] = 2

    import sys
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10000))
    try:
        for sig in list(edges):
            if sig not in color:
                stack_cells.append(sig)
                dfs(sig)
                stack_cells.pop()
    finally:
        sys.setrecursionlimit(old)

    # single clock domain: every DFF C pin must tie to one common net
    clocks = {c.pins["C"] for c in mod.cells if c.kind == "DFF"}
    if len(clocks) > 1:
        diags.append(Diagnostic(
            "error", "multi-clock",
            f"multiple clock nets: {sorted(clocks)} (single clock domain required)",
        ))
    elif clocks:
        clk = next(iter(clocks))
        if clk not in set(mod.input_bits()):
            diags.append(Diagnostic(
                "error", "clock-source",
                f"clock net {clk!r} must be a primary input",
            ))
    return diags


def clock_net(mod: Module):
    """The unique net on DFF C pins, or None for purely combinational logic."""
    clocks = {c.pins["C"] for c in mod.cells if c.kind == "DFF"}
    if len(clocks) > 1:
        raise NetlistError(f"multiple clock nets: {sorted(clocks)}")
    return next(iter(clocks)) if clocks else None


# ---------------------------------------------------------------------------
# flattening

def flatten(n: Netlist):
    """Expand the hierarchy into a single module.

    Child signals and cells are renamed ``parentInstance.childName``; child
    port nets are substituted by the nets bound at the instantiation site, so
    no buffer cells are introduced and per-cycle behavior is preserved.
    """
    return _flatten(n)


def _flatten(n: Netlist):
    top = n.top_module
    out = Module(name=top.name, ports=[replace(p) for p in top.ports])
    taken = set()
    for p in out.ports:
        taken.update(p.bits())

    def fresh_decl(decl, prefix):
        name = prefix + decl.name
        d = replace(decl)
        d.name = name
        if isinstance(d, Port):
            d = NetDecl(name=name, msb=decl.msb, lsb=decl.lsb)
        for b in d.bits():
            if b in taken:
                raise NetlistError(f"flatten name collision on {b!r}")
            taken.add(b)
        out.wires.append(d)
        return d

    def walk(mod, prefix, portmap, path):
        if mod.name in path:
            raise RecursionLimitError(
                "recursive instantiation: " + " -> ".join(path + [mod.name])
            )
        rename = dict(portmap)
        rename[_CONST0_NET] = _CONST0_NET
        rename[_CONST1_NET] = _CONST1_NET
        for decl in mod.decls():
            bits = decl.bits()
            if all(b in rename for b in bits):
                continue
            if any(b in rename for b in bits):
                # a port vector partially pre-mapped cannot happen: ports map
                # whole; guard anyway
                raise NetlistError(f"partial mapping of {decl.name!r}")
            d = fresh_decl(decl, prefix)
            for old, new in zip(bits, d.bits()):
                rename[old] = new
        for c in mod.cells:
            pins = {pin: rename[sig] for pin, sig in c.pins.items()}
            out.cells.append(replace(c, name=prefix + c.name, pins=pins))
        for inst in mod.instances:
            child = n.modules[inst.module]
            cmap = {}
            for p in child.ports:
                bound = inst.bindings.get(p.name)
                if bound:
                    for bit, sig in zip(p.bits(), bound):
                        cmap[bit] = rename[sig]
            walk(child, prefix + inst.name + ".", cmap, path + [mod.name])

    # top-level nets keep their own names
    topmap = {b: b for p in top.ports for b in p.bits()}
    walk(top, "", topmap, [])
    _merge_const_cells(out)
    return Netlist(modules={out.name: out}, top=out.name)


def _merge_const_cells(mod: Module):
    """Hierarchy may contribute several CONST drivers of __const0/__const1
    (one per module); keep the first of each polarity."""
    seen = set()
    kept = []
    for c in mod.cells:
        if c.kind in ("CONST0", "CONST1") and c.output in (_CONST0_NET, _CONST1_NET):
            if c.output in seen:
                continue
            seen.add(c.output)
            kept.append(replace(c, name="__genconst1" if c.kind == "CONST1" else "__genconst0"))
        else:
            kept.append(c)
    mod.cells = kept
    # drop duplicate const net decls, ensure one exists per kept driver
    seen_nets = set()
    wires = []
    for d in mod.wires:
        if d.name in (_CONST0_NET, _CONST1_NET):
            if d.name in seen_nets:
                continue
            seen_nets.add(d.name)
        wires.append(d)
    for net in seen:
        if net not in seen_nets:
            wires.append(NetDecl(name=net))
    mod.wires = wires


# ---------------------------------------------------------------------------
# emission

def _init_literal(value, width):
    digits = (width + 3) // 4
    return f"{width}'h{value:0{digits}x}"


def emit_netlist(n: Netlist):
    """Deterministic text form; ``parse_netlist(emit_netlist(n)) == n``."""
    chunks = []
    for mod in n.modules.values():
        chunks.append(_emit_module(mod))
    return "\n".join(chunks)


def _emit_module(mod: Module):
    lines = []
    header = ", ".join(p.name for p in mod.ports)
    lines.append(f"module {mod.name}({header});")
    for p in mod.ports:
        rng = f" [{p.msb}:{p.lsb}]" if p.is_vector else ""
        lines.append(f"  {p.direction}{rng} {p.name};")
    for w in mod.wires:
        rng = f" [{w.msb}:{w.lsb}]" if w.is_vector else ""
        lines.append(f"  wire{rng} {w.name};")
    for c in mod.cells:
        lines.append("  " + _emit_cell(c))
    for inst in mod.instances:
        conns = ", ".join(
            f".{p}({_emit_ref(sigs)})" for p, sigs in inst.bindings.items()
        )
        lines.append(f"  {inst.module} {inst.name} ({conns});")
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def _emit_ref(sigs):
    if len(sigs) == 1:
        return sigs[0]
    # contiguous bits of one vector re-pack as a part select
    m = re.fullmatch(r"(.+)\[(\d+)\]", sigs[0])
    if m:
        base, lo = m.group(1), int(m.group(2))
        ok = all(
            re.fullmatch(re.escape(base) + r"\[" + str(lo + i) + r"\]", s)
            for i, s in enumerate(sigs)
        )
        if ok:
            return f"{base}[{lo + len(sigs) - 1}:{lo}]"
    raise NetlistError(f"cannot emit non-contiguous binding {sigs!r}")


def _emit_cell(c: Cell):
    if c.is_lut:
        pins = ", ".join(
            [f".I{i}({c.pins[f'I{i}']})" for i in range(c.num_inputs)]
            + [f".O({c.pins['O']})"]
        )
        return f"{c.kind} #(.INIT({_init_literal(c.init, c.init_width)})) {c.name} ({pins});"
    if c.kind == "DFF":
        parts = [f".C({c.pins['C']})"]
        if "R" in c.pins:
            parts.append(f".R({c.pins['R']})")
        parts.append(f".D({c.pins['D']})")
        parts.append(f".Q({c.pins['Q']})")
        param = f" #(.RVAL(1'b{c.reset_value}))" if ("R" in c.pins or c.reset_value) else ""
        return f"DFF{param} {c.name} ({', '.join(parts)});"
    if c.kind in ("CONST0", "CONST1"):
        return f"{c.kind} {c.name} (.O({c.pins['O']}));"
    raise NetlistError(f"cannot emit cell kind {c.kind!r}")
