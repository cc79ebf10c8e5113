"""Formal checks for extracted properties.

Combinational questions are answered by slicing the fan-in cone of the
asserted signals (stopping at primary inputs and register outputs), encoding
each LUT exactly from its minimized on-set and off-set cube covers, and
handing the negated assertion to the CDCL solver. Register outputs are free
variables in these per-step checks, so HOLDS is relative to arbitrary
register contents and a FAIL may name an unreachable state.

Reachability is recovered two ways:

  * backtrace_chain walks a failing assignment backwards, one register
    boundary per step, until the witness is expressed purely over primary
    inputs; the per-cycle input parts then form a concrete activation
    sequence,
  * prove_bmc unrolls the design frame by frame from its reset state and
    asks for a violation at each depth, returning the shortest input
    sequence that reaches one.

Every reported activation sequence is replayed through the logic simulator
first; a witness that does not reproduce (x-valued gaps from floating nets)
is withheld and the result downgraded rather than reported.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache

from .netlist import Netlist, clock_net
from .properties import ConstantProperty, NeverProperty, minimize_minterms
from .sat import DEFAULT_MAX_CONFLICTS, CnfFormula, sat_check
from .sim import ReplaySequence, SimulationError, replay


class ProveError(Exception):
    pass


# ---------------------------------------------------------------------------
# cones

@dataclass
class Cone:
    """Transitive combinational fan-in of a signal.

    ``cells`` lists LUT/CONST cells in dependency order (drivers before
    readers); ``support`` holds the boundary signals: primary inputs,
    register outputs, and floating nets (the latter repeated in ``free``).
    """
    target: str
    cells: list
    support: list
    free: set


def _flat_module(n: Netlist):
    if not n.is_flat:
        raise ProveError("netlist must be flattened first")
    return n.top_module


class _ConeWalk:
    """Shared depth-first walk so multi-target cones merge cleanly."""

    def __init__(self, mod):
        self.drivers = mod.driver_map()
        self.inputs = set(mod.input_bits())
        self.known = set(mod.signals())
        self.cells = []
        self.support = set()
        self.free = set()
        self._done = set()

    def visit(self, target):
        if target not in self.known:
            raise ProveError(f"unknown signal {target!r}")
        on_path = set()
        stack = [(target, False)]
        while stack:
            sig, expanded = stack.pop()
            if expanded:
                cell = self.drivers[sig]
                on_path.discard(cell.name)
                if cell.name not in self._done:
                    self._done.add(cell.name)
                    self.cells.append(cell)
                continue
            if sig in self.inputs:
                self.support.add(sig)
                continue
            cell = self.drivers.get(sig)
            if cell is None:
                self.support.add(sig)
                self.free.add(sig)
                continue
            if cell.kind == "DFF":
                self.support.add(sig)
                continue
            if cell.name in self._done:
                continue
            if cell.name in on_path:
                raise ProveError(f"combinational cycle through {sig!r}")
            on_path.add(cell.name)
            stack.append((sig, True))
            deps = cell.address_lines() if cell.is_lut else []
            for dep in reversed(deps):
                stack.append((dep, False))


def extract_cone(n: Netlist, signal: str) -> Cone:
    """Fan-in cone of ``signal`` up to the nearest register boundary."""
    walk = _ConeWalk(_flat_module(n))
    walk.visit(signal)
    return Cone(target=signal, cells=walk.cells,
                support=sorted(walk.support), free=walk.free)


def _cones(mod, targets):
    walk = _ConeWalk(mod)
    for t in sorted(set(targets)):
        walk.visit(t)
    return walk.cells, sorted(walk.support), walk.free


# ---------------------------------------------------------------------------
# CNF encoding

@lru_cache(maxsize=None)
def _cube_templates(k, init):
    size = 1 << k
    onset = [m for m in range(size) if (init >> m) & 1]
    offset = [m for m in range(size) if not (init >> m) & 1]
    return (tuple(minimize_minterms(k, onset)),
            tuple(minimize_minterms(k, offset)))


def _declare(formula, names, suffix=""):
    # fix variable numbering before clauses reference anything
    for s in names:
        formula.var(s + suffix)


def _encode_cells(formula, cells, suffix=""):
    """Exact clause set for LUT/CONST cells; output iff an on-cube matches."""
    for cell in cells:
        out = formula.var(cell.output + suffix)
        if cell.kind == "CONST0":
            formula.add_clause(-out)
            continue
        if cell.kind == "CONST1":
            formula.add_clause(out)
            continue
        k = cell.num_inputs
        lvars = [formula.var(s + suffix) for s in cell.address_lines()]
        on_cubes, off_cubes = _cube_templates(k, cell.init)
        for cubes, polarity in ((on_cubes, out), (off_cubes, -out)):
            for cube in cubes:
                clause = [polarity]
                for pos, ch in enumerate(cube):
                    lv = lvars[k - 1 - pos]
                    if ch == "1":
                        clause.append(-lv)
                    elif ch == "0":
                        clause.append(lv)
                formula.add_clause(*clause)


def _transition_clauses(formula, cell, t):
    """q at t+1 equals the captured value chosen by the reset pin at t."""
    q1 = formula.var(cell.output + f"@{t + 1}")
    d = formula.var(cell.pins["D"] + f"@{t}")
    r_net = cell.pins.get("R")
    if r_net is None:
        return [[-q1, d], [q1, -d]]
    r = formula.var(r_net + f"@{t}")
    if cell.reset_value == 1:
        return [[-r, q1], [-d, q1], [-q1, r, d]]
    return [[-q1, -r], [-q1, d], [r, -d, q1]]


class _DimacsSink:
    """Optional numbered CNF dumps for external solver cross-checks."""

    def __init__(self, directory):
        self.directory = directory
        self.count = 0
        if directory is not None:
            os.makedirs(directory, exist_ok=True)

    def write(self, formula, tag, assumptions=()):
        if self.directory is None:
            return
        text = formula.to_dimacs()
        if assumptions:
            lines = text.splitlines()
            head = lines[0].split()
            head[3] = str(int(head[3]) + len(assumptions))
            lines[0] = " ".join(head)
            lines.extend(f"{a} 0" for a in assumptions)
            text = "\n".join(lines) + "\n"
        path = os.path.join(self.directory, f"{self.count:03d}_{tag}.cnf")
        with open(path, "w") as fh:
            fh.write(text)
        self.count += 1


# ---------------------------------------------------------------------------
# results

@dataclass
class ProofRow:
    goal: str
    status: str                     # HOLDS | FAIL | UNKNOWN
    counterexample: dict | None = None

    def to_json_dict(self):
        return {"goal": self.goal, "status": self.status,
                "counterexample": self.counterexample}


@dataclass
class ProofResult:
    status: str                     # HOLDS | FAIL | UNKNOWN
    rows: list = field(default_factory=list)
    counterexample: dict | None = None      # support assignment
    sequence: ReplaySequence | None = None  # input path from reset
    violation_frame: int | None = None
    conflicts: int = 0
    decisions: int = 0

    def to_json_dict(self):
        seq = None
        if self.sequence is not None:
            seq = {"inputs": self.sequence.inputs,
                   "initial_state": self.sequence.initial_state}
        return {
            "status": self.status,
            "rows": [r.to_json_dict() for r in self.rows],
            "counterexample": self.counterexample,
            "sequence": seq,
            "violation_frame": self.violation_frame,
            "conflicts": self.conflicts,
            "decisions": self.decisions,
        }


@dataclass
class ProofChainStep:
    index: int
    goal: str
    status: str                     # FAIL | HOLDS | UNKNOWN
    counterexample: dict | None
    pi_part: dict
    state_part: dict

    def to_json_dict(self):
        return {"step": self.index, "goal": self.goal, "status": self.status,
                "counterexample": self.counterexample,
                "inputs": self.pi_part, "state": self.state_part}


@dataclass
class TriggerCondition:
    """Concrete activation recipe: per-cycle input bits plus the register
    contents required at cycle 0 (empty when any power-on state works)."""
    inputs: list
    initial_state: dict = field(default_factory=dict)
    violation_cycle: int = 0

    def to_replay(self) -> ReplaySequence:
        return ReplaySequence(inputs=[dict(d) for d in self.inputs],
                              initial_state=dict(self.initial_state))

    def to_json_dict(self):
        return {"inputs": self.inputs, "initial_state": self.initial_state,
                "violation_cycle": self.violation_cycle}


@dataclass
class ChainResult:
    steps: list
    status: str                     # TRIGGER | HOLDS | UNKNOWN
    trigger: TriggerCondition | None = None
    note: str = ""

    def to_json_dict(self):
        return {
            "status": self.status,
            "steps": [s.to_json_dict() for s in self.steps],
            "trigger": None if self.trigger is None else self.trigger.to_json_dict(),
            "note": self.note,
        }


# ---------------------------------------------------------------------------
# combinational proofs

def _support_assignment(result, formula, support):
    return {s: int(result.model[formula.names[s]]) for s in support}


def _lit_txt(name, bit):
    return name if bit else f"~{name}"


def _cube_fixed(prop, cube):
    """(line net, required bit) pairs, descending line order like the
    rendered assertion."""
    k = len(prop.lines)
    return [(prop.lines[k - 1 - pos], int(ch))
            for pos, ch in enumerate(cube) if ch != "-"]


def prove_combinational(n: Netlist, prop,
                        max_conflicts=DEFAULT_MAX_CONFLICTS,
                        dimacs_dir=None) -> ProofResult:
    """Check a property over the cone of its signals with registers free.

    Constant assertions become one satisfiability query on the negation.
    Never-assertions are checked literal by literal, each literal challenged
    while the remaining cube literals are pinned to their active values, and
    one row is reported per literal. HOLDS means the queried violation is
    unsatisfiable for every choice of register contents; FAIL carries an
    assignment of the cone support.
    """
    mod = _flat_module(n)
    sink = _DimacsSink(dimacs_dir)

    if isinstance(prop, ConstantProperty):
        if prop.value not in (0, 1):
            raise ProveError(f"constant property value {prop.value!r} not boolean")
        cells, support, _free = _cones(mod, [prop.signal])
        formula = CnfFormula()
        _declare(formula, support)
        _encode_cells(formula, cells)
        v = formula.var(prop.signal)
        formula.add_clause(v if prop.value == 0 else -v)
        sink.write(formula, "constant")
        res = sat_check(formula, max_conflicts=max_conflicts)
        goal = f"prove ({prop.signal} == {prop.value})"
        out = ProofResult(res.status, conflicts=res.conflicts,
                          decisions=res.decisions)
        if res.status == "SAT":
            cex = _support_assignment(res, formula, support)
            out.status = "FAIL"
            out.counterexample = cex
            out.rows.append(ProofRow(goal, "FAIL", cex))
        elif res.status == "UNSAT":
            out.status = "HOLDS"
            out.rows.append(ProofRow(goal, "HOLDS"))
        else:
            out.rows.append(ProofRow(goal, "UNKNOWN"))
        return out

    if not isinstance(prop, NeverProperty):
        raise ProveError(f"unsupported property type {type(prop).__name__}")

    nets = [name for cube in prop.cubes for name, _ in _cube_fixed(prop, cube)]
    cells, support, _free = _cones(mod, nets)
    formula = CnfFormula()
    _declare(formula, support)
    _encode_cells(formula, cells)

    out = ProofResult("HOLDS")
    for cube in prop.cubes:
        fixed = _cube_fixed(prop, cube)
        cube_failed = False
        for i, (name, bit) in enumerate(fixed):
            others = [(nm, b) for j, (nm, b) in enumerate(fixed) if j != i]
            assumptions = []
            for nm, b in fixed:
                lv = formula.var(nm)
                assumptions.append(lv if b else -lv)
            goal = f"prove ({_lit_txt(name, bit)} == 0)"
            if others:
                goal += " with " + ", ".join(f"{nm} = {b}" for nm, b in others)
            sink.write(formula, "literal", assumptions)
            res = sat_check(formula, assumptions=assumptions,
                            max_conflicts=max_conflicts)
            out.conflicts += res.conflicts
            out.decisions += res.decisions
            if res.status == "SAT":
                cex = _support_assignment(res, formula, support)
                out.rows.append(ProofRow(goal, "FAIL", cex))
                if not cube_failed:
                    cube_failed = True
                    out.status = "FAIL"
                    if out.counterexample is None:
                        out.counterexample = cex
            elif res.status == "UNSAT":
                out.rows.append(ProofRow(goal, "HOLDS"))
            else:
                out.rows.append(ProofRow(goal, "UNKNOWN"))
                if out.status == "HOLDS":
                    out.status = "UNKNOWN"
    return out


# ---------------------------------------------------------------------------
# register-boundary backtrace

def _violation_goal(prop):
    if isinstance(prop, ConstantProperty):
        if prop.value not in (0, 1):
            raise ProveError(f"constant property value {prop.value!r} not boolean")
        want = {prop.signal: 1 - prop.value}
        text = f"prove ({prop.signal} == {prop.value})"
        return [(text, want)]
    if isinstance(prop, NeverProperty):
        goals = []
        k = len(prop.lines)
        for cube in prop.cubes:
            fixed = _cube_fixed(prop, cube)
            expr = " & ".join(_lit_txt(nm, b) for nm, b in fixed)
            goals.append((f"prove ({expr} == 0)", dict(fixed)))
        return goals
    raise ProveError(f"unsupported property type {type(prop).__name__}")


def _capture_clauses(formula, cell, value):
    """Clauses forcing a register to capture ``value`` from its D/R cone."""
    d = formula.var(cell.pins["D"])
    d_lit = d if value else -d
    r_net = cell.pins.get("R")
    if r_net is None:
        return [[d_lit]]
    r = formula.var(r_net)
    if cell.reset_value == value:
        return [[r, d_lit]]
    return [[-r], [d_lit]]


def backtrace_chain(n: Netlist, prop, max_depth=16,
                    max_conflicts=DEFAULT_MAX_CONFLICTS,
                    dimacs_dir=None) -> ChainResult:
    """Turn a combinational FAIL into an input-only activation sequence.

    Step 0 asks for any violation of the property with registers free. While
    the witness pins register outputs, the next step asks whether that exact
    register state can be produced one cycle earlier (again with the still
    earlier registers free). The chain ends when a witness no longer touches
    register outputs: reading the steps backwards, the per-cycle input parts
    form the activation sequence, which is replayed through the simulator
    before being reported. A step that comes back unsatisfiable proves the
    property for that path; exhausting ``max_depth`` returns UNKNOWN with
    the partial chain.

    Multi-cube never-assertions are chained cube by cube; the first cube
    whose chain does not hold decides the result.
    """
    mod = _flat_module(n)
    drivers = mod.driver_map()
    clk = clock_net(mod)
    pis = set(mod.input_bits())
    sink = _DimacsSink(dimacs_dir)

    held_steps = []
    for start_text, start_want in _violation_goal(prop):
        steps = []
        goal_text = start_text
        want = dict(start_want)     # net -> value required this cycle
        is_violation_step = True
        while len(steps) < max_depth:
            if is_violation_step:
                cone_nets = sorted(want)
            else:
                cone_nets = []
                for qnet in sorted(want):
                    cell = drivers[qnet]
                    cone_nets.append(cell.pins["D"])
                    if cell.pins.get("R") is not None:
                        cone_nets.append(cell.pins["R"])
            cells, support, _free = _cones(mod, cone_nets)
            formula = CnfFormula()
            _declare(formula, support)
            _encode_cells(formula, cells)
            if is_violation_step:
                for nm in sorted(want):
                    lv = formula.var(nm)
                    formula.add_clause(lv if want[nm] else -lv)
            else:
                for qnet in sorted(want):
                    for cl in _capture_clauses(formula, drivers[qnet], want[qnet]):
                        formula.add_clause(*cl)
            sink.write(formula, f"chain{len(steps)}")
            res = sat_check(formula, max_conflicts=max_conflicts)
            if res.status == "UNKNOWN":
                steps.append(ProofChainStep(len(steps), goal_text, "UNKNOWN",
                                            None, {}, {}))
                return ChainResult(steps, "UNKNOWN",
                                   note="solver budget exhausted")
            if res.status == "UNSAT":
                steps.append(ProofChainStep(len(steps), goal_text, "HOLDS",
                                            None, {}, {}))
                break
            cex = _support_assignment(res, formula, support)
            state_part = {}
            pi_part = {}
            for s, v in cex.items():
                cell = drivers.get(s)
                if cell is not None and cell.kind == "DFF":
                    state_part[s] = v
                elif s in pis and s != clk:
                    pi_part[s] = v
            steps.append(ProofChainStep(len(steps), goal_text, "FAIL",
                                        cex, pi_part, state_part))
            if not state_part:
                trigger = TriggerCondition(
                    inputs=[dict(st.pi_part) for st in reversed(steps)],
                    initial_state={},
                    violation_cycle=len(steps) - 1)
                if _replay_confirms(n, prop, trigger):
                    return ChainResult(steps, "TRIGGER", trigger)
                return ChainResult(
                    steps, "UNKNOWN",
                    note="input-only witness did not replay (x-valued nets); withheld")
            want = state_part
            goal_text = ("prove state {" +
                         ", ".join(f"{s} = {v}" for s, v in sorted(state_part.items())) +
                         "} cannot arise one cycle earlier")
            is_violation_step = False
        else:
            steps.append(ProofChainStep(len(steps), goal_text, "UNKNOWN",
                                        None, {}, {}))
            return ChainResult(
                steps, "UNKNOWN",
                note=f"no input-only witness within {max_depth} register steps")
        held_steps.extend(steps)

    for i, s in enumerate(held_steps):
        s.index = i
    return ChainResult(held_steps, "HOLDS")


def _violated_at(trace, prop, t):
    if isinstance(prop, ConstantProperty):
        return trace.value_at(prop.signal, t) == 1 - prop.value
    for cube in prop.cubes:
        if all(trace.value_at(nm, t) == b for nm, b in _cube_fixed(prop, cube)):
            return True
    return False


def _replay_confirms(n, prop, trigger):
    try:
        trace = replay(n, trigger.to_replay())
    except SimulationError:
        return False
    return _violated_at(trace, prop, trigger.violation_cycle)


# ---------------------------------------------------------------------------
# bounded unrolling from reset

def _assert_violation(formula, prop, suffix):
    if isinstance(prop, ConstantProperty):
        v = formula.var(prop.signal + suffix)
        formula.add_clause(v if prop.value == 0 else -v)
        return
    fixed_sets = [_cube_fixed(prop, cube) for cube in prop.cubes]
    if len(fixed_sets) == 1:
        for nm, b in fixed_sets[0]:
            lv = formula.var(nm + suffix)
            formula.add_clause(lv if b else -lv)
        return
    selectors = []
    for fs in fixed_sets:
        sel = formula.new_var()
        selectors.append(sel)
        for nm, b in fs:
            lv = formula.var(nm + suffix)
            formula.add_clause(-sel, lv if b else -lv)
    formula.add_clause(*selectors)


def prove_bmc(n: Netlist, prop, k, reset="free",
              max_conflicts=DEFAULT_MAX_CONFLICTS,
              dimacs_dir=None) -> ProofResult:
    """Ask for a property violation within ``k`` clock frames of reset.

    Registers with a reset pin start at their declared reset value. The
    ``reset`` policy decides the rest: "free" leaves them open (the witness
    then carries the required power-on contents), "zero" pins them low.
    Frames are tried in increasing depth, so a FAIL carries the shortest
    activation sequence; it is replayed in the simulator before being
    returned. HOLDS is a bounded claim: no violation within k frames.
    """
    mod = _flat_module(n)
    if k <= 0:
        raise ProveError("frame count must be positive")
    if reset not in ("free", "zero"):
        raise ProveError(f"unknown reset policy {reset!r}")
    clk = clock_net(mod)
    pis = [s for s in mod.input_bits() if s != clk]
    comb = [c for c in mod.cells if c.kind != "DFF"]
    dffs = [c for c in mod.cells if c.kind == "DFF"]
    sink = _DimacsSink(dimacs_dir)
    total_conflicts = total_decisions = 0

    for j in range(k):
        formula = CnfFormula()
        for t in range(j + 1):
            _declare(formula, pis, f"@{t}")
            _encode_cells(formula, comb, f"@{t}")
        for t in range(j):
            for cell in dffs:
                for cl in _transition_clauses(formula, cell, t):
                    formula.add_clause(*cl)
        for cell in dffs:
            q0 = formula.var(cell.output + "@0")
            if cell.pins.get("R") is not None:
                formula.add_clause(q0 if cell.reset_value else -q0)
            elif reset == "zero":
                formula.add_clause(-q0)
        _assert_violation(formula, prop, f"@{j}")
        sink.write(formula, f"frame{j}")
        res = sat_check(formula, max_conflicts=max_conflicts)
        total_conflicts += res.conflicts
        total_decisions += res.decisions
        if res.status == "UNKNOWN":
            return ProofResult(
                "UNKNOWN",
                rows=[ProofRow(f"violation within {j + 1} frame(s)", "UNKNOWN")],
                conflicts=total_conflicts, decisions=total_decisions)
        if res.status == "SAT":
            named = res.named_model(formula)
            inputs = [
                {pi: int(named.get(f"{pi}@{t}", False)) for pi in pis}
                for t in range(j + 1)
            ]
            init = {}
            for cell in dffs:
                if cell.pins.get("R") is not None:
                    init[cell.output] = cell.reset_value
                elif reset == "zero":
                    init[cell.output] = 0
                else:
                    init[cell.output] = int(named.get(cell.output + "@0", False))
            seq = ReplaySequence(inputs=inputs, initial_state=init)
            trace = replay(n, seq)
            if not _violated_at(trace, prop, j):
                raise ProveError(
                    f"frame {j} witness did not replay; design has x-valued "
                    "gaps (floating nets in the property cone?)")
            return ProofResult(
                "FAIL",
                rows=[ProofRow(f"violation at frame {j}", "FAIL")],
                sequence=seq, violation_frame=j,
                conflicts=total_conflicts, decisions=total_decisions)
    return ProofResult(
        "HOLDS",
        rows=[ProofRow(f"no violation within {k} frame(s)", "HOLDS")],
        conflicts=total_conflicts, decisions=total_decisions)
