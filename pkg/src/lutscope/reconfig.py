"""LUT truth-table patching and the checks that make it safe to deploy.

The patch rule is bitwise: the new initialization vector is the old one
XNORed with the address-coverage mask, so every table entry whose address
was exercised keeps its value and every unexercised entry is flipped. A
signal that only goes active under an unexercised address combination is
thereby frozen at its observed level, while covered behavior is untouched.

Two independent checks follow. equivalence_check builds per-output and
per-register-next-state miters between the two netlists (registers paired
by name, their contents ranging freely) and asks the solver for any
assignment that separates them; in care-set mode each patched LUT's address
lines are confined to the covered combinations, under which the patch is an
identity. verify_mitigation replays a recovered activation sequence on both
netlists, expecting only the original to fire, then drives both with the
same long random stimulus and compares outputs everywhere the original
trigger stays quiet.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .netlist import Netlist, clock_net
from .properties import minimize_minterms
from .prove import _cones, _declare, _encode_cells
from .sat import DEFAULT_MAX_CONFLICTS, CnfFormula, sat_check
from .sim import (ReplaySequence, SimulationError, random_stimulus, replay,
                  simulate)


class ReconfigError(Exception):
    pass


def _top(n: Netlist):
    if not n.is_flat:
        raise ReconfigError("netlist must be flattened first")
    return n.top_module


# ---------------------------------------------------------------------------
# the patch rule

def reconfigure_init(init: int, coverage: int, width: int) -> int:
    """Bitwise XNOR of a truth table with its coverage mask.

    Entries whose coverage bit is 1 keep their value; entries never
    addressed are flipped. ``width`` is the table size and must be a power
    of two; both values must fit in it.
    """
    if width < 1 or width & (width - 1):
        raise ReconfigError(f"table width {width} is not a power of two")
    mask = (1 << width) - 1
    for label, value in (("init", init), ("coverage", coverage)):
        if not 0 <= value <= mask:
            raise ReconfigError(
                f"{label} value {value:#x} does not fit a {width}-entry table")
    return ~(init ^ coverage) & mask


@dataclass(frozen=True)
class PlanEntry:
    cell: str
    old_init: int
    coverage: int
    new_init: int
    width: int

    def to_json_dict(self):
        digits = max(1, self.width // 4)
        return {
            "cell": self.cell,
            "old_init_hex": format(self.old_init, f"0{digits}x"),
            "coverage_hex": format(self.coverage, f"0{digits}x"),
            "new_init_hex": format(self.new_init, f"0{digits}x"),
        }


@dataclass
class ReconfigPlan:
    """Per-cell INIT replacements plus the findings that motivated them."""
    entries: list
    findings: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(
            {"entries": [e.to_json_dict() for e in self.entries],
             "findings": self.findings},
            indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        entries = []
        for e in d["entries"]:
            entries.append(PlanEntry(
                cell=e["cell"],
                old_init=int(e["old_init_hex"], 16),
                coverage=int(e["coverage_hex"], 16),
                new_init=int(e["new_init_hex"], 16),
                width=4 * len(e["old_init_hex"]),
            ))
        return cls(entries=entries, findings=d.get("findings", []))


def build_plan(n: Netlist, coverage: dict, findings=()) -> ReconfigPlan:
    """Plan patches for the named LUTs given their covered-address masks."""
    cells = {c.name: c for c in _top(n).cells}
    entries = []
    for name in sorted(coverage):
        cell = cells.get(name)
        if cell is None:
            raise ReconfigError(f"no cell named {name!r}")
        if not cell.is_lut:
            raise ReconfigError(
                f"cell {name!r} is a {cell.kind}; only LUTs are patchable")
        width = cell.init_width
        new = reconfigure_init(cell.init, coverage[name], width)
        entries.append(PlanEntry(cell=name, old_init=cell.init,
                                 coverage=coverage[name], new_init=new,
                                 width=width))
    return ReconfigPlan(entries=entries, findings=list(findings))


def apply_plan(n: Netlist, plan: ReconfigPlan) -> Netlist:
    """New netlist with the planned INITs swapped in; ``n`` is untouched."""
    cells = {c.name: c for c in _top(n).cells}
    seen = set()
    for e in plan.entries:
        if e.cell in seen:
            raise ReconfigError(f"plan lists cell {e.cell!r} twice")
        seen.add(e.cell)
        cell = cells.get(e.cell)
        if cell is None:
            raise ReconfigError(f"no cell named {e.cell!r}")
        if not cell.is_lut:
            raise ReconfigError(
                f"cell {e.cell!r} is a {cell.kind}; only LUTs are patchable")
        if cell.init != e.old_init:
            raise ReconfigError(
                f"stale plan: cell {e.cell!r} has INIT {cell.init:#x}, "
                f"plan expected {e.old_init:#x}")
        if reconfigure_init(e.old_init, e.coverage, cell.init_width) != e.new_init:
            raise ReconfigError(
                f"plan entry for {e.cell!r} does not follow the patch rule")
    patched = copy.deepcopy(n)
    by_name = {c.name: c for c in patched.top_module.cells}
    for e in plan.entries:
        by_name[e.cell].init = e.new_init
    return patched


# ---------------------------------------------------------------------------
# equivalence

@dataclass
class EquivResult:
    status: str          # EQUIVALENT | INEQUIVALENT
    mode: str            # full | care-set-restricted
    target: str = None   # output bit or register whose function separated
    vector: dict = None  # boundary assignment showing the difference
    checked: int = 0     # miters decided

    def to_json_dict(self):
        d = {"status": self.status, "mode": self.mode, "checked": self.checked}
        if self.status == "INEQUIVALENT":
            d["target"] = self.target
            d["vector"] = self.vector
        return d


def _check_interfaces(amod, bmod):
    aports = {(p.name, p.direction, p.msb, p.lsb) for p in amod.ports}
    bports = {(p.name, p.direction, p.msb, p.lsb) for p in bmod.ports}
    if aports != bports:
        odd = sorted(aports ^ bports)[0]
        raise ReconfigError(f"port mismatch between netlists (near {odd[0]!r})")
    aregs = {c.output for c in amod.cells if c.kind == "DFF"}
    bregs = {c.output for c in bmod.cells if c.kind == "DFF"}
    if aregs != bregs:
        odd = sorted(aregs ^ bregs)[0]
        raise ReconfigError(f"register mismatch between netlists (near {odd!r})")


def _next_state_var(formula, cell, tag):
    """Variable holding the register's captured value: the reset level wins
    while its line is high, otherwise the data input passes through."""
    ns = formula.var(f"next({cell.output}){tag}")
    d = formula.var(cell.pins["D"] + tag)
    if "R" not in cell.pins:
        formula.add_clause(-ns, d)
        formula.add_clause(ns, -d)
        return ns
    r = formula.var(cell.pins["R"] + tag)
    if cell.reset_value:
        formula.add_clause(-ns, r, d)
        formula.add_clause(ns, -r)
        formula.add_clause(ns, -d)
    else:
        formula.add_clause(-ns, -r)
        formula.add_clause(-ns, d)
        formula.add_clause(ns, r, -d)
    return ns


def _restrict_addresses(formula, mod, care, tag):
    """Confine each care cell's address lines to its covered combinations."""
    cells = {c.name: c for c in mod.cells}
    for name in sorted(care):
        cell = cells.get(name)
        if cell is None:
            raise ReconfigError(f"care set names unknown cell {name!r}")
        if not cell.is_lut:
            raise ReconfigError(f"care set cell {name!r} is not a LUT")
        k = cell.num_inputs
        size = 1 << k
        mask = care[name]
        if not 0 <= mask < (1 << size):
            raise ReconfigError(
                f"care mask for {name!r} does not fit a {size}-entry table")
        if mask == (1 << size) - 1:
            continue
        lvars = [formula.var(s + tag) for s in cell.address_lines()]
        blocked = [m for m in range(size) if not (mask >> m) & 1]
        for cube in minimize_minterms(k, blocked):
            clause = []
            for pos, ch in enumerate(cube):
                lv = lvars[k - 1 - pos]
                if ch == "1":
                    clause.append(-lv)
                elif ch == "0":
                    clause.append(lv)
            if clause:
                formula.add_clause(*clause)
            else:
                # empty care set admits no address at all
                dead = formula.var(f"care({name}){tag}")
                formula.add_clause(dead)
                formula.add_clause(-dead)


def _miter(amod, bmod, kind, name, care, max_conflicts):
    """SAT query for one target; a model is a separating boundary assignment."""
    formula = CnfFormula()
    tops = []
    supports = []
    for tag, mod in (("@a", amod), ("@b", bmod)):
        if kind == "output":
            nets = [name]
        else:
            cell = next(c for c in mod.cells
                        if c.kind == "DFF" and c.output == name)
            nets = [cell.pins["D"]]
            if "R" in cell.pins:
                nets.append(cell.pins["R"])
        cells, support, _free = _cones(mod, nets)
        _declare(formula, support, tag)
        _encode_cells(formula, cells, tag)
        if care:
            _restrict_addresses(formula, mod, care, tag)
        tops.append(formula.var(name + tag) if kind == "output"
                    else _next_state_var(formula, cell, tag))
        supports.append(support)
    boundary = sorted(set(supports[0]) | set(supports[1]))
    for s in boundary:
        va, vb = formula.var(s + "@a"), formula.var(s + "@b")
        formula.add_clause(-va, vb)
        formula.add_clause(va, -vb)
    ta, tb = tops
    formula.add_clause(ta, tb)
    formula.add_clause(-ta, -tb)
    result = sat_check(formula, max_conflicts=max_conflicts)
    if result.status == "UNKNOWN":
        raise ReconfigError(
            f"equivalence miter for {name!r} exceeded the conflict budget")
    if result.status == "UNSAT":
        return None
    named = result.named_model(formula)
    return {s: int(named.get(s + "@a", False)) for s in boundary}


def _confirm_vector(a, b, kind, target, vector):
    """Dual-simulate a separating assignment; raise unless it reproduces."""
    amod = a.top_module
    qnets = {c.output for c in amod.cells if c.kind == "DFF"}
    inputs = set(amod.input_bits()) - {clock_net(amod)}
    state = {s: v for s, v in vector.items() if s in qnets}
    drive = {s: v for s, v in vector.items() if s in inputs}
    loose = set(vector) - set(state) - set(drive)
    if loose:
        raise ReconfigError(
            "separating assignment depends on nets simulation cannot drive "
            f"({sorted(loose)[0]!r}); result withheld")
    steps = [dict(drive)] + ([{}] if kind == "register" else [])
    seq = ReplaySequence(inputs=steps, initial_state=state)
    try:
        ta = replay(a, seq)
        tb = replay(b, seq)
    except SimulationError as exc:
        raise ReconfigError(f"separating assignment did not replay: {exc}")
    t = 0 if kind == "output" else 1
    va, vb = ta.value_at(target, t), tb.value_at(target, t)
    if va not in (0, 1) or vb not in (0, 1) or va == vb:
        raise ReconfigError(
            f"separating assignment for {target!r} did not reproduce "
            f"in simulation ({va} vs {vb}); result withheld")


def equivalence_check(a: Netlist, b: Netlist, care=None,
                      max_conflicts=DEFAULT_MAX_CONFLICTS) -> EquivResult:
    """Prove two netlists agree on every output and register next-state.

    Register contents range freely and are paired by name, so EQUIVALENT
    covers operation from any shared starting state. ``care`` maps cell
    names to covered-address masks; when given, each listed cell's address
    lines are confined to the covered combinations on both sides. Any
    separating assignment is dual-simulated before it is returned.
    """
    amod, bmod = _top(a), _top(b)
    _check_interfaces(amod, bmod)
    mode = "care-set-restricted" if care else "full"
    targets = [("output", o) for o in amod.output_bits()]
    for cell in sorted((c for c in amod.cells if c.kind == "DFF"),
                       key=lambda c: c.output):
        targets.append(("register", cell.output))
    checked = 0
    for kind, name in targets:
        vector = _miter(amod, bmod, kind, name, care, max_conflicts)
        if vector is not None:
            _confirm_vector(a, b, kind, name, vector)
            return EquivResult(status="INEQUIVALENT", mode=mode, target=name,
                               vector=vector, checked=checked + 1)
        checked += 1
    return EquivResult(status="EQUIVALENT", mode=mode, checked=checked)


# ---------------------------------------------------------------------------
# mitigation

@dataclass
class MitigationReport:
    passed: bool
    inconclusive: bool
    trigger_signal: str
    violation_cycle: int
    original_trigger: int        # trigger value at the violation cycle
    patched_trigger: int
    replay_divergence: list      # output bits differing under the activation
    random_cycles: int
    random_seed: int
    excluded_cycles: int         # original trigger active: payload at work
    x_cycles: int                # differences involving x values, set aside
    mismatches: int              # binary output disagreements, these fail
    first_mismatch: dict = None
    patched_fired: int = 0       # random cycles with the patched trigger high
    notes: list = field(default_factory=list)
    original_trace: object = field(default=None, repr=False, compare=False)
    patched_trace: object = field(default=None, repr=False, compare=False)

    def to_json_dict(self):
        return {
            "passed": self.passed,
            "inconclusive": self.inconclusive,
            "trigger_signal": self.trigger_signal,
            "violation_cycle": self.violation_cycle,
            "original_trigger": self.original_trigger,
            "patched_trigger": self.patched_trigger,
            "replay_divergence": self.replay_divergence,
            "random_cycles": self.random_cycles,
            "random_seed": self.random_seed,
            "excluded_cycles": self.excluded_cycles,
            "x_cycles": self.x_cycles,
            "mismatches": self.mismatches,
            "first_mismatch": self.first_mismatch,
            "patched_fired": self.patched_fired,
            "notes": self.notes,
        }


def verify_mitigation(original: Netlist, patched: Netlist, trigger,
                      trigger_signal: str, random_cycles=1000, seed=0,
                      reset=None) -> MitigationReport:
    """Replay an activation sequence on both netlists, then compare them
    under long random stimulus.

    Passes when the original fires the trigger, the patch keeps it quiet,
    and both agree on every output at every random cycle where the original
    trigger is inactive. Cycles where it is active show the payload by
    design and are reported separately; so are differences involving
    x values, which come from unknown power-on state rather than logic
    (supply ``reset`` as (port, cycles, active_level) to flush them).
    """
    if not hasattr(trigger, "to_replay"):
        raise ReconfigError("trigger must be a replayable activation recipe")
    seq = trigger.to_replay()
    vc = trigger.violation_cycle
    if not 0 <= vc < len(seq.inputs):
        raise ReconfigError(
            f"violation cycle {vc} lies outside the {len(seq.inputs)}-step sequence")
    mod = _top(original)
    _top(patched)
    if trigger_signal not in set(mod.signals()):
        raise ReconfigError(f"no signal named {trigger_signal!r}")

    try:
        ta = replay(original, seq)
        tb = replay(patched, seq)
    except SimulationError as exc:
        raise ReconfigError(f"activation sequence did not replay: {exc}")
    orig_v = ta.value_at(trigger_signal, vc)
    pat_v = tb.value_at(trigger_signal, vc)
    outs = mod.output_bits()
    divergence = [o for o in outs
                  if ta.value_at(o, vc) != tb.value_at(o, vc)]

    notes = []
    if orig_v != 1:
        notes.append("original did not activate under the supplied sequence; "
                     "mitigation inconclusive")

    clock = clock_net(mod)
    widths = {p.name: p.width for p in mod.ports
              if p.direction == "input" and p.name != clock}
    stim = random_stimulus(seed, widths, random_cycles, reset=reset)
    ra = simulate(original, stim)
    rb = simulate(patched, stim)
    excluded = x_cycles = mismatches = patched_fired = 0
    first = None
    for t in range(random_cycles):
        if rb.value_at(trigger_signal, t) == 1:
            patched_fired += 1
        if ra.value_at(trigger_signal, t) == 1:
            excluded += 1
            continue
        x_here = False
        for o in outs:
            va, vb = ra.value_at(o, t), rb.value_at(o, t)
            if va == vb:
                continue
            if va in (0, 1) and vb in (0, 1):
                mismatches += 1
                if first is None:
                    first = {"cycle": t, "signal": o,
                             "original": va, "patched": vb}
            else:
                x_here = True
        if x_here:
            x_cycles += 1
    if excluded:
        notes.append(f"random stimulus activated the original trigger in "
                     f"{excluded} cycle(s); outputs there show the payload "
                     f"and were excluded from the comparison")
    if x_cycles:
        notes.append(f"{x_cycles} cycle(s) differ only through x values from "
                     f"unknown power-on state; supply a reset to flush them")
    if patched_fired:
        notes.append(f"patched trigger still fired in {patched_fired} "
                     f"random cycle(s)")

    inconclusive = orig_v != 1
    passed = (orig_v == 1 and pat_v == 0 and mismatches == 0
              and patched_fired == 0)
    return MitigationReport(
        passed=passed, inconclusive=inconclusive,
        trigger_signal=trigger_signal, violation_cycle=vc,
        original_trigger=orig_v, patched_trigger=pat_v,
        replay_divergence=divergence, random_cycles=random_cycles,
        random_seed=seed, excluded_cycles=excluded, x_cycles=x_cycles,
        mismatches=mismatches, first_mismatch=first,
        patched_fired=patched_fired, notes=notes,
        original_trace=ta, patched_trace=tb)
