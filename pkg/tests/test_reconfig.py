import random

import pytest

from lutscope.netlist import emit_netlist, parse_netlist, clock_net
from lutscope.netlist import Cell, Module, NetDecl, Netlist, Port
from lutscope.properties import ConstantProperty
from lutscope.prove import TriggerCondition, backtrace_chain
from lutscope.reconfig import (
    EquivResult,
    PlanEntry,
    ReconfigError,
    ReconfigPlan,
    apply_plan,
    build_plan,
    equivalence_check,
    reconfigure_init,
    verify_mitigation,
)
from lutscope.sim import ReplaySequence, replay


# -- independent oracles -----------------------------------------------------


def xnor_oracle(init, coverage, width):
    """Patch rule recomputed one table entry at a time."""
    out = 0
    for m in range(width):
        a = (init >> m) & 1
        b = (coverage >> m) & 1
        out |= (a == b) << m
    return out


def equivalence_oracle(a, b):
    """Exhaustive dual simulation over all input values and register states.

    Returns ("EQUIVALENT", None, None) or ("INEQUIVALENT", assignment, net)
    with the first output (cycle 0) or register next-state (cycle 1) that
    separates the pair. Independent of the cone/SAT machinery.
    """
    mod = a.top_module
    clock = clock_net(mod)
    pins = [s for s in mod.input_bits() if s != clock]
    qnets = sorted({c.output for c in mod.cells if c.kind == "DFF"})
    outs = mod.output_bits()
    width = len(pins) + len(qnets)
    assert width <= 12, "oracle is exhaustive, keep the boundary small"
    for m in range(1 << width):
        drive = {s: (m >> i) & 1 for i, s in enumerate(pins)}
        state = {s: (m >> (len(pins) + i)) & 1 for i, s in enumerate(qnets)}
        seq = ReplaySequence(inputs=[dict(drive), {}], initial_state=state)
        ta, tb = replay(a, seq), replay(b, seq)
        for o in outs:
            if ta.value_at(o, 0) != tb.value_at(o, 0):
                return "INEQUIVALENT", {**drive, **state}, o
        for q in qnets:
            if ta.value_at(q, 1) != tb.value_at(q, 1):
                return "INEQUIVALENT", {**drive, **state}, q
    return "EQUIVALENT", None, None


def clean_random_netlist(seed, n_cells=12, n_inputs=3):
    """Random acyclic netlist with every net driven and resettable state,
    so exhaustive dual simulation never meets an x value."""
    rng = random.Random(seed)
    ports = [Port(name="clk", direction="input"),
             Port(name="rst", direction="input")]
    avail = []
    for i in range(n_inputs):
        name = f"in{i}"
        ports.append(Port(name=name, direction="input"))
        avail.append(name)
    wires, cells = [], []
    for i in range(n_cells):
        out = f"n{i}"
        wires.append(NetDecl(name=out))
        if rng.random() < 0.3:
            pins = {"C": "clk", "R": "rst", "D": rng.choice(avail), "Q": out}
            cells.append(Cell(name=f"c{i}", kind="DFF", pins=pins,
                              reset_value=rng.randrange(2)))
        else:
            k = rng.randrange(1, 4)
            pins = {"O": out}
            for j in range(k):
                pins[f"I{j}"] = rng.choice(avail)
            cells.append(Cell(name=f"c{i}", kind=f"LUT{k}", pins=pins,
                              init=rng.getrandbits(1 << k)))
        avail.append(out)
    ports.append(Port(name="out", direction="output"))
    cells.append(Cell(name="obuf", kind="LUT1",
                      pins={"I0": avail[-1], "O": "out"}, init=0b10))
    mod = Module(name="rand", ports=ports, wires=wires, cells=cells)
    return Netlist(modules={"rand": mod}, top="rand")


# -- fixtures ----------------------------------------------------------------

ANDTOP = """\
module andtop(a, b, y);
  input a;
  input b;
  output y;

  LUT2 #(.INIT(4'h8)) g (.I0(a), .I1(b), .O(y));
endmodule
"""

PAY = """\
module pay(a, b, c, d, y);
  input a;
  input b;
  input c;
  input d;
  output y;

  LUT4 #(.INIT(16'haccc)) pay (.I0(a), .I1(b), .I2(c), .I3(d), .O(y));
endmodule
"""

RV0 = """\
module rv(clk, rst, d, q);
  input clk;
  input rst;
  input d;
  output q;

  DFF #(.RVAL(1'b0)) r0 (.C(clk), .R(rst), .D(d), .Q(q));
endmodule
"""

RV1 = RV0.replace("1'b0", "1'b1")

RVCOMB = """\
module rv(clk, rst, d, q);
  input clk;
  input rst;
  input d;
  output q;

  LUT2 #(.INIT(4'h2)) g (.I0(d), .I1(rst), .O(q));
endmodule
"""

# pattern lock with a visible payload: y = d_q xor trig, planted data 1010
LEAKLOCK = """\
module leaklock(clk, rst, data, y);
  input clk;
  input rst;
  input [3:0] data;
  output [3:0] y;
  wire [3:0] d_q;
  wire c0, c1, match, trig;

  DFF q0 (.C(clk), .R(rst), .D(data[0]), .Q(d_q[0]));
  DFF q1 (.C(clk), .R(rst), .D(data[1]), .Q(d_q[1]));
  DFF q2 (.C(clk), .R(rst), .D(data[2]), .Q(d_q[2]));
  DFF q3 (.C(clk), .R(rst), .D(data[3]), .Q(d_q[3]));
  LUT2 #(.INIT(4'h4)) cmp0 (.I0(d_q[0]), .I1(d_q[1]), .O(c0));
  LUT2 #(.INIT(4'h4)) cmp1 (.I0(d_q[2]), .I1(d_q[3]), .O(c1));
  LUT2 #(.INIT(4'h8)) mjoin (.I0(c0), .I1(c1), .O(match));
  DFF qt (.C(clk), .R(rst), .D(match), .Q(trig));
  LUT2 #(.INIT(4'h6)) p0 (.I0(d_q[0]), .I1(trig), .O(y[0]));
  LUT2 #(.INIT(4'h6)) p1 (.I0(d_q[1]), .I1(trig), .O(y[1]));
  LUT2 #(.INIT(4'h6)) p2 (.I0(d_q[2]), .I1(trig), .O(y[2]));
  LUT2 #(.INIT(4'h6)) p3 (.I0(d_q[3]), .I1(trig), .O(y[3]));
endmodule
"""


def nl(text):
    return parse_netlist(text)


# -- the patch rule ----------------------------------------------------------


def test_patch_rule_worked_example():
    assert reconfigure_init(0xACCC, 0x0FFF, 16) == 0x5CCC


def test_patch_rule_full_coverage_is_identity():
    rng = random.Random(7)
    for _ in range(20):
        init = rng.getrandbits(16)
        assert reconfigure_init(init, 0xFFFF, 16) == init


def test_patch_rule_empty_coverage_complements():
    assert reconfigure_init(0x0, 0x0, 4) == 0xF


def test_patch_rule_matches_bit_oracle():
    rng = random.Random(11)
    for _ in range(200):
        width = 1 << rng.randrange(1, 7)
        init = rng.getrandbits(width)
        cov = rng.getrandbits(width)
        assert reconfigure_init(init, cov, width) == xnor_oracle(init, cov, width)


def test_patch_rule_involution():
    rng = random.Random(13)
    for _ in range(100):
        width = 1 << rng.randrange(1, 7)
        init = rng.getrandbits(width)
        cov = rng.getrandbits(width)
        once = reconfigure_init(init, cov, width)
        assert reconfigure_init(once, cov, width) == init


def test_patch_rule_covered_bits_preserved():
    rng = random.Random(17)
    for _ in range(100):
        init = rng.getrandbits(16)
        cov = rng.getrandbits(16)
        new = reconfigure_init(init, cov, 16)
        for m in range(16):
            if (cov >> m) & 1:
                assert (new >> m) & 1 == (init >> m) & 1
            else:
                assert (new >> m) & 1 != (init >> m) & 1


def test_patch_rule_rejects_bad_arguments():
    with pytest.raises(ReconfigError):
        reconfigure_init(0, 0, 3)
    with pytest.raises(ReconfigError):
        reconfigure_init(16, 0, 4)
    with pytest.raises(ReconfigError):
        reconfigure_init(0, 16, 4)


# -- plans -------------------------------------------------------------------


def test_build_plan_computes_entries():
    plan = build_plan(nl(PAY), {"pay": 0x0FFF})
    assert plan.entries == [PlanEntry(cell="pay", old_init=0xACCC,
                                      coverage=0x0FFF, new_init=0x5CCC,
                                      width=16)]


def test_plan_json_round_trip():
    plan = build_plan(nl(PAY), {"pay": 0x0FFF}, findings=["pay: low coverage"])
    text = plan.to_json()
    entry = ReconfigPlan.from_json(text).entries[0]
    assert entry == plan.entries[0]
    assert ReconfigPlan.from_json(text).to_json() == text
    import json
    d = json.loads(text)
    assert d["entries"][0] == {"cell": "pay", "old_init_hex": "accc",
                               "coverage_hex": "0fff", "new_init_hex": "5ccc"}
    assert d["findings"] == ["pay: low coverage"]


def test_build_plan_rejects_unknown_and_non_lut():
    n = nl(LEAKLOCK)
    with pytest.raises(ReconfigError):
        build_plan(n, {"nosuch": 0x3})
    with pytest.raises(ReconfigError):
        build_plan(n, {"qt": 0x3})


def test_apply_plan_changes_only_the_init_literal():
    n = nl(LEAKLOCK)
    before = emit_netlist(n)
    patched = apply_plan(n, build_plan(n, {"mjoin": 0x7}))
    assert emit_netlist(n) == before  # original untouched
    old_lines = before.splitlines()
    new_lines = emit_netlist(patched).splitlines()
    diffs = [(a, b) for a, b in zip(old_lines, new_lines) if a != b]
    assert len(old_lines) == len(new_lines)
    assert len(diffs) == 1
    assert "mjoin" in diffs[0][0]
    assert "4'h8" in diffs[0][0] and "4'h0" in diffs[0][1]


def test_apply_empty_plan_is_isomorphic():
    n = nl(ANDTOP)
    patched = apply_plan(n, ReconfigPlan(entries=[]))
    assert patched is not n
    assert emit_netlist(patched) == emit_netlist(n)


def test_apply_plan_rejects_stale_and_broken_entries():
    n = nl(ANDTOP)
    stale = ReconfigPlan(entries=[PlanEntry("g", 0x9, 0x7, 0x1, 4)])
    with pytest.raises(ReconfigError, match="stale"):
        apply_plan(n, stale)
    broken = ReconfigPlan(entries=[PlanEntry("g", 0x8, 0x7, 0x1, 4)])
    with pytest.raises(ReconfigError, match="patch rule"):
        apply_plan(n, broken)
    twice = build_plan(n, {"g": 0x7})
    twice.entries = twice.entries * 2
    with pytest.raises(ReconfigError, match="twice"):
        apply_plan(n, twice)


# -- equivalence -------------------------------------------------------------


def test_netlist_is_equivalent_to_itself(fixture_text):
    n = nl(fixture_text("counter3.v"))
    res = equivalence_check(n, n)
    assert res.status == "EQUIVALENT"
    assert res.mode == "full"
    assert res.checked == 6  # three count bits, three registers


def test_patched_and_gate_separates_at_the_uncovered_address():
    n = nl(ANDTOP)
    patched = apply_plan(n, build_plan(n, {"g": 0x7}))
    verdict, assignment, net = equivalence_oracle(n, patched)
    assert (verdict, assignment, net) == ("INEQUIVALENT", {"a": 1, "b": 1}, "y")

    res = equivalence_check(n, patched)
    assert res.status == "INEQUIVALENT"
    assert res.mode == "full"
    assert res.target == "y"
    assert res.vector == {"a": 1, "b": 1}
    d = res.to_json_dict()
    assert d["vector"] == {"a": 1, "b": 1} and d["status"] == "INEQUIVALENT"


def test_care_set_mode_accepts_the_same_patch():
    n = nl(ANDTOP)
    patched = apply_plan(n, build_plan(n, {"g": 0x7}))
    res = equivalence_check(n, patched, care={"g": 0x7})
    assert res.status == "EQUIVALENT"
    assert res.mode == "care-set-restricted"


def test_register_miter_catches_trigger_patch():
    n = nl(LEAKLOCK)
    patched = apply_plan(n, build_plan(n, {"mjoin": 0x7}))
    res = equivalence_check(n, patched)
    assert res.status == "INEQUIVALENT"
    assert res.target == "trig"
    assert res.vector["d_q[0]"] == 0 and res.vector["d_q[1]"] == 1
    assert res.vector["d_q[2]"] == 0 and res.vector["d_q[3]"] == 1
    assert res.vector["rst"] == 0

    # replay the vector ourselves: the separated net is the captured state
    state = {k: v for k, v in res.vector.items() if k.startswith("d_q")}
    seq = ReplaySequence(inputs=[{"rst": 0}, {}], initial_state=state)
    assert replay(n, seq).value_at("trig", 1) == 1
    assert replay(patched, seq).value_at("trig", 1) == 0

    res = equivalence_check(n, patched, care={"mjoin": 0x7})
    assert res.status == "EQUIVALENT"


def test_reset_value_difference_is_caught():
    res = equivalence_check(nl(RV0), nl(RV1))
    assert res.status == "INEQUIVALENT"
    assert res.target == "q"
    assert res.vector["rst"] == 1


def test_interface_mismatches_are_rejected(fixture_text):
    with pytest.raises(ReconfigError, match="port"):
        equivalence_check(nl(ANDTOP), nl(nl_text := PAY))
    with pytest.raises(ReconfigError, match="register"):
        equivalence_check(nl(RV0), nl(RVCOMB))
    with pytest.raises(ReconfigError, match="flatten"):
        equivalence_check(nl(fixture_text("two_level.v")),
                          nl(fixture_text("two_level.v")))


def test_care_set_validation():
    n = nl(ANDTOP)
    with pytest.raises(ReconfigError, match="unknown cell"):
        equivalence_check(n, n, care={"nosuch": 0x3})
    with pytest.raises(ReconfigError, match="fit"):
        equivalence_check(n, n, care={"g": 0x100})


def test_empty_care_set_is_vacuously_equivalent():
    n = nl(ANDTOP)
    patched = apply_plan(n, build_plan(n, {"g": 0x0}))
    res = equivalence_check(n, patched, care={"g": 0x0})
    assert res.status == "EQUIVALENT"


def test_random_patches_against_exhaustive_oracle():
    rng = random.Random(101)
    decided = 0
    for seed in range(30):
        n = clean_random_netlist(seed)
        mod = n.top_module
        width = len(mod.input_bits()) - 1 + sum(
            1 for c in mod.cells if c.kind == "DFF")
        if width > 11:
            continue
        luts = [c for c in mod.cells if c.is_lut]
        cell = luts[rng.randrange(len(luts))]
        cov = rng.getrandbits(cell.init_width)
        if cov == (1 << cell.init_width) - 1:
            cov -= 1
        patched = apply_plan(n, build_plan(n, {cell.name: cov}))

        res = equivalence_check(n, patched)
        verdict, _, _ = equivalence_oracle(n, patched)
        assert res.status == verdict
        decided += 1

        # covered table entries never move, so the care-set check must hold
        new = patched.top_module.driver_map()[cell.output].init
        for m in range(cell.init_width):
            if (cov >> m) & 1:
                assert (new >> m) & 1 == (cell.init >> m) & 1
        care = equivalence_check(n, patched, care={cell.name: cov})
        assert care.status == "EQUIVALENT"
    assert decided > 20


# -- mitigation --------------------------------------------------------------


def lock_pair():
    n = nl(LEAKLOCK)
    patched = apply_plan(n, build_plan(n, {"mjoin": 0x7}))
    return n, patched


def lock_trigger(n):
    chain = backtrace_chain(n, ConstantProperty("trig", 0))
    assert chain.status == "TRIGGER"
    return chain.trigger


def test_mitigation_blocks_the_planted_lock():
    n, patched = lock_pair()
    trigger = lock_trigger(n)
    report = verify_mitigation(n, patched, trigger, "trig",
                               random_cycles=400, seed=5, reset=("rst", 2, 1))
    assert report.passed and not report.inconclusive
    assert report.original_trigger == 1
    assert report.patched_trigger == 0
    assert report.replay_divergence == ["y[0]", "y[1]", "y[2]", "y[3]"]
    assert report.mismatches == 0 and report.first_mismatch is None
    assert report.patched_fired == 0
    # random 4-bit data hits the planted pattern often; those cycles are
    # the payload firing, not a functional difference
    assert report.excluded_cycles > 0
    assert any("excluded" in note for note in report.notes)
    d = report.to_json_dict()
    assert d["passed"] is True and d["violation_cycle"] == 2
    assert "original_trace" not in d


def test_mitigation_without_reset_reports_x_cycles():
    n, patched = lock_pair()
    trigger = lock_trigger(n)
    # seed 0 leaves rst low on the first cycle, so the unknown power-on
    # state reaches the original trigger but not the patched constant
    report = verify_mitigation(n, patched, trigger, "trig",
                               random_cycles=200, seed=0)
    assert report.passed
    assert report.mismatches == 0
    assert report.x_cycles >= 1
    assert any("x values" in note for note in report.notes)


def test_mitigation_is_inconclusive_when_nothing_fires():
    n, patched = lock_pair()
    trigger = lock_trigger(n)
    # a lock that never matches: both sides already carry the patched LUT
    report = verify_mitigation(patched, patched, trigger, "trig",
                               random_cycles=50, seed=7, reset=("rst", 2, 1))
    assert not report.passed
    assert report.inconclusive
    assert report.original_trigger == 0
    assert any("did not activate" in note for note in report.notes)


def test_mitigation_validates_its_trigger():
    n, patched = lock_pair()
    with pytest.raises(ReconfigError, match="replayable"):
        verify_mitigation(n, patched, object(), "trig")
    bad = TriggerCondition(inputs=[{}], violation_cycle=3)
    with pytest.raises(ReconfigError, match="outside"):
        verify_mitigation(n, patched, bad, "trig")
    good = lock_trigger(n)
    with pytest.raises(ReconfigError, match="no signal"):
        verify_mitigation(n, patched, good, "nosuch")
    broken = TriggerCondition(inputs=[{"bogus": 1}, {}, {}], violation_cycle=2)
    with pytest.raises(ReconfigError, match="did not replay"):
        verify_mitigation(n, patched, broken, "trig")
