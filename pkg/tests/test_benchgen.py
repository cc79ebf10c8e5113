import json
import random
from itertools import product

import pytest

from lutscope.analysis import REASON_CANDIDATE, converge
from lutscope.benchgen import (
    BenchError,
    gen_counter_lock,
    gen_pattern_lock,
    gen_sdc_pair,
    generate,
)
from lutscope.netlist import emit_netlist, parse_netlist
from lutscope.properties import ConstantProperty, extract_coverage
from lutscope.prove import prove_bmc, prove_combinational
from lutscope.sim import ReplaySequence, Stimulus, replay, simulate

from helpers import eval_cone


# -- determinism and shape ----------------------------------------------------


def test_generation_is_deterministic():
    for gen in (lambda: gen_pattern_lock(16, 0xA5C3, 9),
                lambda: gen_counter_lock(4, 11, 2),
                lambda: gen_sdc_pair(4)):
        n1, t1 = gen()
        n2, t2 = gen()
        assert emit_netlist(n1) == emit_netlist(n2)
        assert t1 == t2


def test_different_seeds_differ():
    a, _ = gen_pattern_lock(8, 0x5A, 1)
    b, _ = gen_pattern_lock(8, 0x5A, 2)
    assert emit_netlist(a) != emit_netlist(b)


def test_emitted_text_parses_back():
    for n, _ in (gen_pattern_lock(8, 0xA5, 3), gen_counter_lock(3, 7, 3),
                 gen_sdc_pair(3)):
        text = emit_netlist(n)
        assert emit_netlist(parse_netlist(text)) == text


def test_ground_truth_is_json_serializable_with_required_keys():
    for _, truth in (gen_pattern_lock(8, 0xA5, 3), gen_counter_lock(3, 7, 3),
                     gen_sdc_pair(3)):
        for key in ("archetype", "trigger", "payload_cells",
                    "expected_low_coverage_cells", "roles"):
            assert key in truth
        json.dumps(truth)


def test_generate_dispatch():
    n, truth = generate("pattern-lock", width=4, trigger=0x9, seed=0)
    assert truth["archetype"] == "pattern-lock"
    n, truth = generate("counter-lock", width=3, trigger=5, seed=0)
    assert truth["trigger"]["threshold"] == 5
    n, truth = generate("sdc-pair", seed=0)
    assert truth["archetype"] == "sdc-pair"
    with pytest.raises(BenchError, match="archetype"):
        generate("ring-oscillator")
    with pytest.raises(BenchError, match="needs"):
        generate("pattern-lock", width=4)


# -- pattern lock -------------------------------------------------------------


def test_pattern_lock_rejects_bad_parameters():
    with pytest.raises(BenchError):
        gen_pattern_lock(0, 0, 1)
    with pytest.raises(BenchError):
        gen_pattern_lock(33, 0, 1)
    with pytest.raises(BenchError, match="fit"):
        gen_pattern_lock(4, 0x10, 1)


def test_pattern_lock_activation_replays():
    n, truth = gen_pattern_lock(8, 0xA5, 7)
    act = truth["trigger"]["activation"]
    trace = replay(n, ReplaySequence(inputs=act["inputs"],
                                     initial_state=act["initial_state"]))
    vc = act["violation_cycle"]
    assert trace.value_at("trig", vc) == 1
    # the replay drives data to 0 after the pattern, so the leaked word is
    # the hidden constant itself
    hidden = int(truth["hidden_constant_hex"], 16)
    word = sum(trace.value_at(f"y[{i}]", vc) << i for i in range(8))
    assert word == hidden


def test_pattern_lock_stays_quiet_without_the_pattern():
    n, truth = gen_pattern_lock(8, 0xA5, 11)
    rng = random.Random(99)
    data = []
    for _ in range(1000):
        v = rng.getrandbits(8)
        data.append(v if v != 0xA5 else v ^ 1)
    rst = [1, 1] + [0] * 998
    stim = Stimulus(ports={"data": data, "rst": rst}, length=1000)
    trace = simulate(n, stim)
    assert all(trace.value_at("trig", t) != 1 for t in range(1000))
    assert all(trace.value_at("trig", t) == 0 for t in range(3, 1000))


def test_pattern_lock_detection_sets():
    n, truth = gen_pattern_lock(16, 0x3CA7, 5)
    report = converge(n, seed=1, schedule=[10, 100, 1000, 10000], m=2,
                      reset=("rst", 2, 1))
    assert report.converged
    final = report.final
    assert final.low_switching_set == {"match", "trig"}
    for reason, value in final.low_switching.values():
        assert reason == REASON_CANDIDATE and value == 0
    assert set(truth["expected_low_coverage_cells"]) <= final.low_coverage_set
    # the payload LUTs never see the trigger high: upper address half dark
    for cell in truth["payload_cells"]:
        assert final.low_coverage[cell] == 0x3


def test_pattern_lock_odd_width():
    n, truth = gen_pattern_lock(5, 0x15, 3)
    act = truth["trigger"]["activation"]
    trace = replay(n, ReplaySequence(inputs=act["inputs"], initial_state={}))
    assert trace.value_at("trig", act["violation_cycle"]) == 1


# -- counter lock -------------------------------------------------------------


def test_counter_lock_rejects_bad_parameters():
    with pytest.raises(BenchError):
        gen_counter_lock(0, 0, 1)
    with pytest.raises(BenchError):
        gen_counter_lock(13, 0, 1)
    with pytest.raises(BenchError, match="threshold"):
        gen_counter_lock(3, 8, 1)


def test_counter_counts_up_from_reset():
    n, _ = gen_counter_lock(4, 9, 1)
    seq = ReplaySequence(inputs=[{"rst": 1}] + [{}] * 12, initial_state={})
    trace = replay(n, seq)
    for t in range(1, 13):
        count = sum(trace.value_at(f"count[{i}]", t) << i for i in range(4))
        assert count == (t - 1) % 16


def test_counter_lock_fires_at_the_planted_frame():
    n, truth = gen_counter_lock(3, 7, 2)
    prop = ConstantProperty("trig", 0)
    res = prove_bmc(n, prop, k=8)
    assert res.status == "FAIL"
    assert res.violation_frame == truth["trigger"]["violation_frame"] == 7
    assert prove_bmc(n, prop, k=7).status == "HOLDS"

    act = truth["trigger"]["activation"]
    trace = replay(n, ReplaySequence(inputs=act["inputs"], initial_state={}))
    assert trace.value_at("trig", act["violation_cycle"]) == 1


def test_counter_lock_threshold_zero_fires_immediately():
    n, truth = gen_counter_lock(3, 0, 5)
    res = prove_bmc(n, ConstantProperty("trig", 0), k=1)
    assert res.status == "FAIL" and res.violation_frame == 0
    act = truth["trigger"]["activation"]
    trace = replay(n, ReplaySequence(inputs=act["inputs"], initial_state={}))
    assert trace.value_at("trig", act["violation_cycle"]) == 1


def test_counter_lock_single_bit():
    n, truth = gen_counter_lock(1, 1, 4)
    res = prove_bmc(n, ConstantProperty("trig", 0), k=2)
    assert res.status == "FAIL" and res.violation_frame == 1


# -- sdc pair -----------------------------------------------------------------


def test_sdc_pair_is_unsatisfiable_by_construction():
    n, truth = gen_sdc_pair(4)
    mod = n.top_module
    dc1, dc2 = truth["trigger"]["dc_pair"]
    for a, b in product(range(2), repeat=2):
        env = {"d_q[0]": a, "d_q[1]": b}
        assert not (eval_cone(mod, dc1, dict(env))
                    and eval_cone(mod, dc2, dict(env)))


def test_sdc_pair_switching_hides_and_coverage_flags():
    n, truth = gen_sdc_pair(6)
    report = converge(n, seed=2, schedule=[10, 50, 100, 500, 1000], m=2,
                      reset=("rst", 2, 1))
    assert report.converged
    final = report.final
    assert not final.low_switching_set & {"dc1", "dc2"}
    assert final.low_coverage_set == set(truth["expected_low_coverage_cells"])
    for cell in truth["payload_cells"]:
        assert final.low_coverage[cell] == 0x0FFF
        assert final.uncovered(cell) == [12, 13, 14, 15]


def test_sdc_pair_toggles_frequently():
    n, truth = gen_sdc_pair(8)
    mod = n.top_module
    clk = "clk"
    from lutscope.sim import random_stimulus
    widths = {p.name: p.width for p in mod.ports
              if p.direction == "input" and p.name != clk}
    stim = random_stimulus(3, widths, 5000, reset=("rst", 2, 1))
    trace = simulate(n, stim)
    per = trace.per_signal()
    for sig in truth["trigger"]["dc_pair"]:
        flips = sum(1 for (_, a), (_, b) in zip(per[sig], per[sig][1:])
                    if {a, b} == {0, 1})
        assert flips >= 100


def test_sdc_pair_property_proves_out():
    n, truth = gen_sdc_pair(5)
    cells = {c.name: c for c in n.top_module.cells}
    prop = extract_coverage(cells["pay4"], 0x0FFF)
    assert prop.cubes == ["11--"]
    res = prove_combinational(n, prop)
    assert res.status == "HOLDS"
    assert [row.status for row in res.rows] == ["HOLDS", "HOLDS"]


def test_sdc_pair_payload_leaks_key_under_forced_pair():
    # drive the registers directly into the unreachable state: the payload
    # must hand the key bit through, which is what the patch later removes
    n, _ = gen_sdc_pair(7)
    state = {"d_q[0]": 1, "d_q[1]": 1}
    for i in range(2, 8):
        state[f"d_q[{i}]"] = 0
    for i in range(8):
        state[f"k_q[{i}]"] = 1
    trace = replay(n, ReplaySequence(inputs=[{}], initial_state=state))
    for i in range(2, 8):
        assert trace.value_at(f"y[{i}]", 0) == 1  # k_q[i], not clean[i]
