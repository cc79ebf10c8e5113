"""Trace analysis: low-switching signals and low-coverage LUTs.

A signal counts as switching only when the trace shows it at 0 and at 1
somewhere (in either order); transitions into or out of X/Z do not count, so
stuck-at-constant and high-impedance signals stay in the low-switching set and
are tagged with a reason. A LUT address is covered when, at the end of some
settled time step, every address line is a definite 0/1 and they encode that
address; the fully-resolved state at time step 0 counts. Low coverage means at
least one of the 2^k table entries was never addressed.

``converge`` grows the trace along a length schedule (same seed, so each run
extends the previous one) and reports when both result sets stop changing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .netlist import Netlist, clock_net
from .sim import EventTrace, X, random_stimulus, simulate

REASON_CONSTANT = "constant"
REASON_HIGH_Z = "high-z"
REASON_CANDIDATE = "candidate-trigger"


class AnalysisError(Exception):
    pass


@dataclass
class AnalysisResult:
    """Low-switching signals (with triage reason and final value) and
    low-coverage LUTs (cell name -> cover bitvector)."""
    low_switching: dict
    low_coverage: dict
    lut_shapes: dict          # cell name -> (k, init) for every LUT analyzed
    trace_length: int
    signal_count: int
    lut_count: int

    @property
    def low_switching_set(self):
        return set(self.low_switching)

    @property
    def low_coverage_set(self):
        return set(self.low_coverage)

    def uncovered(self, cell):
        """Sorted list of never-addressed table indices for a low LUT."""
        k, _ = self.lut_shapes[cell]
        cover = self.low_coverage[cell]
        return [i for i in range(1 << k) if not (cover >> i) & 1]

    def to_json_dict(self):
        low_switch = [
            {"signal": s, "reason": r, "value": v}
            for s, (r, v) in sorted(self.low_switching.items())
        ]
        low_cov = []
        for cell in sorted(self.low_coverage):
            k, init = self.lut_shapes[cell]
            cover = self.low_coverage[cell]
            digits = max(1, (1 << k) // 4)
            low_cov.append({
                "cell": cell,
                "k": k,
                "init_hex": f"{init:0{digits}x}",
                "cover_hex": f"{cover:0{digits}x}",
                "uncovered_count": (1 << k) - bin(cover).count("1"),
            })
        return {
            "trace_len": self.trace_length,
            "signal_count": self.signal_count,
            "lut_count": self.lut_count,
            "low_switch": low_switch,
            "low_coverage": low_cov,
        }


@dataclass
class ConvergenceReport:
    schedule: list
    history: list             # (length, |S|, |L|) per schedule entry
    converged: bool
    final: AnalysisResult

    def to_json_dict(self):
        d = self.final.to_json_dict()
        d["schedule"] = list(self.schedule)
        d["history"] = [
            {"length": l, "low_switch_count": s, "low_coverage_count": c}
            for l, s, c in self.history
        ]
        d["converged"] = self.converged
        return d


def analysis_from_json_dict(d) -> AnalysisResult:
    """Inverse of AnalysisResult.to_json_dict for consuming saved runs."""
    low_switching = {e["signal"]: (e["reason"], e["value"])
                     for e in d["low_switch"]}
    low_coverage = {}
    lut_shapes = {}
    for e in d["low_coverage"]:
        low_coverage[e["cell"]] = int(e["cover_hex"], 16)
        lut_shapes[e["cell"]] = (e["k"], int(e["init_hex"], 16))
    return AnalysisResult(
        low_switching=low_switching, low_coverage=low_coverage,
        lut_shapes=lut_shapes, trace_length=d["trace_len"],
        signal_count=d["signal_count"], lut_count=d["lut_count"],
    )


class _Walker:
    """Incremental trace analysis; snapshots are whole AnalysisResults, so one
    long simulation serves every prefix length of a schedule."""

    def __init__(self, n: Netlist):
        if not n.is_flat:
            raise AnalysisError("netlist must be flattened before analysis")
        mod = n.top_module
        self.mod = mod
        self.clock = clock_net(mod)
        self.universe = [s for s in mod.signals() if s != self.clock]
        sigset = set(self.universe)
        self.luts = [c for c in mod.cells if c.is_lut]
        self.values = {s: X for s in self.universe}
        self.seen0 = set()
        self.seen1 = set()
        self.cover = {c.name: 0 for c in self.luts}
        self.full = {c.name: (1 << c.init_width) - 1 for c in self.luts}
        self.lut_shapes = {c.name: (c.num_inputs, c.init) for c in self.luts}
        self.by_name = {c.name: c for c in self.luts}
        self.watch = {}       # signal -> LUT cells reading it
        for c in self.luts:
            for sig in c.address_lines():
                self.watch.setdefault(sig, []).append(c)
        # triage tags for signals that end up unswitched
        self.const_driven = set()
        for c in mod.cells:
            if c.kind in ("CONST0", "CONST1"):
                self.const_driven.add(c.output)
            elif c.is_lut and c.init in (0, self.full[c.name]):
                self.const_driven.add(c.output)
        driven = {c.output for c in mod.cells} | set(mod.input_bits())
        self.undriven = sigset - driven
        self.steps_done = 0

    def _sample(self, cells):
        for c in cells:
            addr = 0
            ok = True
            for i, sig in enumerate(c.address_lines()):
                v = self.values.get(sig, X)
                if v == 1:
                    addr |= 1 << i
                elif v != 0:
                    ok = False
                    break
            if ok:
                self.cover[c.name] |= 1 << addr

    def feed(self, grouped_events, upto):
        """Consume events grouped per time step for steps [steps_done, upto)."""
        for t in range(self.steps_done, upto):
            affected = set()
            for _, sig, v in grouped_events.get(t, ()):
                self.values[sig] = v
                if v == 0:
                    self.seen0.add(sig)
                elif v == 1:
                    self.seen1.add(sig)
                for c in self.watch.get(sig, ()):
                    affected.add(c.name)
            if t == 0:
                self._sample(self.luts)
            else:
                self._sample([self.by_name[nm] for nm in affected])
        self.steps_done = upto

    def snapshot(self):
        switched = self.seen0 & self.seen1
        low = {}
        for s in self.universe:
            if s in switched:
                continue
            if s in self.const_driven:
                reason = REASON_CONSTANT
            elif s in self.undriven:
                reason = REASON_HIGH_Z
            else:
                reason = REASON_CANDIDATE
            # the observation is the one resolved value the signal ever took
            # (a signal wandering between 0 and X still reads as constant 0)
            if s in self.seen0:
                obs = 0
            elif s in self.seen1:
                obs = 1
            else:
                obs = self.values[s]
            low[s] = (reason, obs)
        low_cov = {
            name: cov for name, cov in self.cover.items()
            if cov != self.full[name]
        }
        return AnalysisResult(
            low_switching=low,
            low_coverage=low_cov,
            lut_shapes=dict(self.lut_shapes),
            trace_length=self.steps_done,
            signal_count=len(self.universe),
            lut_count=len(self.luts),
        )


def _group_events(trace: EventTrace):
    grouped = {}
    for ev in trace.events:
        grouped.setdefault(ev[0], []).append(ev)
    return grouped


def analyze(n: Netlist, trace: EventTrace) -> AnalysisResult:
    """One-shot analysis of a complete trace."""
    w = _Walker(n)
    known = set(n.top_module.signals())
    for sig in trace.signals:
        if sig not in known:
            raise AnalysisError(f"trace signal {sig!r} not present in netlist")
    w.feed(_group_events(trace), trace.length)
    return w.snapshot()


def converge(n: Netlist, seed, schedule, m=2, reset=None) -> ConvergenceReport:
    """Run the analysis over a strictly increasing trace-length schedule.

    The stimulus at each length extends the previous one (same seed,
    cycle-major draws), so the whole schedule is served by one simulation at
    the longest length, snapshotting the walker at each intermediate length.
    Converged means the last ``m`` schedule entries produced identical
    low-switching sets and identical low-coverage cell sets.
    """
    schedule = list(schedule)
    if not schedule:
        raise AnalysisError("empty convergence schedule")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise AnalysisError("schedule lengths must be strictly increasing")
    if schedule[0] < 0:
        raise AnalysisError("schedule lengths must be non-negative")

    mod = n.top_module
    clk = clock_net(mod)
    widths = {
        p.name: p.width for p in mod.ports
        if p.direction == "input" and p.name != clk
    }
    stim = random_stimulus(seed, widths, schedule[-1], reset=reset)
    trace = simulate(n, stim)
    grouped = _group_events(trace)

    w = _Walker(n)
    history = []
    snaps = []
    for length in schedule:
        w.feed(grouped, length)
        snap = w.snapshot()
        snaps.append(snap)
        history.append((length, len(snap.low_switching), len(snap.low_coverage)))

    tail = snaps[-m:] if m > 0 else []
    converged = (
        len(snaps) >= m and m > 0
        and all(s.low_switching_set == tail[0].low_switching_set for s in tail)
        and all(s.low_coverage_set == tail[0].low_coverage_set for s in tail)
    )
    return ConvergenceReport(
        schedule=schedule, history=history, converged=converged, final=snaps[-1]
    )
