"""End-to-end run from netlist to verdict.

One invocation chains the whole flow: simulate under a growing stimulus
budget until the suspect sets stop moving, turn whatever never moved into
assertions, prove or refute each one (refutations are chased across register
boundaries until they become concrete activation sequences), rewrite every
under-exercised LUT so its dark entries become inert, then demonstrate the
rewrite is invisible on exercised behavior and that the recovered activation
no longer fires. Every stage leaves a hashed artifact behind, and a single
seed drives all randomness, so a run is reproducible from its config alone.
"""

import json
import os
from dataclasses import dataclass, field

from .analysis import AnalysisError, converge
from .netlist import NetlistError, emit_netlist, flatten, parse_netlist
from .properties import (ConstantProperty, NeverProperty, emit_blif, emit_sva,
                         manifest_dict, properties_from_analysis)
from .prove import ProveError, backtrace_chain, prove_combinational
from .reconfig import (ReconfigError, apply_plan, build_plan,
                       equivalence_check, verify_mitigation)
from .report import (ArtifactWriter, ReportError, convergence_csv,
                     convergence_figure, coverage_csv, coverage_figure,
                     file_link, mitigation_figure, render_text_report,
                     switching_csv)
from .sat import DEFAULT_MAX_CONFLICTS
from .sim import SimulationError

DEFAULT_SCHEDULE = (10, 100, 1000, 10000)


class PipelineError(Exception):
    """Unusable input or setup; carries the intended process exit code."""

    def __init__(self, message, exit_code=2):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class PipelineConfig:
    netlist: str
    out_dir: str = "lutscope-out"
    seed: int = 0
    schedule: tuple = DEFAULT_SCHEDULE
    stability: int = 2
    max_conflicts: int = DEFAULT_MAX_CONFLICTS
    depth: int = 16                 # register boundaries to chase a witness
    roles: str = None               # port-role sidecar path
    random_cycles: int = 1000       # mitigation comparison budget


@dataclass
class PipelineResult:
    exit_code: int
    report: dict
    out_dir: str


def load_netlist(path):
    """Read, parse and flatten; any failure is an input error (exit 2)."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise PipelineError(f"cannot read netlist {path}: {e.strerror or e}")
    try:
        return flatten(parse_netlist(text))
    except NetlistError as e:
        raise PipelineError(f"{path}: {e}")


def load_roles(path):
    """Port-role sidecar: clock/reset identification plus port grouping."""
    try:
        with open(path) as f:
            roles = json.load(f)
    except OSError as e:
        raise PipelineError(f"cannot read roles file {path}: {e.strerror or e}")
    except json.JSONDecodeError as e:
        raise PipelineError(f"roles file {path} is not valid JSON: {e}")
    if not isinstance(roles, dict):
        raise PipelineError(f"roles file {path} must hold a JSON object")
    return roles


def reset_from_roles(roles):
    """(port, cycles, active) tuple for the simulator, or None."""
    if not roles or "reset" not in roles or roles["reset"] is None:
        return None
    r = roles["reset"]
    try:
        return (r["port"], int(r["cycles"]), int(r["active"]))
    except (TypeError, KeyError) as e:
        raise PipelineError(f"roles reset entry needs port/cycles/active: {e}")


def _proof_entries(n, props, depth, max_conflicts):
    """Prove every extracted property; constants are chased into activation
    sequences, coverage assertions are settled over their cones."""
    proofs = []
    triggers = []
    unknowns = 0
    for p in props:
        if isinstance(p, ConstantProperty):
            chain = backtrace_chain(n, p, max_depth=depth,
                                    max_conflicts=max_conflicts)
            entry = {"kind": "constant", "signal": p.signal,
                     "method": "state-backtrace"}
            entry.update(chain.to_json_dict())
            if chain.status == "TRIGGER":
                triggers.append((p.signal, chain.trigger))
            elif chain.status == "UNKNOWN":
                unknowns += 1
        else:
            res = prove_combinational(n, p, max_conflicts=max_conflicts)
            entry = {"kind": "never", "cell": p.cell, "method": "cone-sat"}
            entry.update(res.to_json_dict())
            if res.status == "UNKNOWN":
                unknowns += 1
        proofs.append(entry)
    return proofs, triggers, unknowns


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    w = ArtifactWriter(cfg.out_dir)
    n = load_netlist(cfg.netlist)
    netlist_link = file_link(cfg.netlist)
    links = {"netlist": netlist_link}

    roles = load_roles(cfg.roles) if cfg.roles else None
    reset = reset_from_roles(roles)

    try:
        rep = converge(n, cfg.seed, cfg.schedule, m=cfg.stability, reset=reset)
    except (AnalysisError, SimulationError) as e:
        raise PipelineError(str(e))
    conv = rep.to_json_dict()
    conv["links"] = links
    w.write_json("convergence.json", conv)
    w.write_text("convergence.csv", convergence_csv(rep))
    w.write_text("switching.csv", switching_csv(rep.final))
    w.write_text("coverage.csv", coverage_csv(rep.final))
    w.write_figure("convergence.png", convergence_figure(rep))
    if rep.final.low_coverage:
        w.write_figure("coverage.png", coverage_figure(rep.final))

    cells_by_name = {c.name: c for c in n.top_module.cells}
    props = properties_from_analysis(rep.final, cells_by_name)
    pj = manifest_dict(props)
    pj["links"] = links
    w.write_json("properties.json", pj)
    w.write_text("properties.sva", "".join(emit_sva(p) for p in props))
    for p in props:
        if isinstance(p, NeverProperty):
            cover = rep.final.low_coverage[p.cell]
            w.write_text(f"blif/{p.cell}.blif",
                         emit_blif(cells_by_name[p.cell], cover))

    try:
        proofs, triggers, unknowns = _proof_entries(
            n, props, cfg.depth, cfg.max_conflicts)
    except ProveError as e:
        raise PipelineError(str(e))
    w.write_json("proof.json", {"results": proofs, "links": links})
    if triggers:
        sig, trig = triggers[0]
        tj = {"signal": sig, "links": links}
        tj.update(trig.to_json_dict())
        w.write_json("trigger.json", tj)

    # patch every LUT whose table was only partly exercised
    coverage = dict(rep.final.low_coverage)
    never_by_cell = {p.cell: p for p in props
                     if isinstance(p, NeverProperty)}
    findings = [
        {"cell": cell,
         "uncovered_entries": len(rep.final.uncovered(cell)),
         "assert": never_by_cell[cell].sva_lines()[-1]
         if cell in never_by_cell else None}
        for cell in sorted(coverage)
    ]
    patched = None
    if coverage:
        plan = build_plan(n, coverage, findings=findings)
        patched = apply_plan(n, plan)
        plan_obj = json.loads(plan.to_json())
        plan_obj["links"] = links
        w.write_json("plan.json", plan_obj)
        w.write_text("patched.v", emit_netlist(patched))
        plan_cells = [e.cell for e in plan.entries]
    else:
        plan_cells = []

    eq = None
    if patched is not None:
        eq = {}
        for mode, care in (("care", coverage), ("full", None)):
            try:
                r = equivalence_check(n, patched, care=care,
                                      max_conflicts=cfg.max_conflicts)
                eq[mode] = r.to_json_dict()
            except ReconfigError as e:
                eq[mode] = {"status": "UNKNOWN",
                            "mode": "care-set-restricted" if care else "full",
                            "note": str(e)}
                unknowns += 1
        eqj = dict(eq)
        eqj["links"] = links
        w.write_json("equivalence.json", eqj)

    mit_d = None
    if triggers and patched is not None:
        sig, trig = triggers[0]
        try:
            mit = verify_mitigation(n, patched, trig, sig,
                                    random_cycles=cfg.random_cycles,
                                    seed=cfg.seed, reset=reset)
        except (ReconfigError, SimulationError) as e:
            raise PipelineError(str(e))
        mit_d = mit.to_json_dict()
        mj = dict(mit_d)
        mj["links"] = links
        w.write_json("mitigation.json", mj)
        w.write_figure("mitigation.png", mitigation_figure(mit))

    confirmed = bool(triggers)
    if confirmed:
        names = ", ".join(s for s, _ in triggers)
        exit_code = 3
        headline = (f"confirmed: activation sequence for {names} "
                    f"recovered and replayed")
        if mit_d is not None and mit_d["passed"]:
            headline += "; patch neutralizes it"
    elif unknowns:
        exit_code = 4
        headline = f"inconclusive: {unknowns} obligation(s) hit the effort cap"
    elif plan_cells:
        exit_code = 0
        headline = (f"no activation recoverable; {len(plan_cells)} "
                    f"under-exercised LUT(s) neutralized")
    else:
        exit_code = 0
        headline = "clean: no specious signals or LUTs"

    report = {
        "netlist": netlist_link,
        "seed": cfg.seed,
        "config": {
            "schedule": list(cfg.schedule),
            "stability": cfg.stability,
            "max_conflicts": cfg.max_conflicts,
            "depth": cfg.depth,
            "random_cycles": cfg.random_cycles,
            "roles": os.path.basename(cfg.roles) if cfg.roles else None,
        },
        "converged": conv["converged"],
        "history": conv["history"],
        "low_switching": conv["low_switch"],
        "low_coverage": conv["low_coverage"],
        "properties": manifest_dict(props),
        "proofs": proofs,
        "plan": {"cells": plan_cells, "entries": len(plan_cells)},
        "equivalence": eq,
        "mitigation": mit_d,
        "verdict": {
            "exit_code": exit_code,
            "trojan_confirmed": confirmed,
            "trigger_signals": [s for s, _ in triggers],
            "unknowns": unknowns,
            "headline": headline,
        },
        "artifacts": dict(w.hashes),
    }
    w.write_json("report.json", report)
    w.write_text("report.txt", render_text_report(report))
    return PipelineResult(exit_code=exit_code, report=report,
                          out_dir=w.directory)
