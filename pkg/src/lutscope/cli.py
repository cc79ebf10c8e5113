"""Command-line front end.

Each subcommand is one stage of the flow (simulate, analyze, converge,
extract, prove, patch, verify, bench); ``pipeline`` chains them all and
judges the outcome. Exit codes: 0 success, 1 usage, 2 unusable input,
3 pipeline confirmed a planted trigger, 4 an effort cap left a question
open (or a mitigation check did not pass).
"""

import argparse
import json
import os
import sys

from .analysis import AnalysisError, analysis_from_json_dict, analyze, converge
from .benchgen import ARCHETYPES, BenchError, generate
from .netlist import clock_net, emit_netlist
from .properties import (ConstantProperty, NeverProperty, PropertyError,
                         emit_blif, emit_sva, manifest_dict,
                         properties_from_analysis)
from .prove import ProveError, TriggerCondition
from .pipeline import (DEFAULT_SCHEDULE, PipelineConfig, PipelineError,
                       _proof_entries, load_netlist, load_roles,
                       reset_from_roles, run_pipeline)
from .reconfig import ReconfigError, apply_plan, build_plan, verify_mitigation
from .report import (ArtifactWriter, ReportError, check_link, convergence_csv,
                     convergence_figure, coverage_csv, coverage_figure,
                     file_link, load_json, mitigation_figure, sha256_text,
                     switching_csv)
from .sat import DEFAULT_MAX_CONFLICTS
from .sim import SimulationError, random_stimulus, simulate
from .vcd import VcdError, export_vcd, import_vcd

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_CONFIRMED = 3
EXIT_OPEN = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad argv; the exit-code table reserves 2 for bad
    # input files, so usage problems are remapped to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _any_int(text):
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")


def _schedule(text):
    try:
        parts = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"schedule must be comma-separated integers: {text!r}")
    if not parts:
        raise argparse.ArgumentTypeError("schedule is empty")
    return parts


def _seed_of(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("LUTSCOPE_SEED")
    if env is None:
        return 0
    try:
        return int(env, 0)
    except ValueError:
        raise PipelineError(f"LUTSCOPE_SEED is not an integer: {env!r}")


def _netlist_path(args):
    path = args.netlist_opt or args.netlist
    if path is None:
        raise PipelineError("a netlist file is required", EXIT_USAGE)
    if args.netlist_opt and args.netlist and args.netlist != args.netlist_opt:
        raise PipelineError(
            "netlist given both positionally and with --netlist", EXIT_USAGE)
    return path


def _maybe_check(d, key, path, what):
    links = d.get("links", {})
    if key in links:
        check_link(links[key], path, what)


def _stimulus_setup(args, mod):
    roles = load_roles(args.roles) if args.roles else None
    reset = reset_from_roles(roles)
    clk = clock_net(mod)
    widths = {p.name: p.width for p in mod.ports
              if p.direction == "input" and p.name != clk}
    return widths, reset


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_simulate(args):
    path = _netlist_path(args)
    n = load_netlist(path)
    widths, reset = _stimulus_setup(args, n.top_module)
    stim = random_stimulus(_seed_of(args), widths, args.cycles, reset=reset)
    try:
        trace = simulate(n, stim)
    except SimulationError as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    w.write_text("trace.vcd", export_vcd(trace, top_name=n.top_module.name))
    stim_obj = json.loads(stim.to_json())
    stim_obj["links"] = {"netlist": file_link(path)}
    w.write_json("stimulus.json", stim_obj)
    print(f"simulated {stim.length} cycles, {len(trace.events)} events "
          f"-> {w.directory}/trace.vcd")
    return EXIT_OK


def cmd_analyze(args):
    path = _netlist_path(args)
    n = load_netlist(path)
    try:
        with open(args.vcd) as f:
            vcd_text = f.read()
    except OSError as e:
        raise PipelineError(f"cannot read {args.vcd}: {e.strerror or e}")
    try:
        trace = import_vcd(vcd_text, netlist=n)
        result = analyze(n, trace)
    except (VcdError, AnalysisError) as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    d = result.to_json_dict()
    d["links"] = {"netlist": file_link(path), "vcd": file_link(args.vcd)}
    w.write_json("analysis.json", d)
    print(f"{len(result.low_switching)} low-switching signal(s), "
          f"{len(result.low_coverage)} low-coverage LUT(s) "
          f"-> {w.directory}/analysis.json")
    return EXIT_OK


def cmd_converge(args):
    path = _netlist_path(args)
    n = load_netlist(path)
    roles = load_roles(args.roles) if args.roles else None
    reset = reset_from_roles(roles)
    try:
        rep = converge(n, _seed_of(args), args.schedule, m=args.stability,
                       reset=reset)
    except (AnalysisError, SimulationError) as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    d = rep.to_json_dict()
    d["links"] = {"netlist": file_link(path)}
    w.write_json("convergence.json", d)
    w.write_text("convergence.csv", convergence_csv(rep))
    w.write_text("switching.csv", switching_csv(rep.final))
    w.write_text("coverage.csv", coverage_csv(rep.final))
    w.write_figure("convergence.png", convergence_figure(rep))
    if rep.final.low_coverage:
        w.write_figure("coverage.png", coverage_figure(rep.final))
    state = "converged" if rep.converged else "did not converge"
    print(f"{state} over schedule "
          f"{','.join(str(x) for x in args.schedule)}: "
          f"{len(rep.final.low_switching)} low-switching, "
          f"{len(rep.final.low_coverage)} low-coverage "
          f"-> {w.directory}/convergence.json")
    return EXIT_OK


def _load_analysis(args, path):
    d = load_json(args.analysis)
    _maybe_check(d, "netlist", path, os.path.basename(args.analysis))
    try:
        return analysis_from_json_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise PipelineError(f"{args.analysis} is not an analysis artifact: {e}")


def cmd_extract(args):
    path = _netlist_path(args)
    n = load_netlist(path)
    result = _load_analysis(args, path)
    cells_by_name = {c.name: c for c in n.top_module.cells}
    try:
        props = properties_from_analysis(result, cells_by_name)
    except KeyError as e:
        raise PipelineError(f"analysis names cell {e} not present in netlist")
    except PropertyError as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    links = {"netlist": file_link(path), "analysis": file_link(args.analysis)}
    pj = manifest_dict(props)
    pj["links"] = links
    w.write_json("properties.json", pj)
    w.write_text("properties.sva", "".join(emit_sva(p) for p in props))
    for p in props:
        if isinstance(p, NeverProperty):
            w.write_text(f"blif/{p.cell}.blif",
                         emit_blif(cells_by_name[p.cell],
                                   result.low_coverage[p.cell]))
    print(f"{len(props)} propert{'y' if len(props) == 1 else 'ies'} "
          f"-> {w.directory}/properties.json")
    return EXIT_OK


def _props_from_manifest(d):
    props = []
    try:
        for e in d["properties"]:
            if e["kind"] == "constant":
                props.append(ConstantProperty(signal=e["signal"],
                                              value=e["value"]))
            else:
                props.append(NeverProperty(cell=e["cell"], lines=e["lines"],
                                           cubes=e["cubes"]))
    except (KeyError, TypeError) as e:
        raise PipelineError(f"malformed property manifest: {e}")
    return props


def cmd_prove(args):
    path = _netlist_path(args)
    n = load_netlist(path)
    d = load_json(args.properties)
    _maybe_check(d, "netlist", path, os.path.basename(args.properties))
    props = _props_from_manifest(d)
    try:
        proofs, triggers, unknowns = _proof_entries(
            n, props, args.depth, args.max_conflicts)
    except ProveError as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    links = {"netlist": file_link(path),
             "properties": file_link(args.properties)}
    w.write_json("proof.json", {"results": proofs, "links": links})
    for entry in proofs:
        name = entry.get("signal") or entry.get("cell")
        print(f"{name}: {entry['status']}")
    if triggers:
        sig, trig = triggers[0]
        tj = {"signal": sig, "links": links}
        tj.update(trig.to_json_dict())
        w.write_json("trigger.json", tj)
        print(f"activation sequence for {sig} written to "
              f"{w.directory}/trigger.json")
    return EXIT_OPEN if unknowns else EXIT_OK


def cmd_patch(args):
    path = _netlist_path(args)
    n = load_netlist(path)
    result = _load_analysis(args, path)
    coverage = dict(result.low_coverage)
    if args.cells:
        wanted = args.cells.split(",")
        missing = [c for c in wanted if c not in coverage]
        if missing:
            raise PipelineError(
                f"no coverage recorded for cell(s): {', '.join(missing)}")
        coverage = {c: coverage[c] for c in wanted}
    findings = [{"cell": c, "uncovered_entries": len(result.uncovered(c))}
                for c in sorted(coverage)]
    try:
        plan = build_plan(n, coverage, findings=findings)
        patched = apply_plan(n, plan)
    except ReconfigError as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    plan_obj = json.loads(plan.to_json())
    plan_obj["links"] = {"netlist": file_link(path),
                         "analysis": file_link(args.analysis)}
    w.write_json("plan.json", plan_obj)
    w.write_text("patched.v", emit_netlist(patched))
    print(f"{len(plan.entries)} LUT(s) rewritten -> {w.directory}/patched.v")
    return EXIT_OK


def cmd_verify(args):
    original = load_netlist(args.original)
    patched = load_netlist(args.patched)
    d = load_json(args.trigger)
    _maybe_check(d, "netlist", args.original, os.path.basename(args.trigger))
    signal = args.signal or d.get("signal")
    if not signal:
        raise PipelineError(
            "no trigger signal: pass --signal or use a trigger artifact "
            "that names one", EXIT_USAGE)
    try:
        trig = TriggerCondition(inputs=d["inputs"],
                                initial_state=d.get("initial_state", {}),
                                violation_cycle=d["violation_cycle"])
    except (KeyError, TypeError) as e:
        raise PipelineError(f"malformed trigger artifact: {e}")
    roles = load_roles(args.roles) if args.roles else None
    reset = reset_from_roles(roles)
    try:
        mit = verify_mitigation(original, patched, trig, signal,
                                random_cycles=args.cycles,
                                seed=_seed_of(args), reset=reset)
    except (ReconfigError, SimulationError) as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    mj = mit.to_json_dict()
    mj["links"] = {"original": file_link(args.original),
                   "patched": file_link(args.patched),
                   "trigger": file_link(args.trigger)}
    w.write_json("mitigation.json", mj)
    w.write_figure("mitigation.png", mitigation_figure(mit))
    verdict = ("PASSED" if mit.passed
               else "INCONCLUSIVE" if mit.inconclusive else "FAILED")
    print(f"mitigation {verdict}: original trigger {mit.original_trigger}, "
          f"patched {mit.patched_trigger}, {mit.mismatches} mismatch(es) "
          f"over {mit.random_cycles} random cycles")
    for note in mit.notes:
        print(f"  note: {note}")
    return EXIT_OK if mit.passed else EXIT_OPEN


def cmd_bench(args):
    seed = _seed_of(args)
    if args.archetype == "pattern-lock":
        if args.width is None or args.pattern is None:
            raise PipelineError("pattern-lock needs --width and --pattern",
                                EXIT_USAGE)
        width, trigger = args.width, args.pattern
    elif args.archetype == "counter-lock":
        if args.width is None or args.threshold is None:
            raise PipelineError("counter-lock needs --width and --threshold",
                                EXIT_USAGE)
        width, trigger = args.width, args.threshold
    else:
        width, trigger = None, None
    try:
        n, truth = generate(args.archetype, width=width, trigger=trigger,
                            seed=seed)
    except BenchError as e:
        raise PipelineError(str(e))
    w = ArtifactWriter(args.out)
    text = emit_netlist(n)
    w.write_text("netlist.v", text)
    links = {"netlist": {"path": "netlist.v", "sha256": sha256_text(text)}}
    roles = dict(truth["roles"])
    roles["links"] = links
    w.write_json("roles.json", roles)
    tj = dict(truth)
    tj["links"] = links
    w.write_json("truth.json", tj)
    print(f"{args.archetype} fixture -> {w.directory}/netlist.v "
          f"(roles.json, truth.json alongside)")
    return EXIT_OK


def cmd_pipeline(args):
    path = _netlist_path(args)
    cfg = PipelineConfig(
        netlist=path, out_dir=args.out, seed=_seed_of(args),
        schedule=args.schedule, stability=args.stability,
        max_conflicts=args.max_conflicts, depth=args.depth,
        roles=args.roles, random_cycles=args.cycles,
    )
    res = run_pipeline(cfg)
    print(res.report["verdict"]["headline"])
    print(f"artifacts in {res.out_dir}/ (report.json, report.txt)")
    return res.exit_code


# ---------------------------------------------------------------------------
# parser

def _add_netlist(p):
    p.add_argument("netlist", nargs="?", help="netlist file")
    p.add_argument("--netlist", dest="netlist_opt", metavar="FILE",
                   help="netlist file (alternative to the positional)")


def _add_out(p, default="."):
    p.add_argument("-o", "--out", default=default, metavar="DIR",
                   help=f"output directory (default: {default})")


def _add_seed(p):
    p.add_argument("--seed", type=_any_int, default=None,
                   help="RNG seed (default: $LUTSCOPE_SEED, then 0)")


def _add_roles(p):
    p.add_argument("--roles", metavar="FILE",
                   help="port-role sidecar JSON (clock/reset/port groups)")


def build_parser():
    parser = _Parser(prog="lutscope",
                     description="Trace analysis, property proving and LUT "
                                 "patching for flat LUT+DFF netlists.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("simulate", help="random-simulate a netlist to VCD")
    _add_netlist(p)
    _add_seed(p)
    _add_roles(p)
    p.add_argument("--cycles", type=_any_int, default=1000)
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="switching/coverage analysis of a VCD")
    _add_netlist(p)
    p.add_argument("--vcd", required=True, metavar="FILE")
    _add_out(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("converge",
                       help="analysis over a growing stimulus schedule")
    _add_netlist(p)
    _add_seed(p)
    _add_roles(p)
    p.add_argument("--schedule", type=_schedule, default=DEFAULT_SCHEDULE,
                   metavar="N,N,...")
    p.add_argument("--stability", type=_any_int, default=2, metavar="M",
                   help="identical tail snapshots required to call it stable")
    _add_out(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("extract",
                       help="turn an analysis into assertions (SVA/BLIF)")
    _add_netlist(p)
    p.add_argument("--analysis", required=True, metavar="FILE")
    _add_out(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("prove", help="prove or refute extracted assertions")
    _add_netlist(p)
    p.add_argument("--properties", required=True, metavar="FILE")
    p.add_argument("--depth", type=_any_int, default=16,
                   help="register boundaries to chase a witness across")
    p.add_argument("--max-conflicts", type=_any_int,
                   default=DEFAULT_MAX_CONFLICTS)
    _add_out(p)
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("patch",
                       help="rewrite under-exercised LUTs from an analysis")
    _add_netlist(p)
    p.add_argument("--analysis", required=True, metavar="FILE")
    p.add_argument("--cells", metavar="A,B,...",
                   help="restrict the patch to these cells")
    _add_out(p)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("verify",
                       help="check a patch against the recovered activation")
    p.add_argument("original", help="original netlist")
    p.add_argument("patched", help="patched netlist")
    p.add_argument("--trigger", required=True, metavar="FILE",
                   help="activation artifact from prove/pipeline")
    p.add_argument("--signal", metavar="NET",
                   help="trigger net (default: taken from the artifact)")
    p.add_argument("--cycles", type=_any_int, default=1000,
                   help="random comparison budget")
    _add_seed(p)
    _add_roles(p)
    _add_out(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="generate a planted fixture")
    p.add_argument("archetype", choices=ARCHETYPES)
    p.add_argument("--width", type=_any_int,
                   help="data width (pattern-lock) or counter bits")
    p.add_argument("--pattern", type=_any_int,
                   help="unlock pattern (pattern-lock)")
    p.add_argument("--threshold", type=_any_int,
                   help="firing count (counter-lock)")
    _add_seed(p)
    _add_out(p, default="fixture")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pipeline", help="run every stage end-to-end")
    _add_netlist(p)
    _add_seed(p)
    _add_roles(p)
    p.add_argument("--schedule", type=_schedule, default=DEFAULT_SCHEDULE,
                   metavar="N,N,...")
    p.add_argument("--stability", type=_any_int, default=2, metavar="M")
    p.add_argument("--depth", type=_any_int, default=16)
    p.add_argument("--max-conflicts", type=_any_int,
                   default=DEFAULT_MAX_CONFLICTS)
    p.add_argument("--cycles", type=_any_int, default=1000,
                   help="mitigation random comparison budget")
    _add_out(p, default="lutscope-out")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as e:
        print(f"lutscope: {e}", file=sys.stderr)
        return e.exit_code
    except ReportError as e:
        print(f"lutscope: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
