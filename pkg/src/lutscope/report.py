"""Artifact plumbing for analysis runs.

Every file a run writes is recorded with its sha256, and stage outputs that
build on earlier files embed those hashes as links. Consumers re-hash on
load, so mixing artifacts from different runs fails loudly instead of
producing quietly wrong answers. JSON artifacts are canonical (sorted keys,
two-space indent, trailing newline, no timestamps): rerunning with the same
inputs reproduces them byte for byte. The text summary and the figures are
derived views of the JSON, never parsed back.
"""

import csv
import hashlib
import io
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


class ReportError(Exception):
    pass


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def sha256_path(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def file_link(path) -> dict:
    """Hash reference to an input file, stored inside dependent artifacts."""
    return {"path": os.path.basename(str(path)), "sha256": sha256_path(path)}


def check_link(link: dict, path, what: str):
    """Verify that ``path`` still holds the bytes ``link`` was built against."""
    actual = sha256_path(path)
    if actual != link["sha256"]:
        raise ReportError(
            f"{what} was produced against {link['path']} "
            f"(sha256 {link['sha256'][:12]}...) but {path} hashes to "
            f"{actual[:12]}...; refusing to mix stale artifacts")


def load_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ReportError(f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ReportError(f"{path} is not valid JSON: {e}") from e


class ArtifactWriter:
    """Writes files under one directory and keeps name -> sha256 for the
    final manifest."""

    def __init__(self, directory):
        self.directory = str(directory)
        os.makedirs(self.directory, exist_ok=True)
        self.hashes = {}

    def path(self, name):
        full = os.path.join(self.directory, name)
        os.makedirs(os.path.dirname(full) or ".", exist_ok=True)
        return full

    def write_text(self, name, text: str) -> str:
        full = self.path(name)
        with open(full, "w") as f:
            f.write(text)
        self.hashes[name] = sha256_text(text)
        return full

    def write_json(self, name, obj) -> str:
        return self.write_text(name, json_text(obj))

    def write_figure(self, name, fig) -> str:
        full = self.path(name)
        fig.savefig(full, dpi=110)
        plt.close(fig)
        self.hashes[name] = sha256_path(full)
        return full


# ---------------------------------------------------------------------------
# delimited views

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def convergence_csv(report) -> str:
    rows = [(l, s, c) for l, s, c in report.history]
    return _csv_text(("cycles", "low_switching", "low_coverage"), rows)


def switching_csv(result) -> str:
    rows = [(s, r, v) for s, (r, v) in sorted(result.low_switching.items())]
    return _csv_text(("signal", "reason", "value"), rows)


def coverage_csv(result) -> str:
    rows = []
    for cell in sorted(result.low_coverage):
        k, init = result.lut_shapes[cell]
        cover = result.low_coverage[cell]
        digits = max(1, (1 << k) // 4)
        rows.append((cell, k, format(init, f"0{digits}x"),
                     format(cover, f"0{digits}x"),
                     (1 << k) - bin(cover).count("1")))
    return _csv_text(("cell", "k", "init_hex", "cover_hex", "uncovered"), rows)


# ---------------------------------------------------------------------------
# figures

def convergence_figure(report):
    """Suspect-set sizes against simulated cycles; flat tails mean the
    stimulus budget stopped buying information."""
    lengths = [h[0] for h in report.history]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(lengths, [h[1] for h in report.history], marker="o",
            label="low-switching signals")
    ax.plot(lengths, [h[2] for h in report.history], marker="s",
            label="low-coverage LUTs")
    ax.set_xscale("log")
    ax.set_xlabel("simulated cycles")
    ax.set_ylabel("suspects remaining")
    state = "converged" if report.converged else "not converged"
    ax.set_title(f"suspect sets vs stimulus budget ({state})")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def coverage_figure(result, limit=24):
    cells = sorted(result.low_coverage)[:limit]
    fracs = []
    for cell in cells:
        k, _ = result.lut_shapes[cell]
        total = 1 << k
        fracs.append(bin(result.low_coverage[cell]).count("1") / total)
    fig, ax = plt.subplots(figsize=(5.5, max(2.0, 0.3 * len(cells) + 1.2)))
    ax.barh(range(len(cells)), fracs, color="#cc5500")
    ax.set_yticks(range(len(cells)))
    ax.set_yticklabels(cells, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0, 1)
    ax.set_xlabel("fraction of table entries exercised")
    ax.set_title("low-coverage LUTs")
    fig.tight_layout()
    return fig


def mitigation_figure(report):
    """Trigger waveforms during the activation replay, before and after the
    patch: the original must rise, the patched one must stay flat."""
    def series(trace):
        out = []
        for t in range(trace.length):
            v = trace.value_at(report.trigger_signal, t)
            out.append(v if v in (0, 1) else 0.5)
        return out

    fig, ax = plt.subplots(figsize=(5.5, 3.0))
    orig = series(report.original_trace)
    pat = series(report.patched_trace)
    steps = list(range(len(orig)))
    ax.step(steps, orig, where="post", label="original", linewidth=2)
    ax.step(steps, pat, where="post", label="patched", linestyle="--",
            linewidth=2)
    ax.axvline(report.violation_cycle, color="grey", alpha=0.5)
    ax.set_yticks([0, 0.5, 1], labels=["0", "x", "1"])
    ax.set_ylim(-0.1, 1.2)
    ax.set_xlabel("cycle")
    ax.set_ylabel(report.trigger_signal)
    ax.set_title("activation replay")
    ax.legend()
    fig.tight_layout()
    return fig


# ---------------------------------------------------------------------------
# text summary

def _fmt_assignment(d):
    if not d:
        return "-"
    return ", ".join(f"{k} = {v}" for k, v in sorted(d.items()))


def _proof_table(steps):
    """step/status/counterexample rows, one per proof obligation."""
    rows = [("step", "status", "counterexample")]
    for s in steps:
        rows.append((str(s["step"]), s["status"],
                     _fmt_assignment(s.get("counterexample"))))
    widths = [max(len(r[i]) for r in rows) for i in range(2)]
    out = []
    for i, (a, b, c) in enumerate(rows):
        out.append(f"  {a:>{widths[0]}}  {b:<{widths[1]}}  {c}")
        if i == 0:
            out.append("  " + "-" * (widths[0] + widths[1] + len(rows[0][2]) + 4))
    return out


def render_text_report(d: dict) -> str:
    """Deterministic human-readable digest of a pipeline report dict."""
    lines = []
    push = lines.append

    def section(title):
        push("")
        push(title)
        push("-" * len(title))

    push("lutscope run summary")
    push("====================")
    push(f"netlist   {d['netlist']['path']}  "
         f"sha256 {d['netlist']['sha256'][:16]}...")
    cfg = d["config"]
    push(f"seed      {d['seed']}")
    push(f"schedule  {','.join(str(x) for x in cfg['schedule'])}  "
         f"(stability {cfg['stability']})")

    section("trace analysis")
    push(f"converged: {'yes' if d['converged'] else 'no'}")
    for h in d["history"]:
        push(f"  {h['length']:>8} cycles: "
             f"{h['low_switch_count']:>4} low-switching, "
             f"{h['low_coverage_count']:>4} low-coverage")
    low_s = d["low_switching"]
    low_c = d["low_coverage"]
    if not low_s and not low_c:
        push("no specious signals or LUTs")
    else:
        push(f"low-switching signals ({len(low_s)}):")
        for e in low_s:
            push(f"  {e['signal']}  [{e['reason']}]  stuck at {e['value']}")
        push(f"low-coverage LUTs ({len(low_c)}):")
        for e in low_c:
            push(f"  {e['cell']}  k={e['k']}  init {e['init_hex']}  "
                 f"cover {e['cover_hex']}  ({e['uncovered_count']} entries dark)")

    section(f"properties ({len(d['properties']['properties'])})")
    for p in d["properties"]["properties"]:
        for line in p["sva"]:
            push(f"  {line}")

    section("proofs")
    if not d["proofs"]:
        push("nothing to prove")
    for p in d["proofs"]:
        if p["kind"] == "constant":
            head = f"{p['signal']}: {p['status']}"
            if p["status"] == "TRIGGER":
                vc = p["trigger"]["violation_cycle"]
                head += f" (activation recovered, fires at cycle {vc})"
            push(head)
            lines.extend(_proof_table(p["steps"]))
            if p.get("note"):
                push(f"  note: {p['note']}")
        else:
            push(f"{p['cell']}: {p['status']}")
            rows = [{"step": i + 1, "status": r["status"],
                     "counterexample": r["counterexample"]}
                    for i, r in enumerate(p["rows"])]
            lines.extend(_proof_table(rows))

    section("patch plan")
    plan = d["plan"]
    if not plan["cells"]:
        push("nothing to patch")
    else:
        push(f"{len(plan['cells'])} LUT(s) rewritten: "
             + ", ".join(plan["cells"]))

    section("equivalence")
    eq = d["equivalence"]
    if eq is None:
        push("not run (no patch)")
    else:
        for mode in ("care", "full"):
            r = eq[mode]
            line = f"{r['mode']}: {r['status']}"
            if r["status"] == "INEQUIVALENT":
                line += (f" at {r['target']} "
                         f"({_fmt_assignment(r['vector'])})")
            elif r["status"] == "EQUIVALENT":
                line += f" ({r['checked']} functions checked)"
            push(line)

    section("mitigation")
    mit = d["mitigation"]
    if mit is None:
        push("not run (no confirmed activation to replay)")
    else:
        verdict = ("PASSED" if mit["passed"]
                   else "INCONCLUSIVE" if mit["inconclusive"] else "FAILED")
        push(f"{verdict}: original trigger {mit['original_trigger']}, "
             f"patched trigger {mit['patched_trigger']} at cycle "
             f"{mit['violation_cycle']}")
        push(f"random comparison: {mit['random_cycles']} cycles, "
             f"{mit['excluded_cycles']} excluded, {mit['mismatches']} "
             f"mismatches")
        for note in mit["notes"]:
            push(f"  note: {note}")

    push("")
    push(f"verdict: {d['verdict']['headline']}")
    return "\n".join(lines) + "\n"
