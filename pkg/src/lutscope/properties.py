"""Property extraction from analysis findings.

Two property shapes come out of a finding:

  * a signal that never switched and holds a definite value becomes a
    ConstantProperty ("assert (sig == 0)"),
  * a LUT with unreached table entries becomes a NeverProperty: the uncovered
    minterms, minimized to prime-implicant cubes, each asserted never active
    ("assert (a3 & a2 == 0)").

Cubes are strings over {0,1,-} written MSB-first (leftmost char = highest
address line), and assertion literals are emitted in descending line order to
match. Minimization is exact (Quine-McCluskey primes + Petrick cover) which is
cheap at k <= 6; ties between equal-cost covers break to the lexicographically
smallest cube set so outputs are reproducible byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass

from .netlist import Cell
from .analysis import AnalysisResult, REASON_CANDIDATE

# Petrick products are capped; past this we fall back to a deterministic
# greedy cover (still sound/complete, possibly non-minimal)
_PETRICK_CAP = 2048


class PropertyError(Exception):
    pass


@dataclass
class ConstantProperty:
    signal: str
    value: int
    provenance: str = ""

    def sva_lines(self):
        return [f"assert ({self.signal} == {self.value})"]


@dataclass
class NeverProperty:
    cell: str
    lines: list                  # address line signal names, index 0 = LSB
    cubes: list                  # MSB-first mask strings over {0,1,-}
    provenance: str = ""

    def cube_minterms(self, cube):
        return expand_cube(len(self.lines), cube)

    def minterms(self):
        out = set()
        for c in self.cubes:
            out |= self.cube_minterms(c)
        return out

    def sva_lines(self):
        out = []
        k = len(self.lines)
        for cube in self.cubes:
            lits = []
            for pos, ch in enumerate(cube):
                line = k - 1 - pos
                name = self.lines[line]
                if ch == "1":
                    lits.append(name)
                elif ch == "0":
                    lits.append(f"~{name}")
            out.append(f"assert ({' & '.join(lits)} == 0)")
        return out


def expand_cube(k, cube):
    """All minterm indices matched by an MSB-first cube string."""
    if len(cube) != k:
        raise PropertyError(f"cube {cube!r} has wrong width for k={k}")
    terms = {0}
    for pos, ch in enumerate(cube):
        bit = 1 << (k - 1 - pos)
        if ch == "1":
            terms = {t | bit for t in terms}
        elif ch == "-":
            terms = terms | {t | bit for t in terms}
        elif ch != "0":
            raise PropertyError(f"bad cube character {ch!r}")
    return terms


def _cube_str(k, value, dc_mask):
    chars = []
    for line in range(k - 1, -1, -1):
        if (dc_mask >> line) & 1:
            chars.append("-")
        else:
            chars.append("1" if (value >> line) & 1 else "0")
    return "".join(chars)


def minimize_minterms(k, minterms):
    """Exact two-level minimization of a minterm set into prime-implicant
    cubes (MSB-first strings), covering the set precisely."""
    minterms = sorted(set(minterms))
    if not minterms:
        return []
    if any(m < 0 or m >= (1 << k) for m in minterms):
        raise PropertyError("minterm out of range")
    if len(minterms) == (1 << k):
        return ["-" * k]

    # grow implicants: combine pairs differing in one defined bit
    current = {(m, 0) for m in minterms}
    primes = set()
    while current:
        nxt = set()
        combined = set()
        cur = sorted(current)
        by_mask = {}
        for v, mask in cur:
            by_mask.setdefault(mask, []).append(v)
        for mask, values in by_mask.items():
            vset = set(values)
            for v in values:
                for line in range(k):
                    bit = 1 << line
                    if mask & bit:
                        continue
                    if (v ^ bit) in vset:
                        nxt.add((v & ~bit, mask | bit))
                        combined.add((v, mask))
        primes |= current - combined
        current = nxt

    cover_of = {}
    for p in primes:
        v, mask = p
        for m in minterms:
            if (m & ~mask) == v:
                cover_of.setdefault(m, set()).add(p)

    def cost(pset):
        strs = sorted(_cube_str(k, v, msk) for v, msk in pset)
        literals = sum(s.count("0") + s.count("1") for s in strs)
        return (len(pset), literals, strs)

    # essential primes are in every cover; Petrick only has to solve the
    # residual cyclic core, which is tiny for realistic tables
    essential = set()
    for m in minterms:
        if len(cover_of[m]) == 1:
            essential |= cover_of[m]
    remaining = [
        m for m in minterms if not (cover_of[m] & essential)
    ]

    chosen = None
    if remaining:
        order = sorted(remaining, key=lambda m: (len(cover_of[m]), m))
        products = [frozenset()]
        blown = False
        for m in order:
            alts = cover_of[m]
            new = set()
            for prod in products:
                if prod & alts:
                    new.add(prod)
                    continue
                for p in alts:
                    new.add(prod | {p})
            if len(new) > _PETRICK_CAP:
                blown = True
                break
            # absorption keeps the product list from exploding
            pruned = []
            for prod in sorted(new, key=len):
                if not any(q <= prod for q in pruned):
                    pruned.append(prod)
            products = pruned
        if blown:
            chosen = essential | _greedy_cover(remaining, cover_of)
        else:
            chosen = essential | min(products, key=lambda ps: cost(essential | ps))
    else:
        chosen = essential
    return sorted(_cube_str(k, v, msk) for v, msk in chosen)


def _greedy_cover(minterms, cover_of):
    """Deterministic fallback: repeatedly take the prime covering the most
    still-uncovered minterms (ties by cube size then value)."""
    remaining = set(minterms)
    chosen = set()
    while remaining:
        best = None
        best_key = None
        primes = set()
        for m in remaining:
            primes |= cover_of[m]
        for p in sorted(primes):
            gain = sum(1 for m in remaining if p in cover_of[m])
            key = (-gain, p)
            if best_key is None or key < best_key:
                best, best_key = p, key
        chosen.add(best)
        remaining = {m for m in remaining if best not in cover_of[m]}
    return chosen


def extract_constant(signal, observed, provenance="") -> ConstantProperty:
    if observed not in (0, 1):
        raise PropertyError(
            f"signal {signal!r} has no definite constant value (X/Z observation)"
        )
    return ConstantProperty(signal=signal, value=observed, provenance=provenance)


def extract_coverage(cell: Cell, cover, provenance="") -> NeverProperty:
    k = cell.num_inputs
    full = (1 << (1 << k)) - 1
    if cover == full:
        raise PropertyError(f"LUT {cell.name!r} is fully covered; nothing to assert")
    if not 0 <= cover <= full:
        raise PropertyError("cover bitvector out of range")
    uncovered = [i for i in range(1 << k) if not (cover >> i) & 1]
    cubes = minimize_minterms(k, uncovered)
    prop = NeverProperty(
        cell=cell.name, lines=list(cell.address_lines()), cubes=cubes,
        provenance=provenance,
    )
    assert prop.minterms() == set(uncovered), "cube expansion must match uncovered set"
    return prop


def emit_sva(prop) -> str:
    return "\n".join(prop.sva_lines()) + "\n"


def emit_blif(cell: Cell, cover) -> str:
    """Truth table (not minimized) of the uncovered-set indicator: one row per
    uncovered minterm, MSB-first, output 1."""
    k = cell.num_inputs
    full = (1 << (1 << k)) - 1
    if cover == full:
        raise PropertyError(f"LUT {cell.name!r} is fully covered; nothing to emit")
    lines_desc = list(reversed(cell.address_lines()))
    out = [
        f".model {cell.name}_uncovered",
        f".inputs {' '.join(lines_desc)}",
        ".outputs uncovered",
        f".names {' '.join(lines_desc)} uncovered",
    ]
    for m in range(1 << k):
        if not (cover >> m) & 1:
            out.append(f"{m:0{k}b} 1")
    out.append(".end")
    return "\n".join(out) + "\n"


def properties_from_analysis(result: AnalysisResult, cells_by_name) -> list:
    """All checkable properties from one analysis result. Constant-driven and
    high-impedance signals are skipped (trivially true / not assertable), as
    are unswitched signals that never resolved to 0/1."""
    props = []
    for sig, (reason, value) in sorted(result.low_switching.items()):
        if reason != REASON_CANDIDATE or value not in (0, 1):
            continue
        props.append(extract_constant(
            sig, value,
            provenance=f"low-switching signal over {result.trace_length} steps",
        ))
    for name in sorted(result.low_coverage):
        cell = cells_by_name[name]
        props.append(extract_coverage(
            cell, result.low_coverage[name],
            provenance=f"low-coverage LUT over {result.trace_length} steps",
        ))
    return props


def manifest_dict(props) -> dict:
    entries = []
    for p in props:
        if isinstance(p, ConstantProperty):
            entries.append({
                "kind": "constant",
                "signal": p.signal,
                "value": p.value,
                "sva": p.sva_lines(),
                "provenance": p.provenance,
            })
        else:
            entries.append({
                "kind": "never",
                "cell": p.cell,
                "lines": p.lines,
                "cubes": p.cubes,
                "sva": p.sva_lines(),
                "provenance": p.provenance,
            })
    return {"properties": entries}
