"""Self-contained CDCL SAT solver.

Clause learning (first unique implication point), two-watched-literal
propagation, activity-ordered branching with decay, geometric restarts, and a
conflict budget that surfaces UNKNOWN instead of running away. Literals are
DIMACS-style signed ints. Every SAT answer is re-checked against the full
clause set before it is returned.

A CnfFormula also keeps a name table so callers can build formulas over net
names and read models back the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_MAX_CONFLICTS = 200_000


class SatError(Exception):
    pass


@dataclass
class CnfFormula:
    clauses: list = field(default_factory=list)
    num_vars: int = 0
    names: dict = field(default_factory=dict)      # name -> var
    var_names: dict = field(default_factory=dict)  # var -> name

    def new_var(self, name=None) -> int:
        self.num_vars += 1
        v = self.num_vars
        if name is not None:
            if name in self.names:
                raise SatError(f"variable name {name!r} already in use")
            self.names[name] = v
            self.var_names[v] = name
        return v

    def var(self, name) -> int:
        """Variable for ``name``, created on first use."""
        if name not in self.names:
            return self.new_var(name)
        return self.names[name]

    def add_clause(self, *lits):
        clause = []
        for l in lits:
            if not isinstance(l, int) or l == 0:
                raise SatError(f"bad literal {l!r}")
            if abs(l) > self.num_vars:
                raise SatError(f"literal {l} references unknown variable")
            clause.append(l)
        self.clauses.append(clause)

    def to_dimacs(self) -> str:
        out = [f"p cnf {self.num_vars} {len(self.clauses)}"]
        for name in sorted(self.names):
            out.append(f"c var {self.names[name]} = {name}")
        for cl in self.clauses:
            out.append(" ".join(str(l) for l in cl) + " 0")
        return "\n".join(out) + "\n"


@dataclass
class SatResult:
    status: str                 # "SAT" | "UNSAT" | "UNKNOWN"
    model: dict | None = None   # var -> bool, only for SAT
    conflicts: int = 0
    decisions: int = 0

    def named_model(self, formula: CnfFormula) -> dict:
        if self.model is None:
            return {}
        return {
            name: self.model[v]
            for name, v in formula.names.items() if v in self.model
        }


class _Solver:
    def __init__(self, num_vars, max_conflicts, phase_saving=False):
        n = num_vars + 1
        self.assign = [None] * n        # var -> bool
        self.level = [0] * n
        self.reason = [None] * n
        self.activity = [0.0] * n
        self.phase = [False] * n
        self.phase_saving = phase_saving
        self.watches = {}               # lit -> list of clauses watching it
        self.trail = []
        self.trail_lim = []
        self.qhead = 0
        self.num_vars = num_vars
        self.max_conflicts = max_conflicts
        self.conflicts = 0
        self.decisions = 0
        self.var_inc = 1.0
        self.ok = True
        self.units = []

    # -- assignment helpers ---------------------------------------------

    def _value(self, lit):
        a = self.assign[abs(lit)]
        if a is None:
            return None
        return a if lit > 0 else not a

    def _enqueue(self, lit, reason=None):
        v = abs(lit)
        self.assign[v] = lit > 0
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _watch(self, clause):
        self.watches.setdefault(clause[0], []).append(clause)
        self.watches.setdefault(clause[1], []).append(clause)

    def add_clause(self, lits):
        if not self.ok:
            return
        seen = set()
        clause = []
        for l in lits:
            if -l in seen:
                return  # tautology
            if l not in seen:
                seen.add(l)
                clause.append(l)
        if not clause:
            self.ok = False
            return
        if len(clause) == 1:
            self.units.append(clause[0])
            return
        self._watch(clause)

    # -- propagation ------------------------------------------------------

    def _propagate(self):
        while self.qhead < len(self.trail):
            p = self.trail[self.qhead]
            self.qhead += 1
            falsified = -p
            ws = self.watches.get(falsified)
            if not ws:
                continue
            kept = []
            i = 0
            while i < len(ws):
                clause = ws[i]
                i += 1
                if clause[0] == falsified:
                    clause[0], clause[1] = clause[1], clause[0]
                first = clause[0]
                if self._value(first) is True:
                    kept.append(clause)
                    continue
                moved = False
                for j in range(2, len(clause)):
                    if self._value(clause[j]) is not False:
                        clause[1], clause[j] = clause[j], clause[1]
                        self.watches.setdefault(clause[1], []).append(clause)
                        moved = True
                        break
                if moved:
                    continue
                kept.append(clause)
                if self._value(first) is False:
                    kept.extend(ws[i:])
                    self.watches[falsified] = kept
                    return clause
                self._enqueue(first, clause)
            self.watches[falsified] = kept
        return None

    # -- conflict analysis ------------------------------------------------

    def _bump(self, v):
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for i in range(1, self.num_vars + 1):
                self.activity[i] *= 1e-100
            self.var_inc *= 1e-100

    def _analyze(self, conflict):
        cur_level = len(self.trail_lim)
        seen = [False] * (self.num_vars + 1)
        learned = []
        counter = 0
        p = None
        reason = conflict
        idx = len(self.trail) - 1
        while True:
            for q in reason:
                if p is not None and q == p:
                    continue  # the pivot itself is being resolved away
                v = abs(q)
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] == cur_level:
                        counter += 1
                    else:
                        learned.append(q)
            while not seen[abs(self.trail[idx])]:
                idx -= 1
            p = self.trail[idx]
            seen[abs(p)] = False
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            reason = self.reason[abs(p)]
        learned = [-p] + learned
        if len(learned) == 1:
            bt = 0
        else:
            # Watch a literal from the backjump level so the clause is
            # inspected again as soon as that level is re-explored.
            hi = max(range(1, len(learned)), key=lambda i: self.level[abs(learned[i])])
            bt = self.level[abs(learned[hi])]
            learned[1], learned[hi] = learned[hi], learned[1]
        return learned, bt

    def _backjump(self, bt_level):
        while len(self.trail_lim) > bt_level:
            lim = self.trail_lim.pop()
            for lit in self.trail[lim:]:
                v = abs(lit)
                if self.phase_saving:
                    self.phase[v] = lit > 0
                self.assign[v] = None
                self.reason[v] = None
            del self.trail[lim:]
        self.qhead = min(self.qhead, len(self.trail))

    def _decide(self):
        best = 0
        best_act = -1.0
        for v in range(1, self.num_vars + 1):
            if self.assign[v] is None and self.activity[v] > best_act:
                best = v
                best_act = self.activity[v]
        if best == 0:
            return None
        self.decisions += 1
        self.trail_lim.append(len(self.trail))
        lit = best if self.phase[best] else -best
        self._enqueue(lit, None)
        return best

    def solve(self):
        if not self.ok:
            return "UNSAT"
        for u in self.units:
            val = self._value(u)
            if val is False:
                return "UNSAT"
            if val is None:
                self._enqueue(u, None)
        restart_limit = 100
        conflicts_at_restart = 0
        while True:
            conflict = self._propagate()
            if conflict is not None:
                self.conflicts += 1
                conflicts_at_restart += 1
                if len(self.trail_lim) == 0:
                    return "UNSAT"
                if self.conflicts >= self.max_conflicts:
                    return "UNKNOWN"
                learned, bt = self._analyze(conflict)
                self._backjump(bt)
                if len(learned) == 1:
                    if self._value(learned[0]) is False:
                        return "UNSAT"
                    if self._value(learned[0]) is None:
                        self._enqueue(learned[0], None)
                else:
                    self._watch(learned)
                    self._enqueue(learned[0], learned)
                self.var_inc /= 0.95
                if conflicts_at_restart >= restart_limit:
                    conflicts_at_restart = 0
                    restart_limit = int(restart_limit * 1.5)
                    self._backjump(0)
            else:
                if self._decide() is None:
                    return "SAT"


def sat_check(formula: CnfFormula, assumptions=(),
              max_conflicts=DEFAULT_MAX_CONFLICTS,
              phase_saving=False) -> SatResult:
    """Decide the formula under optional assumption literals."""
    solver = _Solver(formula.num_vars, max_conflicts, phase_saving)
    for cl in formula.clauses:
        solver.add_clause(cl)
    for a in assumptions:
        if abs(a) > formula.num_vars or a == 0:
            raise SatError(f"assumption {a} references unknown variable")
        solver.add_clause([a])
    status = solver.solve()
    if status != "SAT":
        return SatResult(status=status, conflicts=solver.conflicts,
                         decisions=solver.decisions)
    model = {}
    for v in range(1, formula.num_vars + 1):
        model[v] = bool(solver.assign[v]) if solver.assign[v] is not None else False
    _verify_model(formula, assumptions, model)
    return SatResult(status="SAT", model=model, conflicts=solver.conflicts,
                     decisions=solver.decisions)


def _verify_model(formula, assumptions, model):
    def lit_true(l):
        return model[abs(l)] if l > 0 else not model[abs(l)]

    for cl in formula.clauses:
        if not any(lit_true(l) for l in cl):
            raise SatError(f"internal error: model does not satisfy clause {cl}")
    for a in assumptions:
        if not lit_true(a):
            raise SatError(f"internal error: model violates assumption {a}")
