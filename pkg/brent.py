"""
Brent equations for rank-r schemes of T_{n,m} over Z2, their CNF encoding,
DIMACS export and solving.

For terms l < r with coefficient arrays alpha (l, i), beta (l, j) and
gamma (l, k) the system reads

    sum_l alpha[l,i] * beta[l,j] * gamma[l,k] = [i + j == k]   (mod 2)

Triple products are introduced through two AND auxiliaries; each equation's
parity is a chain of 3-literal XOR constraints closed by a unit clause.
"""
import json
import logging
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from coeff import CoeffDomain, PolyflipError
from tensor import CoeffVector, Scheme, Term, is_multiplication_tensor

logger = logging.getLogger(__name__)

INTERNAL_CLAUSE_LIMIT = 10_000

SAT = "sat"
UNSAT = "unsat"
CLAIMED_UNSAT = "claimed-unsat"
UNKNOWN = "unknown"


class SolverError(PolyflipError):
    pass


@dataclass(frozen=True)
class BrentSystem:
    n: int
    m: int
    r: int

    def __post_init__(self):
        if self.r < 1:
            raise SolverError(f"Candidate rank must be >= 1, got {self.r}")

    @property
    def lengths(self):
        return self.n + 1, self.m + 1, self.n + self.m + 1

    @property
    def num_vars(self):
        return self.r * sum(self.lengths)

    @property
    def num_equations(self):
        la, lb, lc = self.lengths
        return la * lb * lc

    # 0-based variable indices; DIMACS numbers are these plus one
    def alpha(self, l, i):
        return l * (self.n + 1) + i

    def beta(self, l, j):
        return self.r * (self.n + 1) + l * (self.m + 1) + j

    def gamma(self, l, k):
        return self.r * (self.n + self.m + 2) + l * (self.n + self.m + 1) + k

    def equation_index(self, i, j, k):
        _, lb, lc = self.lengths
        return (i * lb + j) * lc + k

    def equations(self):
        la, lb, lc = self.lengths
        for i in range(la):
            for j in range(lb):
                for k in range(lc):
                    yield i, j, k

    def flatten(self, s):
        """Coefficients of s in variable order; s must have exactly r terms."""
        if (s.n, s.m) != (self.n, self.m) or s.rank != self.r:
            raise SolverError(f"Scheme ({s.n},{s.m}) of rank {s.rank} does not fit this system")
        values = [0] * self.num_vars
        for l, t in enumerate(s.terms):
            for i, x in enumerate(t.u):
                values[self.alpha(l, i)] = x
            for j, x in enumerate(t.v):
                values[self.beta(l, j)] = x
            for k, x in enumerate(t.w):
                values[self.gamma(l, k)] = x
        return values

    def unflatten(self, values, domain=None):
        domain = domain or CoeffDomain.gf2()
        la, lb, lc = self.lengths
        terms = []
        for l in range(self.r):
            u = CoeffVector.of(domain, [values[self.alpha(l, i)] for i in range(la)])
            v = CoeffVector.of(domain, [values[self.beta(l, j)] for j in range(lb)])
            w = CoeffVector.of(domain, [values[self.gamma(l, k)] for k in range(lc)])
            terms.append(Term(u, v, w))
        return Scheme(self.n, self.m, domain, tuple(terms))

    def satisfied(self, values):
        """Evaluate every equation over Z2 at the given 0/1 values."""
        for i, j, k in self.equations():
            acc = 0
            for l in range(self.r):
                acc ^= values[self.alpha(l, i)] & values[self.beta(l, j)] & values[self.gamma(l, k)] & 1
            if acc != (1 if i + j == k else 0):
                return False
        return True


def build_brent(n, m, r):
    return BrentSystem(n, m, r)


@dataclass
class CnfInstance:
    system: BrentSystem
    num_vars: int = 0
    clauses: list = field(default_factory=list)
    definitions: list = field(default_factory=list)  # (aux, op, operands) in creation order
    products: tuple = (0, 0)
    parity: tuple = (0, 0)
    symmetry: tuple = (0, 0)

    @staticmethod
    def base_var(index):
        return index + 1

    def new_var(self):
        self.num_vars += 1
        return self.num_vars

    def varmap(self):
        sys_ = self.system
        la, lb, lc = sys_.lengths
        for l in range(sys_.r):
            for i in range(la):
                yield f"alpha[{l},{i}]", sys_.alpha(l, i) + 1
            for j in range(lb):
                yield f"beta[{l},{j}]", sys_.beta(l, j) + 1
            for k in range(lc):
                yield f"gamma[{l},{k}]", sys_.gamma(l, k) + 1


def _and(cnf, a, b):
    y = cnf.new_var()
    cnf.clauses += [[-y, a], [-y, b], [y, -a, -b]]
    cnf.definitions.append((y, "and", (a, b)))
    return y


def _xor(cnf, a, b):
    y = cnf.new_var()
    # forbid every odd-parity assignment of (y, a, b)
    cnf.clauses += [[-y, a, b], [y, -a, b], [y, a, -b], [-y, -a, -b]]
    cnf.definitions.append((y, "xor", (a, b)))
    return y


def _lex_leq(cnf, xs, ys):
    """xs <= ys lexicographically, first position most significant."""
    eq = None
    for pos, (x, y) in enumerate(zip(xs, ys)):
        guard = [] if eq is None else [-eq]
        cnf.clauses.append(guard + [-x, y])
        if pos == len(xs) - 1:
            break
        nxt = cnf.new_var()
        cnf.clauses += [guard + [x, y, nxt], guard + [-x, -y, nxt]]
        cnf.definitions.append((nxt, "lexeq", (eq, x, y)))
        eq = nxt


def encode_cnf(system, symmetry_breaking=False):
    cnf = CnfInstance(system, num_vars=system.num_vars)
    la, lb, lc = system.lengths
    var = cnf.base_var

    start = cnf.num_vars + 1
    prod = {}
    for l in range(system.r):
        for i in range(la):
            for j in range(lb):
                ab = _and(cnf, var(system.alpha(l, i)), var(system.beta(l, j)))
                for k in range(lc):
                    prod[l, i, j, k] = _and(cnf, ab, var(system.gamma(l, k)))
    cnf.products = (start, cnf.num_vars)

    start = cnf.num_vars + 1
    for i, j, k in system.equations():
        acc = prod[0, i, j, k]
        for l in range(1, system.r):
            acc = _xor(cnf, acc, prod[l, i, j, k])
        cnf.clauses.append([acc] if i + j == k else [-acc])
    cnf.parity = (start, cnf.num_vars)

    if symmetry_breaking:
        start = cnf.num_vars + 1
        blocks = []
        for l in range(system.r):
            block = [var(system.alpha(l, i)) for i in range(la)]
            block += [var(system.beta(l, j)) for j in range(lb)]
            block += [var(system.gamma(l, k)) for k in range(lc)]
            blocks.append(block)
        for xs, ys in zip(blocks, blocks[1:]):
            _lex_leq(cnf, xs, ys)
        cnf.symmetry = (start, cnf.num_vars)
    logger.debug("cnf (%d,%d,%d): %d vars, %d clauses", system.n, system.m, system.r,
                 cnf.num_vars, len(cnf.clauses))
    return cnf


def to_dimacs(cnf):
    s = cnf.system
    lines = [f"c Brent equations n={s.n} m={s.m} r={s.r} over Z2"]
    lines += [f"c varmap {name} {v}" for name, v in cnf.varmap()]
    lines.append(f"c aux products {cnf.products[0]}-{cnf.products[1]}")
    lines.append(f"c aux parity {cnf.parity[0]}-{cnf.parity[1]}")
    if cnf.symmetry != (0, 0):
        lines.append(f"c aux symmetry {cnf.symmetry[0]}-{cnf.symmetry[1]}")
    lines.append(f"p cnf {cnf.num_vars} {len(cnf.clauses)}")
    lines += [" ".join(map(str, clause)) + " 0" for clause in cnf.clauses]
    return "\n".join(lines) + "\n"


def write_dimacs(cnf, path):
    path = Path(path)
    path.write_text(to_dimacs(cnf), encoding="utf-8")
    return path


def extend_assignment(cnf, base_values):
    """Full 0/1 assignment (index 1..num_vars) induced by base-variable values."""
    values = [0] * (cnf.num_vars + 1)
    for idx, x in enumerate(base_values):
        values[idx + 1] = x & 1
    for aux, op, args in cnf.definitions:
        if op == "and":
            values[aux] = values[args[0]] & values[args[1]]
        elif op == "xor":
            values[aux] = values[args[0]] ^ values[args[1]]
        else:
            prev, x, y = args
            values[aux] = (1 if prev is None else values[prev]) & (values[x] == values[y])
    return values


def violated_clause(cnf, values):
    """Index of the first clause false under 0/1 ``values``, or None."""
    for idx, clause in enumerate(cnf.clauses):
        if not any((values[abs(l)] == 1) == (l > 0) for l in clause):
            return idx
    return None


def decode_assignment(cnf, assignment):
    """
    ``assignment`` is a collection of DIMACS literals (positive = true). The
    decoded scheme is pruned of zero terms and verified before it is returned.
    """
    true = {l for l in assignment if l > 0}
    values = [0] + [1 if v in true else 0 for v in range(1, cnf.num_vars + 1)]
    bad = violated_clause(cnf, values)
    if bad is not None:
        raise SolverError(f"Assignment violates clause {bad}: {cnf.clauses[bad]}")
    s = cnf.system.unflatten(values[1:cnf.system.num_vars + 1])
    if not is_multiplication_tensor(s):
        raise SolverError("Decoded scheme fails verification")
    return s


@dataclass
class Verdict:
    status: str
    solver: str
    seconds: float = 0.0
    model: Optional[list] = None
    scheme: Optional[Scheme] = None
    version: str = ""

    def certificate(self, system):
        return {"n": system.n, "m": system.m, "r": system.r, "verdict": self.status,
                "solver": self.solver, "version": self.version, "time": round(self.seconds, 3)}


def dpll(num_vars, clauses, order=None, max_decisions=None):
    """
    Chronological-backtracking DPLL with two watched literals per clause.
    Returns (status, model) with model a literal list when satisfiable.
    """
    value = [0] * (num_vars + 1)
    watches = {}
    units, cls = [], []
    for clause in clauses:
        c = list(dict.fromkeys(clause))
        if any(-l in c for l in c):
            continue
        if not c:
            return UNSAT, None
        if len(c) == 1:
            units.append(c[0])
            continue
        watches.setdefault(c[0], []).append(len(cls))
        watches.setdefault(c[1], []).append(len(cls))
        cls.append(c)

    trail = []

    def lit_val(l):
        v = value[abs(l)]
        return v if l > 0 else -v

    def enqueue(l):
        cur = lit_val(l)
        if cur:
            return cur == 1
        value[abs(l)] = 1 if l > 0 else -1
        trail.append(l)
        return True

    def undo(size):
        while len(trail) > size:
            value[abs(trail.pop())] = 0

    def propagate(head):
        while head < len(trail):
            false_lit = -trail[head]
            head += 1
            keep, conflict = [], False
            for ci in watches.get(false_lit, ()):
                if conflict:
                    keep.append(ci)
                    continue
                c = cls[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                if lit_val(c[0]) == 1:
                    keep.append(ci)
                    continue
                for k in range(2, len(c)):
                    if lit_val(c[k]) != -1:
                        c[1], c[k] = c[k], c[1]
                        watches.setdefault(c[1], []).append(ci)
                        break
                else:
                    keep.append(ci)
                    if not enqueue(c[0]):
                        conflict = True
            watches[false_lit] = keep
            if conflict:
                return False
        return True

    if not all(enqueue(u) for u in units) or not propagate(0):
        return UNSAT, None
    order = list(order or range(1, num_vars + 1))
    levels = []  # [trail size before decision, decided literal, both phases tried]
    decisions = 0
    while True:
        var = next((v for v in order if value[v] == 0), None)
        if var is None:
            var = next((v for v in range(1, num_vars + 1) if value[v] == 0), None)
        if var is None:
            return SAT, [v if value[v] == 1 else -v for v in range(1, num_vars + 1)]
        decisions += 1
        if max_decisions is not None and decisions > max_decisions:
            return UNKNOWN, None
        levels.append([len(trail), -var, False])
        enqueue(-var)
        ok = propagate(levels[-1][0])
        while not ok:
            while levels and levels[-1][2]:
                undo(levels.pop()[0])
            if not levels:
                return UNSAT, None
            size, lit, _ = levels[-1]
            undo(size)
            levels[-1] = [size, -lit, True]
            enqueue(-lit)
            ok = propagate(size)


def _solve_internal(cnf, max_decisions):
    if len(cnf.clauses) > INTERNAL_CLAUSE_LIMIT:
        raise SolverError(f"{len(cnf.clauses)} clauses exceed the internal solver limit "
                          f"of {INTERNAL_CLAUSE_LIMIT}; use an external solver")
    order = range(1, cnf.system.num_vars + 1)
    return dpll(cnf.num_vars, cnf.clauses, order, max_decisions)


def parse_solver_output(output):
    """(status, literals, version) from DIMACS-style solver output."""
    status, model, version = UNKNOWN, None, ""
    for line in output.splitlines():
        line = line.strip()
        if line in ("s SATISFIABLE", "SATISFIABLE", "SAT"):
            status = SAT
        elif line in ("s UNSATISFIABLE", "UNSATISFIABLE", "UNSAT"):
            status = UNSAT
        elif line.startswith("v "):
            try:
                lits = [int(tok) for tok in line.split()[1:]]
            except ValueError:
                raise SolverError(f"Malformed model line: {line!r}") from None
            model = (model or []) + [l for l in lits if l != 0]
        elif line.startswith("c ") and "version" in line.lower() and not version:
            version = line[2:].strip()
    if status == SAT and model is None:
        raise SolverError("Solver reported SAT without a model")
    return status, model, version


def _solve_external(cnf, command, timeout):
    with tempfile.TemporaryDirectory() as tmp:
        cnf_path = write_dimacs(cnf, Path(tmp) / "brent.cnf")
        argv = [tok.replace("{cnf}", str(cnf_path)) for tok in shlex.split(command)]
        if "{cnf}" not in command:
            argv.append(str(cnf_path))
        logger.info("running %s", " ".join(argv))
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except FileNotFoundError:
            raise SolverError(f"Solver executable not found: {argv[0]}") from None
        except subprocess.TimeoutExpired:
            return UNKNOWN, None, ""
    status, model, version = parse_solver_output(proc.stdout)
    # conventional exit codes: 10 SAT, 20 UNSAT
    if status == UNKNOWN and proc.returncode not in (0, 10, 20):
        raise SolverError(f"{argv[0]} exited with code {proc.returncode}: {proc.stderr.strip()[:200]}")
    return status, model, version


def _solve_pysat(cnf, name, max_decisions):
    from pysat.solvers import Solver

    with Solver(name=name, bootstrap_with=cnf.clauses) as solver:
        if max_decisions is not None:
            solver.conf_budget(max_decisions)
            result = solver.solve_limited()
        else:
            result = solver.solve()
        if result is None:
            return UNKNOWN, None
        return (SAT, solver.get_model()) if result else (UNSAT, None)


def solve(cnf, mode="internal", command=None, timeout=None, max_decisions=None):
    """
    ``mode`` is ``internal``, ``external`` (``command`` template with a
    ``{cnf}`` placeholder) or ``pysat:<solver name>``. Satisfiable answers
    are decoded and verified; UNSAT from any solver but the internal one is
    reported as claimed-unsat.
    """
    started = time.monotonic()
    version = ""
    if mode == "internal":
        status, model = _solve_internal(cnf, max_decisions)
        solver = "internal-dpll"
    elif mode == "external":
        if not command:
            raise SolverError("External mode needs a solver command")
        status, model, version = _solve_external(cnf, command, timeout)
        solver = shlex.split(command)[0]
        if status == UNSAT:
            status = CLAIMED_UNSAT
    elif mode.startswith("pysat:"):
        solver = mode
        status, model = _solve_pysat(cnf, mode.split(":", 1)[1], max_decisions)
        if status == UNSAT:
            status = CLAIMED_UNSAT
    else:
        raise SolverError(f"Unknown solver mode {mode!r}")
    verdict = Verdict(status, solver, time.monotonic() - started, model, version=version)
    if status == SAT:
        verdict.scheme = decode_assignment(cnf, model)
    s = cnf.system
    logger.info("brent (%d,%d,%d): %s via %s", s.n, s.m, s.r, verdict.status, solver)
    return verdict


def save_certificate(verdict, system, path):
    path = Path(path)
    path.write_text(json.dumps(verdict.certificate(system), indent=2), encoding="utf-8")
    return path
