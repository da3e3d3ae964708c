"""
Lift Z2 schemes to Z/2^k by Newton iteration on the Brent equations, recover
rational coefficients by rational reconstruction and classify the result.

Outcomes follow the rank table legend: integer coefficients, coefficients in
Z[1/d], a lift to Z/2^k that does not reconstruct, or no lift at all.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, isqrt, lcm
from typing import Optional

from sympy import factorint

from coeff import CoeffDomain, PolyflipError, GF2, ZPOW2
from tensor import CoeffVector, Scheme, Term, contract, is_multiplication_tensor

logger = logging.getLogger(__name__)

DEFAULT_BITS = 20
PIVOT_RULES = ("natural", "reversed")

LIFTED_Z = "lifted_to_Z"
LIFTED_Q = "lifted_to_Q"
MOD_2K_ONLY = "lifted_mod_2k_only"
FAILED = "failed"


class LiftError(PolyflipError):
    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class Gf2Elimination:
    """
    Reduced row echelon form of a bit-packed Z2 matrix (row r = int, bit c =
    column c), keeping for every row the combination of original rows that
    produced it, so the factorization solves any right-hand side.
    """

    def __init__(self, rows, ncols, order="natural"):
        if order not in PIVOT_RULES:
            raise LiftError(f"Unknown pivot rule {order!r}")
        cols = range(ncols) if order == "natural" else range(ncols - 1, -1, -1)
        work = [(row, 1 << e) for e, row in enumerate(rows)]
        pivots = []
        for col in cols:
            bit = 1 << col
            hit = next((idx for idx, (row, _) in enumerate(work) if row & bit), None)
            if hit is None:
                continue
            prow, pcomb = work.pop(hit)
            work = [(row ^ prow, comb ^ pcomb) if row & bit else (row, comb) for row, comb in work]
            pivots = [(c, row ^ prow, comb ^ pcomb) if row & bit else (c, row, comb)
                      for c, row, comb in pivots]
            pivots.append((col, prow, pcomb))
        self.order = order
        self.pivots = pivots
        self.null_combos = [comb for _, comb in work]

    @property
    def rank(self):
        return len(self.pivots)

    def solve(self, rhs):
        """Solution bits with free variables 0, or None when rhs is inconsistent."""
        for comb in self.null_combos:
            if (comb & rhs).bit_count() & 1:
                return None
        x = 0
        for col, _, comb in self.pivots:
            if (comb & rhs).bit_count() & 1:
                x |= 1 << col
        return x


def jacobian_mod2(system, s):
    """Rows of d(Brent residual)/d(variable) mod 2, one per equation (i,j,k)."""
    n, m, N = s.n, s.m, s.n + s.m + 1
    rows = [0] * system.num_equations
    for l, t in enumerate(s.terms):
        u = [x & 1 for x in t.u]
        v = [x & 1 for x in t.v]
        w = [x & 1 for x in t.w]
        for i in range(n + 1):
            for j in range(m + 1):
                for k in range(N):
                    e = system.equation_index(i, j, k)
                    if v[j] and w[k]:
                        rows[e] |= 1 << system.alpha(l, i)
                    if u[i] and w[k]:
                        rows[e] |= 1 << system.beta(l, j)
                    if u[i] and v[j]:
                        rows[e] |= 1 << system.gamma(l, k)
    return rows


def hensel_lift(s, k=DEFAULT_BITS, pivot_rule="natural"):
    """Lift a verified Z2 scheme to one over Z/2^k, one bit per Newton stage."""
    from brent import build_brent

    if s.domain.kind != GF2:
        raise LiftError(f"Hensel lifting starts from a Z2 scheme, got {s.domain}")
    if not is_multiplication_tensor(s):
        raise LiftError("Input scheme does not represent the multiplication tensor", stage=0)
    ring = CoeffDomain.zpow2(k)
    system = build_brent(s.n, s.m, s.rank)
    solver = Gf2Elimination(jacobian_mod2(system, s), system.num_vars, pivot_rule)
    values = system.flatten(s)
    current = s.to_domain(ring)
    for t in range(1, k):
        residual = contract(current).array
        rhs = 0
        for i, j, kk in system.equations():
            e = (residual[i, j, kk] - (1 if i + j == kk else 0)) % ring.modulus
            if e % (1 << t):
                raise LiftError(f"Residual not divisible by 2^{t}", stage=t)
            if (e >> t) & 1:
                rhs |= 1 << system.equation_index(i, j, kk)
        if rhs == 0:
            continue
        delta = solver.solve(rhs)
        if delta is None:
            raise LiftError(f"Jacobian system inconsistent at stage {t}", stage=t)
        step = 1 << t
        values = [(x + step) % ring.modulus if delta >> c & 1 else x for c, x in enumerate(values)]
        current = system.unflatten(values, ring)
    if not is_multiplication_tensor(current):
        raise LiftError(f"Lifted scheme fails verification mod 2^{k}", stage=k)
    logger.debug("lifted (%d,%d) rank %d to Z/2^%d (%s pivots)", s.n, s.m, s.rank, k, pivot_rule)
    return current


def reconstruction_bound(modulus):
    return isqrt((modulus - 1) // 2)


def rational_reconstruct(a, modulus, bound=None):
    """p/q with |p|, q <= bound, gcd(q, modulus) = 1 and p/q = a mod modulus, or None."""
    bound = reconstruction_bound(modulus) if bound is None else bound
    a %= modulus
    r0, r1 = modulus, a
    t0, t1 = 0, 1
    while r1 > bound:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        t0, t1 = t1, t0 - q * t1
    if t1 == 0 or abs(t1) > bound or gcd(t1, modulus) != 1:
        return None
    return Fraction(r1, t1)


def rational_reconstruct_scheme(s, bound=None):
    if s.domain.kind != ZPOW2:
        raise LiftError(f"Rational reconstruction needs a Z2^k scheme, got {s.domain}")
    M = s.domain.modulus
    q = CoeffDomain.rational()

    def rebuild(vec):
        out = []
        for x in vec:
            f = rational_reconstruct(x, M, bound)
            if f is None:
                raise LiftError(f"Coefficient {x} mod {M} has no small rational preimage")
            out.append(f)
        return out

    terms = tuple(Term(*(CoeffVector.of(q, rebuild(t.slot(name))) for name in "uvw")) for t in s.terms)
    result = Scheme(s.n, s.m, q, terms)
    if not is_multiplication_tensor(result):
        raise LiftError("Reconstructed scheme fails exact verification over Q")
    return result


@dataclass(frozen=True)
class CoeffClass:
    kind: str  # "Z", "Z_inv" or "Q_general"
    denominator: int = 1
    primes: tuple = ()


def classify_coefficients(s, lifted=True):
    """
    Z when every coefficient is an integer, Z_inv(d) for d = lcm of the
    denominators. An even denominator cannot come out of a 2-adic lift and is
    an error when ``lifted``; otherwise it is reported as Q_general.
    """
    d = 1
    for t in s.terms:
        for name in "uvw":
            for x in t.slot(name):
                d = lcm(d, Fraction(x).denominator)
    if d == 1:
        return CoeffClass("Z")
    if d % 2 == 0:
        if lifted:
            raise LiftError(f"Even denominator {d} after a 2-adic lift")
        return CoeffClass("Q_general", d, tuple(sorted(factorint(d))))
    return CoeffClass("Z_inv", d, tuple(sorted(factorint(d))))


@dataclass
class LiftReport:
    outcome: str
    scheme: Optional[object] = None
    k: int = DEFAULT_BITS
    pivot_rule: Optional[str] = None
    stage: Optional[int] = None
    reason: str = ""
    denominator: int = 1
    primes: tuple = ()
    attempts: list = field(default_factory=list)

    @property
    def table_class(self):
        """The rank table's lifting legend for this outcome."""
        if self.outcome == LIFTED_Z:
            return "Z"
        if self.outcome == LIFTED_Q:
            return "Z_inv" if set(self.primes) <= {3, 5, 7} else "Q"
        if self.outcome == MOD_2K_ONLY:
            return "mod_2k_only"
        return "failed"

    def to_dict(self):
        return {"outcome": self.outcome, "class": self.table_class, "k": self.k,
                "pivot_rule": self.pivot_rule, "stage": self.stage, "reason": self.reason,
                "denominator": self.denominator, "primes": list(self.primes),
                "attempts": self.attempts}


_PREFERENCE = {LIFTED_Z: 0, LIFTED_Q: 1, MOD_2K_ONLY: 2, FAILED: 3}


def _attempt(s, k, rule):
    try:
        lifted = hensel_lift(s, k, rule)
    except LiftError as e:
        return LiftReport(FAILED, None, k, rule, e.stage, str(e))
    try:
        rational = rational_reconstruct_scheme(lifted)
    except LiftError as e:
        return LiftReport(MOD_2K_ONLY, lifted, k, rule, k, str(e))
    cls = classify_coefficients(rational)
    if cls.kind == "Z":
        return LiftReport(LIFTED_Z, rational.to_domain(CoeffDomain.integer()), k, rule)
    return LiftReport(LIFTED_Q, rational, k, rule, denominator=cls.denominator, primes=cls.primes)


def lift_and_classify(s, k=DEFAULT_BITS, pivot_rules=PIVOT_RULES):
    """Run lift, reconstruction and classification under each pivot rule; keep the best."""
    best = None
    attempts = []
    for rule in pivot_rules:
        report = _attempt(s, k, rule)
        attempts.append({"pivot_rule": rule, "outcome": report.outcome, "stage": report.stage})
        if best is None or _PREFERENCE[report.outcome] < _PREFERENCE[best.outcome]:
            best = report
        if best.outcome == LIFTED_Z:
            break
    best.attempts = attempts
    logger.info("lift (%d,%d) rank %d: %s", s.n, s.m, s.rank, best.outcome)
    return best
