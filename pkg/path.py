"""
Deterministic construction of a flip/reduction path from the standard
representation of T_{n,m} to its Toom-Cook representation.

Each recursion level peels one evaluation point z off the degree pair
(n, m), m >= n:

  1. flips rewrite the standard terms so that column j >= 1 carries the
     factor (x - z) in its third slot (``lemma_b_flips``);
  2. the remaining terms form T_{n,m-1} over the remaining points, which is
     solved recursively;
  3. one round of flips per remaining point y folds the leftover terms into
     A(y) (x) B(y) (x) L_y (``lemma_c_flips``), and a final reduction step
     closes the level at the last point f.

Moves are emitted against the live scheme; rebalances are free and not
counted as path length.
"""
import logging
from dataclasses import asdict, dataclass, field

from coeff import PolyflipError
from construct import EvalPoints, default_points, standard_scheme
from moves import Flip, MoveError, MoveTrace, Rebalance, Reduction, apply_move
from tensor import SLOTS, is_multiplication_tensor

logger = logging.getLogger(__name__)


class PathError(PolyflipError):
    pass


@dataclass
class PathStats:
    n: int
    m: int
    flips: int = 0
    reductions: int = 0
    rebalances: int = 0
    final_rank: int = 0
    recurrence_flips: int = 0
    closed_form_flips: int = 0
    split_path_length: int = 0
    lemma_b: list = field(default_factory=list)
    rounds: list = field(default_factory=list)  # (active terms, flips) per folding round
    levels: list = field(default_factory=list)  # LevelStats.to_dict() per level, innermost first

    def to_dict(self):
        return asdict(self)


@dataclass
class LevelStats:
    """
    Flips one recursion level spends on its own, next to what the recurrence
    charges that level. ``total`` includes the sub-level.
    """
    n: int
    m: int
    z: str
    f: str
    peel: int = 0
    rounds: list = field(default_factory=list)
    closing: int = 0
    total: int = 0

    @property
    def own(self):
        return self.peel + sum(c for _, c in self.rounds) + self.closing

    def to_dict(self):
        peel, fold, close = recurrence_terms(self.n, self.m)
        return dict(asdict(self), own=self.own,
                    recurrence=dict(peel=peel, rounds=fold, closing=close))


def recurrence_terms(n, m):
    """(peel, folding, closing) flips the recurrence charges one level (n, m), m >= n."""
    if n == 0 or m == 0:
        return 0, 0, 0
    return n * m + (n - 1) * (m - 1) + n, (n + m - 1) * (2 * n + 1), 1


def flip_recurrence(n, m):
    """
    F(n,m) = B(n,m) + F(n,m-1) + (n+m-1)(2n+1) + 1 for m >= n, with
    B(n,m) = nm + (n-1)(m-1) + n and F(n,0) = F(0,m) = 0.

    Charges the n = 0 levels nothing; the emitted path pays m^2 flips for
    (0, m) with the default points.
    """
    if n > m:
        n, m = m, n
    total = 0
    while n > 0 and m > 0:
        total += sum(recurrence_terms(n, m))
        if m - 1 < n:
            n, m = m - 1, n
        else:
            m -= 1
    return total


def closed_form(n, m):
    return n * m * (2 * n + 2 * m + 1)


def split_path_length(n, m):
    """Splits plus reductions of the path that multiplies out every Toom-Cook term."""
    splits = n * m * (n + m) * (n + m + 1) ** 2
    return splits + splits - (n + 1) * (m + 1)


class PathBuilder:
    """Live scheme plus stable term labels; every emitted move is applied at once."""

    def __init__(self, start, verify=True):
        self.scheme = start
        self.labels = list(range(start.rank))
        self.trace = MoveTrace(start.n, start.m, start.domain, "standard", [])
        self.verify = verify
        self.flips = 0
        self.reductions = 0
        self.rebalances = 0

    @property
    def domain(self):
        return self.scheme.domain

    def index(self, label):
        return self.labels.index(label)

    def _emit(self, mv):
        try:
            self.scheme = apply_move(self.scheme, mv)
        except MoveError as e:
            raise PathError(f"step {len(self.trace)}: {e}") from None
        if self.verify and not is_multiplication_tensor(self.scheme):
            raise PathError(f"step {len(self.trace)}: state no longer represents T_{{n,m}}")
        self.trace.append(mv)

    def flip(self, li, lj, shared, decremented, lam):
        lam = self.domain.normalize(lam)
        if lam == 0:
            return 0
        self._emit(Flip(self.index(li), self.index(lj), shared, f"{decremented}-", lam))
        self.flips += 1
        return 1

    def reduce(self, li, lj, shared):
        shared = tuple(sorted(shared, key=SLOTS.index))
        before = self.scheme.rank
        j = self.index(lj)
        self._emit(Reduction(self.index(li), j, shared))
        if self.scheme.rank != before - 1:
            raise PathError(f"step {len(self.trace) - 1}: reduction removed both terms")
        del self.labels[j]
        self.reductions += 1

    def rebalance(self, label, src, dst, alpha):
        alpha = self.domain.normalize(alpha)
        if alpha == 1:
            return
        self._emit(Rebalance(self.index(label), src, dst, alpha))
        self.rebalances += 1


def _powers(d, x, n):
    return [d.power(x, i) for i in range(n + 1)]


def _pivot(d, n, z, y, remaining):
    """
    Active indices S = {i : y^i != z^i} and a pivot p in S whose scaled third
    slot T_p(x) = (x^i - z^i)/(y^i - z^i), x over ``remaining``, differs from
    every other T_i. Returns (S, p); p is None when no pivot exists.
    """
    zp, yp = _powers(d, z, n), _powers(d, y, n)
    active = [i for i in range(1, n + 1) if yp[i] != zp[i]]
    if not active:
        return active, None
    table = {}
    for i in active:
        kappa = d.inv(d.sub(yp[i], zp[i]))
        table[i] = tuple(d.mul(d.sub(d.power(x, i), zp[i]), kappa) for x in remaining)
    for p in active:
        if all(table[i] != table[p] for i in active if i != p):
            return active, p
    return active, None


def _rounds_ok(d, n, z, f, order):
    remaining = list(order) + [f]
    for y in order:
        active, p = _pivot(d, n, z, y, remaining)
        if active and p is None:
            return False
        remaining.remove(y)
    return True


def choose_points(pts, n):
    """
    Peeled point z, final point f and the order of the folding rounds for one
    level. f must satisfy f^i != z^i for 1 <= i <= n and every round needs a
    pivot; candidates are tried in the order the points were given.
    """
    d = pts.domain
    xs = list(pts.points)
    for z in xs:
        zp = _powers(d, z, n)
        for f in xs:
            if f == z or any(d.power(f, i) == zp[i] for i in range(1, n + 1)):
                continue
            others = [x for x in xs if x not in (z, f)]
            for order in (others, others[::-1]):
                if _rounds_ok(d, n, z, f, order):
                    return z, f, order
    raise PathError(f"No admissible peeling order for degree {n} over points {xs}")


def lemma_b_flips(b, n, m, z, grid, ru, rv):
    """
    Rewrite the standard block so term (i,j), j >= 1, has third slot
    x^{i+j-1}(x - z) and term (i,0) becomes a_i (x) B(z) (x) (x^i - z^i),
    with the root (0,0) carrying A(z) (x) B(z) (x) 1. Returns the flip count.
    """
    d = b.domain
    count = 0
    for i in range(n + 1):
        for j in range(m, 0, -1):
            count += b.flip(grid[i, j - 1], grid[i, j], ru, rv, d.neg(z))
    for i in range(1, n + 1):
        count += b.flip(grid[0, 0], grid[i, 0], rv, ru, d.neg(d.power(z, i)))
    return count


def lemma_c_flips(b, n, z, y, root, extra, product, kappa, remaining, ru, rv):
    """
    One folding round for point y: moves A(y) (x) B(z) (x) L_y out of the
    leftover terms (root and extra[1..n]) into ``product``, turning it into
    A(y) (x) B(y) (x) L_y. Returns (active count, flip count).
    """
    d = b.domain
    active, p = _pivot(d, n, z, y, remaining)
    if not active:
        return 0, b.flip(product, root, ru, rv, -1)
    if p is None:
        raise PathError(f"No pivot for folding round at point {y}")
    for i in active:
        target = d.sub(d.power(y, i), d.power(z, i))
        b.rebalance(extra[i], "w", ru, d.div(target, kappa[i]))
        kappa[i] = target
    others = [i for i in active if i != p]
    count = 0
    for i in others:
        count += b.flip(extra[p], extra[i], rv, ru, -1)
    count += b.flip(extra[p], root, rv, ru, -1)
    count += b.flip(product, extra[p], ru, rv, -1)
    count += b.flip(extra[p], root, rv, ru, 1)
    for i in others:
        count += b.flip(extra[p], extra[i], rv, ru, 1)
    return len(active), count


def _solve(b, stats, n, m, pts, grid, ru, rv):
    if n > m:
        return _solve(b, stats, m, n, pts, {(j, i): lab for (i, j), lab in grid.items()}, rv, ru)
    if m == 0:
        return {pts.points[0]: grid[0, 0]}
    d = pts.domain
    z, f, order = choose_points(pts, n)
    logger.debug("level (%d,%d): peel %s, close at %s", n, m, z, f)
    level = LevelStats(n, m, str(z), str(f))
    start = b.flips

    level.peel = lemma_b_flips(b, n, m, z, grid, ru, rv)
    stats.lemma_b.append(level.peel)

    sub_grid = {(i, j - 1): grid[i, j] for i in range(n + 1) for j in range(1, m + 1)}
    sub_pts = EvalPoints(d, tuple(x for x in pts.points if x != z))
    products = _solve(b, stats, n, m - 1, sub_pts, sub_grid, ru, rv)
    for y, label in products.items():
        b.rebalance(label, "w", rv, d.sub(y, z))

    root = grid[0, 0]
    extra = {i: grid[i, 0] for i in range(1, n + 1)}
    kappa = {i: 1 for i in extra}
    remaining = list(order) + [f]
    for y in order:
        level.rounds.append(lemma_c_flips(b, n, z, y, root, extra, products[y], kappa, remaining, ru, rv))
        remaining.remove(y)
    stats.rounds.extend(level.rounds)

    if n == 0:
        level.closing = b.flip(products[f], root, ru, rv, -1)
    else:
        for i in extra:
            b.rebalance(extra[i], "w", ru, d.div(d.sub(d.power(f, i), d.power(z, i)), kappa[i]))
        for i in range(2, n + 1):
            b.reduce(extra[1], extra[i], (rv, "w"))
        level.closing = b.flip(extra[1], root, rv, ru, -1)
        b.reduce(products[f], extra[1], (ru, "w"))

    level.total = b.flips - start
    stats.levels.append(level.to_dict())
    result = dict(products)
    result[z] = root
    return result


def toomcook_path(n, m, pts=None, domain=None, verify=True):
    """Emit the trace from standard_scheme(n, m) to the Toom-Cook scheme at pts."""
    if pts is None:
        pts = default_points(n + m + 1, domain)
    if len(pts) != n + m + 1:
        raise PathError(f"Path ({n},{m}) needs {n + m + 1} points, got {len(pts)}")
    start = standard_scheme(n, m, pts.domain)
    b = PathBuilder(start, verify=verify)
    stats = PathStats(n, m)
    grid = {(i, j): i * (m + 1) + j for i in range(n + 1) for j in range(m + 1)}
    _solve(b, stats, n, m, pts, grid, "u", "v")

    stats.flips = b.flips
    stats.reductions = b.reductions
    stats.rebalances = b.rebalances
    stats.final_rank = b.scheme.rank
    stats.recurrence_flips = flip_recurrence(n, m)
    stats.closed_form_flips = closed_form(n, m)
    stats.split_path_length = split_path_length(n, m)
    if stats.reductions != n * m or stats.final_rank != n + m + 1:
        raise PathError(f"Path ({n},{m}) ended at rank {stats.final_rank} after {stats.reductions} reductions")
    logger.info("path (%d,%d): %d flips, %d reductions", n, m, stats.flips, stats.reductions)
    return b.trace, stats


def replay(trace, verify_each=False):
    s = trace.start_scheme()
    for k, mv in enumerate(trace.moves):
        try:
            s = apply_move(s, mv)
        except MoveError as e:
            raise PathError(f"step {k}: {e}") from None
        if verify_each and not is_multiplication_tensor(s):
            raise PathError(f"step {k}: state no longer represents the multiplication tensor")
    return s
