"""
Builders for named representations of the polynomial multiplication tensor:
standard, Karatsuba, Toom-Cook, and the small-field families for degrees (n,1)
and (n,2).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from coeff import CoeffDomain, PolyflipError, GF2
from tensor import CoeffVector, Scheme, Term, is_multiplication_tensor, load_scheme

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / "data"


class ConstructionError(PolyflipError):
    pass


@dataclass(frozen=True)
class EvalPoints:
    domain: CoeffDomain
    points: tuple

    def __post_init__(self):
        if not self.domain.is_field:
            raise ConstructionError(f"Evaluation points need a field, got {self.domain}")
        normed = tuple(self.domain.normalize(x) for x in self.points)
        if len(set(normed)) != len(normed):
            raise ConstructionError(f"Evaluation points must be distinct: {list(self.points)}")
        object.__setattr__(self, "points", normed)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


@dataclass(frozen=True)
class LagrangeMatrix:
    domain: CoeffDomain
    alpha: tuple  # alpha[l][k]: coefficient of x^l in the k-th Lagrange polynomial

    def column(self, k):
        return tuple(row[k] for row in self.alpha)


def default_points(count, domain):
    """0, 1, -1, 2, -2, ... reduced into the domain, smallest magnitudes first."""
    if not domain.is_field:
        raise ConstructionError(f"Evaluation points need a field, got {domain}")
    if domain.is_finite and count > domain.modulus:
        raise ConstructionError(
            f"{domain} has only {domain.modulus} elements, {count} distinct points needed")
    seen, points, mag = set(), [], 0
    while len(points) < count:
        for cand in ((0,) if mag == 0 else (mag, -mag)):
            value = domain.normalize(cand)
            if value not in seen and len(points) < count:
                seen.add(value)
                points.append(value)
        mag += 1
    return EvalPoints(domain, tuple(points))


def standard_scheme(n, m, domain):
    N = n + m + 1
    terms = [Term(CoeffVector.unit(domain, n + 1, i),
                  CoeffVector.unit(domain, m + 1, j),
                  CoeffVector.unit(domain, N, i + j))
             for i in range(n + 1) for j in range(m + 1)]
    return Scheme(n, m, domain, tuple(terms))


def _poly_mul(p, q, d):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] = d.add(out[i + j], d.mul(a, b))
    return out


def lagrange_coeffs(pts):
    d = pts.domain
    xs = pts.points
    size = len(xs)
    columns = []
    for k, xk in enumerate(xs):
        poly, denom = [1], 1
        for l, xl in enumerate(xs):
            if l == k:
                continue
            poly = _poly_mul(poly, [d.neg(xl), 1], d)
            denom = d.mul(denom, d.sub(xk, xl))
        inv = d.inv(denom)
        columns.append([d.mul(inv, c) for c in poly])
    alpha = tuple(tuple(columns[k][l] for k in range(size)) for l in range(size))
    return LagrangeMatrix(d, alpha)


def power_vector(x, length, domain):
    """(1, x, x^2, ...) as a coefficient vector."""
    values, acc = [], 1
    for _ in range(length):
        values.append(acc)
        acc = domain.mul(acc, x)
    return CoeffVector(domain, tuple(values))


def toom_cook_scheme(n, m, pts=None, domain=None):
    if pts is None:
        pts = default_points(n + m + 1, domain)
    if len(pts) != n + m + 1:
        raise ConstructionError(f"Toom-Cook ({n},{m}) needs {n + m + 1} points, got {len(pts)}")
    d = pts.domain
    lag = lagrange_coeffs(pts)
    terms = []
    for k, xk in enumerate(pts.points):
        terms.append(Term(power_vector(xk, n + 1, d),
                          power_vector(xk, m + 1, d),
                          CoeffVector(d, lag.column(k))))
    return Scheme(n, m, d, tuple(terms))


def shift_scheme(s, offset, new_n, new_m):
    """Embed s into degrees (new_n, new_m), shifting a- and c-indices by offset."""
    if offset < 0 or s.n + offset > new_n or s.m > new_m:
        raise ConstructionError(
            f"Cannot shift ({s.n},{s.m}) by {offset} into ({new_n},{new_m})")
    d = s.domain

    def pad(vec, shift, length):
        entries = [0] * length
        entries[shift:shift + len(vec)] = vec.entries
        return CoeffVector(d, tuple(entries))

    terms = [Term(pad(t.u, offset, new_n + 1), pad(t.v, 0, new_m + 1),
                  pad(t.w, offset, new_n + new_m + 1)) for t in s.terms]
    return Scheme(new_n, new_m, d, tuple(terms))


def block_union(n, m, blocks):
    """
    Sum of (scheme, offset) blocks embedded into degrees (n, m). Offsets shift
    the a- and c-indices; the caller is responsible for the blocks covering
    disjoint parts of T_{n,m}.
    """
    blocks = list(blocks)
    if not blocks:
        raise ConstructionError("block_union needs at least one block")
    out = shift_scheme(blocks[0][0], blocks[0][1], n, m)
    for s, offset in blocks[1:]:
        out = out + shift_scheme(s, offset, n, m)
    return out


def bundled_scheme(name, domain):
    """Load data/<name>.json and reduce it into the requested domain."""
    path = DATA_DIR / f"{name}.json"
    if not path.exists():
        raise ConstructionError(f"Bundled scheme {path.name} is missing")
    s = load_scheme(path)
    return s if s.domain == domain else s.to_domain(domain)


def karatsuba_scheme(domain):
    return bundled_scheme("karatsuba_1_1", domain)


def append_row(s):
    """
    (n,1) -> (n+1,1) by adding a_{n+1} (x) b_0 (x) c_{n+1} and
    a_{n+1} (x) b_1 (x) c_{n+2}; raises the rank by 2.
    """
    if s.m != 1:
        raise ConstructionError("append_row expects degree m = 1")
    n, d = s.n + 1, s.domain
    base = shift_scheme(s, 0, n, 1)
    extra = (Term(CoeffVector.unit(d, n + 1, n), CoeffVector.unit(d, 2, 0), CoeffVector.unit(d, n + 2, n)),
             Term(CoeffVector.unit(d, n + 1, n), CoeffVector.unit(d, 2, 1), CoeffVector.unit(d, n + 2, n + 1)))
    return base.with_terms(base.terms + extra)


def deg1_scheme(n, domain):
    """Rank ceil(3(n+1)/2) scheme for degrees (n, 1), valid over every domain."""
    if n < 1:
        raise ConstructionError(f"deg1_scheme needs n >= 1, got {n}")
    if n == 1:
        return karatsuba_scheme(domain)
    if n == 2:
        return bundled_scheme("deg1_base_2", domain)
    return block_union(n, 1, [(deg1_scheme(n - 2, domain), 0), (karatsuba_scheme(domain), n - 1)])


def _deg2_start(n):
    gf2 = CoeffDomain.gf2()
    block = bundled_scheme("block_2_2", gf2)
    if n == 5:
        return block_union(5, 2, [(block, 0), (block, 3)])
    base = deg2_base(5)
    if n == 6:
        low = shift_scheme(base, 0, 6, 2)
        extra = standard_scheme(0, 2, gf2)
        return low + shift_scheme(extra, 6, 6, 2)
    low = shift_scheme(base, 0, 7, 2)
    return low + shift_scheme(deg1_scheme(2, gf2).transpose(), 6, 7, 2)


def walk_deg2_base(n, seed=0, max_steps=200_000):
    """
    Walk the flip graph from the union of verified blocks (one rank above the
    target) to a rank 2n+1 scheme for degrees (n, 2). Plateau splits keep the
    walk moving once plain flips stop reducing.
    """
    from search import SearchConfig, SplitPolicy, random_walk

    start = _deg2_start(n)
    cfg = SearchConfig(seed=seed, max_steps=max_steps, plateau_limit=5_000,
                       split_policy=SplitPolicy(), target_rank=2 * n + 1)
    logger.info("deg2 base %d: walking from rank %d", n, start.rank)
    result = random_walk(start, cfg, walk_seed=seed)
    if result.rank > 2 * n + 1:
        raise ConstructionError(
            f"No rank-{2 * n + 1} base for ({n},2) within {max_steps} steps (best {result.rank})")
    return result.best


@lru_cache(maxsize=None)
def deg2_base(n):
    """
    GF(2) base scheme of rank 2n+1 for degrees (n, 2), n in {5, 6, 7}.

    Loaded from data/deg2_base_<n>.json, which make_base_schemes.py writes;
    walks only when the file is missing.
    """
    gf2 = CoeffDomain.gf2()
    if (DATA_DIR / f"deg2_base_{n}.json").exists():
        return bundled_scheme(f"deg2_base_{n}", gf2)
    return walk_deg2_base(n)


def deg2_scheme(n, domain=None):
    """Rank 2n+1 scheme over GF(2) for degrees (n, 2), n >= 5."""
    domain = domain or CoeffDomain.gf2()
    if domain.kind != GF2:
        raise ConstructionError("deg2_scheme is defined over Z2 only")
    if n < 5:
        raise ConstructionError(f"deg2_scheme needs n >= 5, got {n}")
    if n <= 7:
        return deg2_base(n)
    return block_union(n, 2, [(deg2_scheme(n - 3, domain), 0),
                              (bundled_scheme("block_2_2", domain), n - 2)])


def build(kind, n, m, domain, points=None, verify=True):
    """Dispatch used by the CLI ``gen`` subcommand."""
    if kind == "standard":
        s = standard_scheme(n, m, domain)
    elif kind == "toom-cook":
        pts = EvalPoints(domain, tuple(points)) if points else default_points(n + m + 1, domain)
        s = toom_cook_scheme(n, m, pts)
    elif kind == "karatsuba":
        if (n, m) != (1, 1):
            raise ConstructionError("karatsuba is defined for degrees (1,1)")
        s = karatsuba_scheme(domain)
    elif kind == "deg1":
        if m != 1:
            raise ConstructionError("deg1 needs m = 1")
        s = deg1_scheme(n, domain)
    elif kind == "deg2":
        if m != 2:
            raise ConstructionError("deg2 needs m = 2")
        s = deg2_scheme(n, domain)
    else:
        raise ConstructionError(f"Unknown scheme kind {kind!r}")
    if verify and not is_multiplication_tensor(s):
        raise ConstructionError(f"{kind} ({n},{m}) over {domain} failed verification")
    return s
