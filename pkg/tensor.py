"""
Schemes: sums of rank-one terms u (x) v (x) w representing the polynomial
multiplication tensor T_{n,m} = sum_{i,j} a_i (x) b_j (x) c_{i+j}.

A scheme is value-semantic: every operation returns a new scheme.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from coeff import CoeffDomain, Coefficient, DomainError, PolyflipError, GF2, ZPOW2, INTEGER

FORMAT = "bilin-scheme/1"
SLOTS = ("u", "v", "w")


class SchemeError(PolyflipError):
    pass


class FormatError(PolyflipError):
    pass


@dataclass(frozen=True)
class CoeffVector:
    domain: CoeffDomain
    entries: tuple

    @classmethod
    def of(cls, domain, values):
        return cls(domain, tuple(domain.normalize(x) for x in values))

    @classmethod
    def zeros(cls, domain, length):
        return cls(domain, (0,) * length)

    @classmethod
    def unit(cls, domain, length, index):
        entries = [0] * length
        entries[index] = 1
        return cls(domain, tuple(entries))

    @classmethod
    def from_bits(cls, bits, length):
        return cls(CoeffDomain.gf2(), tuple((bits >> i) & 1 for i in range(length)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def is_zero(self):
        return not any(self.entries)

    @property
    def bits(self):
        """GF(2) vectors packed into one int, bit i = coordinate i."""
        if self.domain.kind != GF2:
            raise SchemeError("bit packing is only defined over Z2")
        return sum(1 << i for i, x in enumerate(self.entries) if x)

    def _check(self, other):
        if other.domain != self.domain:
            raise DomainError(f"Cannot combine {self.domain} with {other.domain}")
        if len(other) != len(self):
            raise SchemeError(f"Vector length mismatch: {len(self)} vs {len(other)}")

    def add(self, other):
        self._check(other)
        add = self.domain.add
        return CoeffVector(self.domain, tuple(add(a, b) for a, b in zip(self.entries, other.entries)))

    def sub(self, other):
        self._check(other)
        sub = self.domain.sub
        return CoeffVector(self.domain, tuple(sub(a, b) for a, b in zip(self.entries, other.entries)))

    def scale(self, c):
        mul = self.domain.mul
        return CoeffVector(self.domain, tuple(mul(c, a) for a in self.entries))

    def axpy(self, c, other):
        """self + c * other"""
        self._check(other)
        d = self.domain
        return CoeffVector(d, tuple(d.add(a, d.mul(c, b)) for a, b in zip(self.entries, other.entries)))

    def first_nonzero(self):
        for x in self.entries:
            if x != 0:
                return x
        return 0

    def coefficients(self):
        return tuple(Coefficient(self.domain, x) for x in self.entries)

    def to_domain(self, domain):
        return CoeffVector.of(domain, self.entries)


@dataclass(frozen=True)
class Term:
    u: CoeffVector
    v: CoeffVector
    w: CoeffVector

    def slot(self, name):
        return getattr(self, name)

    def replace(self, name, vector):
        slots = {"u": self.u, "v": self.v, "w": self.w}
        slots[name] = vector
        return Term(**slots)

    @property
    def is_zero(self):
        return self.u.is_zero or self.v.is_zero or self.w.is_zero

    def key(self):
        return (self.u.entries, self.v.entries, self.w.entries)


@dataclass(frozen=True)
class Scheme:
    n: int
    m: int
    domain: CoeffDomain
    terms: tuple = field(default=())

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise SchemeError(f"Degrees must be non-negative, got ({self.n}, {self.m})")
        lengths = (self.n + 1, self.m + 1, self.n + self.m + 1)
        kept = []
        for idx, term in enumerate(self.terms):
            for name, length in zip(SLOTS, lengths):
                vec = term.slot(name)
                if len(vec) != length:
                    raise SchemeError(
                        f"Term {idx}: slot {name} has length {len(vec)}, expected {length}")
                if vec.domain != self.domain:
                    raise SchemeError(f"Term {idx}: slot {name} is over {vec.domain}, not {self.domain}")
            if not term.is_zero:
                kept.append(term)
        object.__setattr__(self, "terms", tuple(kept))

    @property
    def rank(self):
        return len(self.terms)

    @property
    def lengths(self):
        return self.n + 1, self.m + 1, self.n + self.m + 1

    def with_terms(self, terms):
        return Scheme(self.n, self.m, self.domain, tuple(terms))

    def __add__(self, other):
        if (other.n, other.m, other.domain) != (self.n, self.m, self.domain):
            raise SchemeError("Cannot join schemes of different shape or domain")
        return self.with_terms(self.terms + other.terms)

    def to_domain(self, domain):
        """Reduce (or embed) every coefficient into another domain."""
        terms = [Term(t.u.to_domain(domain), t.v.to_domain(domain), t.w.to_domain(domain))
                 for t in self.terms]
        return Scheme(self.n, self.m, domain, tuple(terms))

    def transpose(self):
        """Swap the roles of the a- and b-side."""
        return Scheme(self.m, self.n, self.domain, tuple(Term(t.v, t.u, t.w) for t in self.terms))


@dataclass(frozen=True)
class DenseTensor:
    n: int
    m: int
    domain: CoeffDomain
    array: np.ndarray = field(compare=False)

    @classmethod
    def multiplication(cls, n, m, domain):
        arr = np.zeros((n + 1, m + 1, n + m + 1), dtype=object)
        for i in range(n + 1):
            for j in range(m + 1):
                arr[i, j, i + j] = 1
        return cls(n, m, domain, arr)

    def __eq__(self, other):
        return (isinstance(other, DenseTensor)
                and (self.n, self.m, self.domain) == (other.n, other.m, other.domain)
                and np.array_equal(self.array, other.array))

    def __getitem__(self, idx):
        return self.array[idx]

    def __add__(self, other):
        return DenseTensor(self.n, self.m, self.domain, _reduce(self.array + other.array, self.domain))


def _reduce(arr, domain):
    mod = domain.modulus
    if mod is not None:
        return arr % mod
    return arr


def contract(s):
    """Sum of the outer products u (x) v (x) w of all terms."""
    n, m = s.n, s.m
    arr = np.zeros((n + 1, m + 1, n + m + 1), dtype=object)
    for t in s.terms:
        u = np.array(t.u.entries, dtype=object)
        v = np.array(t.v.entries, dtype=object)
        w = np.array(t.w.entries, dtype=object)
        arr = arr + np.multiply.outer(np.multiply.outer(u, v), w)
    return DenseTensor(n, m, s.domain, _reduce(arr, s.domain))


def is_multiplication_tensor(s):
    if s.domain.kind == GF2:
        return _is_multiplication_tensor_gf2(s)
    return contract(s) == DenseTensor.multiplication(s.n, s.m, s.domain)


def _is_multiplication_tensor_gf2(s):
    # rows indexed by (i, j): the packed w-sum must be the single bit i+j
    acc = {}
    for t in s.terms:
        wb = t.w.bits
        for i, ui in enumerate(t.u.entries):
            if ui:
                for j, vj in enumerate(t.v.entries):
                    if vj:
                        acc[i, j] = acc.get((i, j), 0) ^ wb
    for i in range(s.n + 1):
        for j in range(s.m + 1):
            if acc.get((i, j), 0) != 1 << (i + j):
                return False
    return True


def matrix_rank(rows, domain):
    """Rank of a list of equal-length coefficient rows over a field (Z is ranked over Q)."""
    if domain.kind == ZPOW2:
        raise SchemeError("Rank is not defined over Z2^k (not a field)")
    if domain.kind == GF2:
        return _rank_gf2([sum(1 << i for i, x in enumerate(r) if x) for r in rows])
    if domain.kind == INTEGER:
        domain = CoeffDomain.rational()
    rows = [list(domain.normalize(x) for x in r) for r in rows]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inv = domain.inv(rows[rank][col])
        prow = [domain.mul(inv, x) for x in rows[rank]]
        rows[rank] = prow
        for r in range(rank + 1, len(rows)):
            f = rows[r][col]
            if f != 0:
                rows[r] = [domain.sub(a, domain.mul(f, b)) for a, b in zip(rows[r], prow)]
        rank += 1
    return rank


def _rank_gf2(rows):
    pivots = {}
    for row in rows:
        while row:
            top = row.bit_length() - 1
            if top not in pivots:
                pivots[top] = row
                break
            row ^= pivots[top]
    return len(pivots)


def flattening_rank(s, slot):
    if slot not in SLOTS:
        raise SchemeError(f"Unknown slot {slot!r}")
    return matrix_rank([t.slot(slot).entries for t in s.terms], s.domain)


def canonicalize(s):
    """
    Normalize each term so the first nonzero entries of u and v are 1 (scalars
    pushed into w), then sort terms. Over Z2^k and Z only the sorting applies.
    """
    d = s.domain
    terms = list(s.terms)
    if d.is_field:
        normed = []
        for t in terms:
            au, av = t.u.first_nonzero(), t.v.first_nonzero()
            u = t.u.scale(d.inv(au))
            v = t.v.scale(d.inv(av))
            w = t.w.scale(d.mul(au, av))
            normed.append(Term(u, v, w))
        terms = normed
    terms.sort(key=Term.key)
    return s.with_terms(terms)


def to_document(s):
    fmt = s.domain.format_value
    return {
        "format": FORMAT,
        "n": s.n,
        "m": s.m,
        "domain": str(s.domain),
        "terms": [{name: [fmt(x) for x in t.slot(name)] for name in SLOTS} for t in s.terms],
    }


def serialize(s):
    return json.dumps(to_document(s), separators=(",", ":"), ensure_ascii=False)


def deserialize(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"Scheme file is not valid JSON: {e}") from None
    return from_document(doc)


def from_document(doc):
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise FormatError(f"Unsupported scheme format {doc.get('format') if isinstance(doc, dict) else None!r}")
    try:
        n, m = int(doc["n"]), int(doc["m"])
        domain = CoeffDomain.parse(doc["domain"])
        terms = []
        for idx, raw in enumerate(doc["terms"]):
            vecs = {}
            for name, length in zip(SLOTS, (n + 1, m + 1, n + m + 1)):
                values = raw[name]
                if len(values) != length:
                    raise FormatError(f"Term {idx}: slot {name} has {len(values)} entries, expected {length}")
                vecs[name] = CoeffVector(domain, tuple(domain.parse_value(str(x)) for x in values))
            terms.append(Term(**vecs))
    except (KeyError, TypeError) as e:
        raise FormatError(f"Malformed scheme document: missing or invalid {e}") from None
    except DomainError as e:
        raise FormatError(str(e)) from None
    return Scheme(n, m, domain, tuple(terms))


def load_scheme(path):
    return deserialize(Path(path).read_text(encoding="utf-8"))


def save_scheme(s, path):
    path = Path(path)
    path.write_text(serialize(s), encoding="utf-8")
    return path
