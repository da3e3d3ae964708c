"""
Edges of the flip graph: flip, reduction, split and scalar rebalance.

Every move is scheme-in / scheme-out and leaves the represented tensor
unchanged. Slot matching is exact vector equality; callers working over
larger fields canonicalize first.
"""
import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from coeff import CoeffDomain, DomainError, PolyflipError
from tensor import SLOTS, CoeffVector, FormatError, Scheme, from_document, to_document

TRACE_FORMAT = "flip-trace/1"


class MoveError(PolyflipError):
    pass


@dataclass(frozen=True)
class Flip:
    i: int
    j: int
    shared: str
    orient: str  # slot of term i that is decremented, spelled "u-", "v-" or "w-"
    lam: object = 1

    @property
    def decremented(self):
        return self.orient.rstrip("-")

    @property
    def incremented(self):
        return next(s for s in SLOTS if s not in (self.shared, self.decremented))


@dataclass(frozen=True)
class FlipShape:
    """A legal flip with its coefficient left open."""
    i: int
    j: int
    shared: str
    orient: str

    def with_lambda(self, lam):
        return Flip(self.i, self.j, self.shared, self.orient, lam)


@dataclass(frozen=True)
class Reduction:
    i: int
    j: int
    shared: tuple

    @property
    def merged(self):
        return next(s for s in SLOTS if s not in self.shared)


@dataclass(frozen=True)
class Split:
    i: int
    slot: str
    part: CoeffVector


@dataclass(frozen=True)
class Rebalance:
    i: int
    src: str
    dst: str
    alpha: object


def _check_index(s, *idx):
    for i in idx:
        if not 0 <= i < s.rank:
            raise MoveError(f"Term index {i} out of range for rank {s.rank}")


def _check_slot(name):
    if name not in SLOTS:
        raise MoveError(f"Unknown slot {name!r}")


def apply_flip(s, mv):
    _check_index(s, mv.i, mv.j)
    if mv.i == mv.j:
        raise MoveError("A flip needs two distinct terms")
    _check_slot(mv.shared)
    t_name = mv.decremented
    _check_slot(t_name)
    if t_name == mv.shared:
        raise MoveError(f"Flip orientation {mv.orient!r} names the shared slot")
    d = s.domain
    lam = d.normalize(mv.lam)
    if lam == 0:
        return s
    ti, tj = s.terms[mv.i], s.terms[mv.j]
    if ti.slot(mv.shared) != tj.slot(mv.shared):
        raise MoveError(f"Terms {mv.i} and {mv.j} differ in slot {mv.shared}")
    r_name = mv.incremented
    new_t = ti.slot(t_name).axpy(d.neg(lam), tj.slot(t_name))
    new_r = tj.slot(r_name).axpy(lam, ti.slot(r_name))
    if new_t.is_zero or new_r.is_zero:
        raise MoveError(f"Flip on terms {mv.i},{mv.j} would create a zero slot; use a reduction")
    terms = list(s.terms)
    terms[mv.i] = ti.replace(t_name, new_t)
    terms[mv.j] = tj.replace(r_name, new_r)
    return s.with_terms(terms)


def apply_reduction(s, mv):
    _check_index(s, mv.i, mv.j)
    if mv.i == mv.j:
        raise MoveError("A reduction needs two distinct terms")
    if len(set(mv.shared)) != 2:
        raise MoveError(f"A reduction shares exactly two slots, got {mv.shared!r}")
    for name in mv.shared:
        _check_slot(name)
    ti, tj = s.terms[mv.i], s.terms[mv.j]
    for name in mv.shared:
        if ti.slot(name) != tj.slot(name):
            raise MoveError(f"Terms {mv.i} and {mv.j} differ in slot {name}")
    merged = ti.slot(mv.merged).add(tj.slot(mv.merged))
    terms = list(s.terms)
    # the zero-merge case drops both terms via Scheme's pruning
    terms[mv.i] = ti.replace(mv.merged, merged)
    del terms[mv.j]
    return s.with_terms(terms)


def apply_split(s, mv):
    _check_index(s, mv.i)
    _check_slot(mv.slot)
    t = s.terms[mv.i]
    whole = t.slot(mv.slot)
    part = mv.part
    if part.domain != s.domain or len(part) != len(whole):
        raise MoveError(f"Split part does not match slot {mv.slot} of term {mv.i}")
    rest = whole.sub(part)
    if part.is_zero or rest.is_zero:
        raise MoveError(f"Degenerate split of term {mv.i}: one part is zero")
    terms = list(s.terms)
    terms[mv.i] = t.replace(mv.slot, part)
    terms.append(t.replace(mv.slot, rest))
    return s.with_terms(terms)


def apply_rebalance(s, mv):
    _check_index(s, mv.i)
    _check_slot(mv.src)
    _check_slot(mv.dst)
    if mv.src == mv.dst:
        raise MoveError("Rebalance needs two different slots")
    d = s.domain
    alpha = d.normalize(mv.alpha)
    try:
        inv = d.inv(alpha)
    except DomainError as e:
        raise MoveError(f"Rebalance factor not invertible: {e}") from None
    if alpha == 1:
        return s
    t = s.terms[mv.i]
    t = t.replace(mv.src, t.slot(mv.src).scale(inv))
    t = t.replace(mv.dst, t.slot(mv.dst).scale(alpha))
    terms = list(s.terms)
    terms[mv.i] = t
    return s.with_terms(terms)


_APPLY = {
    Flip: apply_flip,
    Reduction: apply_reduction,
    Split: apply_split,
    Rebalance: apply_rebalance,
}


def apply_move(s, mv):
    try:
        fn = _APPLY[type(mv)]
    except KeyError:
        raise MoveError(f"Unknown move {mv!r}") from None
    return fn(s, mv)


def _groups(s, names):
    groups = {}
    for idx, t in enumerate(s.terms):
        key = tuple(t.slot(name).entries for name in names)
        groups.setdefault(key, []).append(idx)
    return groups.values()


def enumerate_reductions(s):
    """One Reduction per unordered pair of terms agreeing in at least two slots."""
    found = {}
    for pair in combinations(SLOTS, 2):
        for members in _groups(s, pair):
            for i, j in combinations(members, 2):
                found.setdefault((i, j), Reduction(i, j, pair))
    return [found[key] for key in sorted(found)]


def enumerate_flips(s):
    shapes = []
    for shared in SLOTS:
        others = [name for name in SLOTS if name != shared]
        for members in _groups(s, (shared,)):
            for i, j in combinations(members, 2):
                shapes.extend(FlipShape(i, j, shared, f"{o}-") for o in others)
    return shapes


def inverse_flip(mv):
    return Flip(mv.i, mv.j, mv.shared, mv.orient, -mv.lam)


@dataclass
class MoveTrace:
    n: int
    m: int
    domain: CoeffDomain
    start: object = "standard"  # "standard" or an explicit Scheme
    moves: list = None

    def __post_init__(self):
        if self.moves is None:
            self.moves = []

    def __len__(self):
        return len(self.moves)

    def append(self, mv):
        self.moves.append(mv)

    def start_scheme(self):
        if isinstance(self.start, Scheme):
            return self.start
        if self.start == "standard":
            from construct import standard_scheme
            return standard_scheme(self.n, self.m, self.domain)
        raise FormatError(f"Unknown trace start {self.start!r}")

    def counts(self):
        tally = {"flip": 0, "reduction": 0, "split": 0, "rebalance": 0}
        for mv in self.moves:
            tally[_OP_NAMES[type(mv)]] += 1
        return tally


_OP_NAMES = {Flip: "flip", Reduction: "reduction", Split: "split", Rebalance: "rebalance"}


def move_to_document(mv, domain):
    fmt = domain.format_value
    if isinstance(mv, Flip):
        return {"op": "flip", "i": mv.i, "j": mv.j, "shared": mv.shared,
                "orient": mv.orient, "lambda": fmt(domain.normalize(mv.lam))}
    if isinstance(mv, Reduction):
        return {"op": "reduction", "i": mv.i, "j": mv.j, "shared": list(mv.shared)}
    if isinstance(mv, Split):
        return {"op": "split", "i": mv.i, "slot": mv.slot, "part": [fmt(x) for x in mv.part]}
    if isinstance(mv, Rebalance):
        return {"op": "rebalance", "i": mv.i, "from": mv.src, "to": mv.dst,
                "alpha": fmt(domain.normalize(mv.alpha))}
    raise MoveError(f"Unknown move {mv!r}")


def move_from_document(doc, domain):
    value = domain.parse_value
    op = doc["op"]
    if op == "flip":
        return Flip(int(doc["i"]), int(doc["j"]), doc["shared"], doc["orient"], value(str(doc["lambda"])))
    if op == "reduction":
        return Reduction(int(doc["i"]), int(doc["j"]), tuple(doc["shared"]))
    if op == "split":
        part = CoeffVector(domain, tuple(value(str(x)) for x in doc["part"]))
        return Split(int(doc["i"]), doc["slot"], part)
    if op == "rebalance":
        return Rebalance(int(doc["i"]), doc["from"], doc["to"], value(str(doc["alpha"])))
    raise FormatError(f"Unknown move op {op!r}")


def serialize_trace(trace):
    start = trace.start if trace.start == "standard" else to_document(trace.start)
    doc = {
        "format": TRACE_FORMAT,
        "n": trace.n,
        "m": trace.m,
        "domain": str(trace.domain),
        "start": start,
        "moves": [move_to_document(mv, trace.domain) for mv in trace.moves],
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def deserialize_trace(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"Trace file is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != TRACE_FORMAT:
        raise FormatError("Unsupported trace format")
    try:
        domain = CoeffDomain.parse(doc["domain"])
        start = doc.get("start", "standard")
        if start != "standard":
            start = from_document(start)
        moves = [move_from_document(mv, domain) for mv in doc["moves"]]
        return MoveTrace(int(doc["n"]), int(doc["m"]), domain, start, moves)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Malformed trace document: {e}") from None
    except DomainError as e:
        raise FormatError(str(e)) from None


def load_trace(path):
    return deserialize_trace(Path(path).read_text(encoding="utf-8"))


def save_trace(trace, path):
    path = Path(path)
    path.write_text(serialize_trace(trace), encoding="utf-8")
    return path


def karatsuba_derivation(domain=None):
    """Two flips and one reduction take the standard (1,1) scheme to Karatsuba."""
    domain = domain or CoeffDomain.integer()
    return MoveTrace(1, 1, domain, "standard", [
        Flip(0, 2, "v", "w-", 1),
        Flip(3, 1, "v", "w-", 1),
        Reduction(1, 2, ("u", "w")),
    ])
