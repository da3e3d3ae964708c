"""
Seeded random walks on the flip graph.

Step policy: whenever a reduction is applicable one is applied (chosen
uniformly); otherwise a uniformly random flip shape is taken, with lambda = 1
over Z2 and a uniform nonzero lambda over Zp. After ``plateau_limit`` steps
without improvement a split may push the walk off a plateau.

Per-walk seeds come from the campaign seed through splitmix64, and each walk
draws from its own numpy PCG64 generator, so results do not depend on how
walks are scheduled.
"""
import hashlib
import logging
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from coeff import CoeffDomain, PolyflipError, GF2
from construct import standard_scheme
from moves import MoveError, Split, apply_flip, apply_reduction, apply_split, \
    enumerate_flips, enumerate_reductions
from tensor import CoeffVector, Scheme, Term, canonicalize, is_multiplication_tensor

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


class SearchError(PolyflipError):
    pass


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed, index):
    """Seed of stream ``index`` under campaign seed ``seed``."""
    return splitmix64((seed & MASK64) ^ splitmix64(index))


@dataclass(frozen=True)
class SplitPolicy:
    excursion_budget: int = 1
    probability: float = 1.0

    def __post_init__(self):
        if self.excursion_budget < 0:
            raise ValueError("excursion_budget must be >= 0")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("split probability must lie in [0, 1]")


@dataclass(frozen=True)
class SearchConfig:
    seed: int = 0
    max_steps: int = 100_000
    plateau_limit: int = 20_000
    split_policy: Optional[SplitPolicy] = None
    restarts: int = 0
    walks: int = 1
    target_rank: Optional[int] = None
    domain: CoeffDomain = field(default_factory=CoeffDomain.gf2)
    visited_limit: int = 0
    workers: int = 0
    verify_each: bool = False

    def __post_init__(self):
        for name in ("max_steps", "plateau_limit", "restarts", "walks", "visited_limit", "workers"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.domain.is_field:
            raise ValueError(f"Walks need a field, got {self.domain}")


@dataclass
class SearchResult:
    best: Scheme
    rank: int
    steps_taken: int
    walk_id: int
    rng_transcript_hash: str
    seed: int = 0
    walks: list = field(default_factory=list)

    def summary(self):
        return {"walk_id": self.walk_id, "rank": self.rank, "steps": self.steps_taken,
                "seed": self.seed, "transcript": self.rng_transcript_hash}


class Visited:
    """Bounded LRU set of state keys."""

    def __init__(self, limit):
        self.limit = limit
        self._keys = OrderedDict()

    def seen(self, key):
        if self.limit <= 0:
            return False
        if key in self._keys:
            self._keys.move_to_end(key)
            return True
        self._keys[key] = None
        if len(self._keys) > self.limit:
            self._keys.popitem(last=False)
        return False


class Gf2State:
    """
    Bit-packed Z2 scheme: each term is a (u, v, w) triple of ints. Keeps, per
    slot, the terms grouped by value and a flat list of term pairs that share
    a slot so flip shapes can be drawn uniformly in O(1).
    """

    def __init__(self, scheme):
        self.n, self.m = scheme.n, scheme.m
        self.terms = {}
        self.groups = ({}, {}, {})
        self.pairs = []
        self.pair_pos = {}
        self._next = 0
        for t in scheme.terms:
            self.add((t.u.bits, t.v.bits, t.w.bits))

    @property
    def rank(self):
        return len(self.terms)

    def _add_pair(self, key):
        self.pair_pos[key] = len(self.pairs)
        self.pairs.append(key)

    def _drop_pair(self, key):
        pos = self.pair_pos.pop(key)
        last = self.pairs.pop()
        if pos < len(self.pairs):
            self.pairs[pos] = last
            self.pair_pos[last] = pos

    def _join(self, tid, s, value):
        group = self.groups[s].setdefault(value, set())
        for other in group:
            self._add_pair((s, min(tid, other), max(tid, other)))
        group.add(tid)

    def _leave(self, tid, s, value):
        group = self.groups[s][value]
        group.discard(tid)
        for other in group:
            self._drop_pair((s, min(tid, other), max(tid, other)))
        if not group:
            del self.groups[s][value]

    def add(self, term):
        tid = self._next
        self._next += 1
        self.terms[tid] = term
        for s in range(3):
            self._join(tid, s, term[s])
        return tid

    def remove(self, tid):
        term = self.terms.pop(tid)
        for s in range(3):
            self._leave(tid, s, term[s])

    def set_slot(self, tid, s, value):
        term = self.terms[tid]
        self._leave(tid, s, term[s])
        self.terms[tid] = term[:s] + (value,) + term[s + 1:]
        self._join(tid, s, value)

    def reductions_for(self, tids):
        found = set()
        for tid in tids:
            if tid not in self.terms:
                continue
            term = self.terms[tid]
            for a, b in ((0, 1), (0, 2), (1, 2)):
                partners = self.groups[a][term[a]] & self.groups[b][term[b]]
                for other in partners:
                    if other != tid:
                        found.add((min(tid, other), max(tid, other), a, b))
        return sorted(found)

    def reduce(self, i, j, a, b):
        c = 3 - a - b
        merged = self.terms[i][c] ^ self.terms[j][c]
        self.remove(j)
        if merged:
            self.set_slot(i, c, merged)
            return [i]
        self.remove(i)
        return []

    def flip(self, s, i, j, t):
        """Term i: slot t += slot t of j; term j: remaining slot += that of i."""
        r = 3 - s - t
        ti, tj = self.terms[i], self.terms[j]
        new_t, new_r = ti[t] ^ tj[t], tj[r] ^ ti[r]
        if not new_t or not new_r:
            return False
        self.set_slot(i, t, new_t)
        self.set_slot(j, r, new_r)
        return True

    def snapshot(self):
        return sorted(self.terms.values())

    def to_scheme(self, terms=None):
        terms = self.snapshot() if terms is None else terms
        n, m = self.n, self.m
        return Scheme(n, m, CoeffDomain.gf2(), tuple(
            Term(CoeffVector.from_bits(u, n + 1), CoeffVector.from_bits(v, m + 1),
                 CoeffVector.from_bits(w, n + m + 1)) for u, v, w in terms))


def _random_part(rng, value):
    """Nonempty proper sub-mask of ``value``'s bits, or 0 if it has fewer than two."""
    bits = [1 << b for b in range(value.bit_length()) if value >> b & 1]
    if len(bits) < 2:
        return 0
    mask = int(rng.integers(1, (1 << len(bits)) - 1))
    return sum(bit for k, bit in enumerate(bits) if mask >> k & 1)


class _Segment:
    """Outcome of one walk segment between restarts."""

    def __init__(self, best, rank, steps):
        self.best, self.rank, self.steps = best, rank, steps


def _gf2_segment(start, cfg, rng, digest, target):
    state = Gf2State(start)
    visited = Visited(cfg.visited_limit)

    def settle(changed):
        while True:
            found = state.reductions_for(changed)
            if not found:
                return
            i, j, a, b = found[int(rng.integers(len(found)))]
            digest.update(b"R%d,%d,%d,%d;" % (i, j, a, b))
            changed = state.reduce(i, j, a, b)

    settle(list(state.terms))
    best_terms, best_rank, best_step = state.snapshot(), state.rank, 0
    stall = 0
    steps = 0
    policy = cfg.split_policy
    while steps < cfg.max_steps and best_rank > target:
        steps += 1
        stall += 1
        if (policy and stall >= cfg.plateau_limit and state.rank < best_rank + policy.excursion_budget
                and rng.random() < policy.probability):
            tids = sorted(state.terms)
            tid = tids[int(rng.integers(len(tids)))]
            s = int(rng.integers(3))
            part = _random_part(rng, state.terms[tid][s])
            if part:
                rest = state.terms[tid][s] ^ part
                state.set_slot(tid, s, part)
                term = state.terms[tid]
                state.add(term[:s] + (rest,) + term[s + 1:])
                digest.update(b"S%d,%d,%d;" % (tid, s, part))
            stall = 0
            continue
        if not state.pairs:
            break
        s, i, j = state.pairs[int(rng.integers(len(state.pairs)))]
        t = (s + 1 + int(rng.integers(2))) % 3
        if not state.flip(s, i, j, t):
            continue
        if (cfg.visited_limit and not state.reductions_for([i, j])
                and visited.seen(hash(tuple(state.snapshot())))):
            state.flip(s, i, j, t)  # Z2 flips are involutions
            continue
        digest.update(b"F%d,%d,%d,%d;" % (s, i, j, t))
        settle([i, j])
        if cfg.verify_each and not is_multiplication_tensor(state.to_scheme()):
            raise SearchError(f"walk left the multiplication tensor at step {steps}")
        if state.rank < best_rank:
            best_terms, best_rank, best_step = state.snapshot(), state.rank, steps
            stall = 0
    logger.debug("segment: best rank %d at step %d of %d", best_rank, best_step, steps)
    return _Segment(state.to_scheme(best_terms), best_rank, steps)


def _generic_segment(start, cfg, rng, digest, target):
    d = start.domain
    s = canonicalize(start)
    visited = Visited(cfg.visited_limit)

    def nonzero():
        return int(rng.integers(1, d.modulus)) if d.is_finite else 1

    def settle(s):
        while True:
            reds = enumerate_reductions(s)
            if not reds:
                return s
            mv = reds[int(rng.integers(len(reds)))]
            digest.update(f"R{mv.i},{mv.j},{''.join(mv.shared)};".encode())
            s = canonicalize(apply_reduction(s, mv))

    s = settle(s)
    best, stall, steps = s, 0, 0
    policy = cfg.split_policy
    while steps < cfg.max_steps and best.rank > target:
        steps += 1
        stall += 1
        if (policy and stall >= cfg.plateau_limit and s.rank < best.rank + policy.excursion_budget
                and rng.random() < policy.probability):
            i = int(rng.integers(s.rank))
            slot = "uvw"[int(rng.integers(3))]
            whole = s.terms[i].slot(slot)
            support = [k for k, x in enumerate(whole) if x]
            if len(support) >= 2:
                keep = set(support[:1] + [k for k in support[1:] if rng.random() < 0.5])
                if len(keep) == len(support):
                    keep.discard(support[-1])
                part = CoeffVector(d, tuple(x if k in keep else 0 for k, x in enumerate(whole)))
                s = canonicalize(apply_split(s, Split(i, slot, part)))
                digest.update(f"S{i},{slot},{sorted(keep)};".encode())
            stall = 0
            continue
        shapes = enumerate_flips(s)
        if not shapes:
            break
        shape = shapes[int(rng.integers(len(shapes)))]
        mv = shape.with_lambda(nonzero())
        try:
            nxt = apply_flip(s, mv)
        except MoveError:
            continue
        nxt = settle(canonicalize(nxt))
        if cfg.visited_limit and visited.seen(nxt.terms):
            continue
        digest.update(f"F{mv.i},{mv.j},{mv.shared},{mv.orient},{mv.lam};".encode())
        s = nxt
        if cfg.verify_each and not is_multiplication_tensor(s):
            raise SearchError(f"walk left the multiplication tensor at step {steps}")
        if s.rank < best.rank:
            best, stall = s, 0
    return _Segment(best, best.rank, steps)


def random_walk(start, cfg, walk_seed, walk_id=0):
    """One walk (plus ``cfg.restarts`` restarts from ``start``); best scheme found."""
    lower = start.n + start.m + 1
    target = max(cfg.target_rank if cfg.target_rank is not None else lower, lower)
    digest = hashlib.blake2b(digest_size=16)
    digest.update(b"%d;" % walk_seed)
    segment_fn = _gf2_segment if start.domain.kind == GF2 else _generic_segment

    best, best_rank, total = start, start.rank, 0
    if best_rank > target:
        for r in range(cfg.restarts + 1):
            rng = np.random.default_rng(derive_seed(walk_seed, r))
            seg = segment_fn(start, cfg, rng, digest, target)
            total += seg.steps
            if seg.rank < best_rank:
                best, best_rank = seg.best, seg.rank
            if best_rank <= target:
                break
    if not is_multiplication_tensor(best):
        raise SearchError(f"walk {walk_id} produced an invalid scheme")
    return SearchResult(best, best_rank, total, walk_id, digest.hexdigest(), walk_seed)


def _run_walk(args):
    start, cfg, walk_seed, walk_id = args
    return random_walk(start, cfg, walk_seed, walk_id)


def search_campaign(n, m, cfg, start=None):
    """
    ``cfg.walks`` independent walks from ``start`` (default: the standard
    scheme). The best result wins; ties go to the lowest walk id.
    """
    start = start or standard_scheme(n, m, cfg.domain)
    walks = max(cfg.walks, 1)
    jobs = [(start, cfg, derive_seed(cfg.seed, w), w) for w in range(walks)]
    workers = cfg.workers or min(walks, os.cpu_count() or 1)
    if workers > 1 and walks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_walk, jobs))
    else:
        results = [_run_walk(job) for job in jobs]
    results.sort(key=lambda r: (r.rank, r.walk_id))
    best = results[0]
    logger.info("campaign (%d,%d): rank %d from walk %d", n, m, best.rank, best.walk_id)
    return replace(best, walks=[r.summary() for r in sorted(results, key=lambda r: r.walk_id)])
