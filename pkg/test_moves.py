import random

import pytest

from coeff import CoeffDomain
from construct import karatsuba_scheme, standard_scheme
from moves import (Flip, FlipShape, MoveError, MoveTrace, Rebalance, Reduction, Split, apply_flip,
                   apply_move, apply_rebalance, apply_reduction, apply_split, deserialize_trace,
                   enumerate_flips, enumerate_reductions, inverse_flip, karatsuba_derivation,
                   load_trace, save_trace, serialize_trace)
from tensor import CoeffVector, FormatError, Scheme, Term, canonicalize, contract

Z2 = CoeffDomain.gf2()
Q = CoeffDomain.rational()
Z = CoeffDomain.integer()


def vec(domain, *values):
    return CoeffVector.of(domain, values)


def term(domain, u, v, w):
    return Term(vec(domain, *u), vec(domain, *v), vec(domain, *w))


def test_flip_example():
    # a0 b0 c0 + a1 b0 c1 -> a0 b0 (c0 - c1) + (a0 + a1) b0 c1
    s = Scheme(1, 1, Z, (term(Z, (1, 0), (1, 0), (1, 0, 0)), term(Z, (0, 1), (1, 0), (0, 1, 0))))
    out = apply_flip(s, Flip(0, 1, "v", "w-", 1))
    assert out.terms == (term(Z, (1, 0), (1, 0), (1, -1, 0)), term(Z, (1, 1), (1, 0), (0, 1, 0)))
    assert contract(out) == contract(s)


def test_flip_zero_lambda_is_noop():
    s = standard_scheme(1, 1, Q)
    assert apply_flip(s, Flip(0, 2, "v", "w-", 0)) == s


def test_flip_inverse_restores():
    s = standard_scheme(2, 2, Q)
    mv = Flip(0, 1, "u", "v-", 3)
    assert apply_flip(apply_flip(s, mv), inverse_flip(mv)) == s


def test_flip_rejections():
    s = standard_scheme(1, 1, Q)
    with pytest.raises(MoveError):
        apply_flip(s, Flip(0, 3, "u", "v-", 1))  # no shared slot
    with pytest.raises(MoveError):
        apply_flip(s, Flip(0, 0, "u", "v-", 1))
    with pytest.raises(MoveError):
        apply_flip(s, Flip(0, 1, "u", "u-", 1))
    with pytest.raises(MoveError):
        apply_flip(s, Flip(0, 9, "u", "v-", 1))
    dup = Scheme(0, 0, Q, (term(Q, (1,), (1,), (1,)), term(Q, (1,), (1,), (2,))))
    with pytest.raises(MoveError):
        apply_flip(dup, Flip(0, 1, "u", "v-", 1))  # would zero the v slot of term 0


def test_reduction_merges():
    s = Scheme(1, 0, Q, (term(Q, (1, 0), (1,), (1, 0)), term(Q, (0, 1), (1,), (1, 0))))
    out = apply_reduction(s, Reduction(0, 1, ("v", "w")))
    assert out.terms == (term(Q, (1, 1), (1,), (1, 0)),)


def test_reduction_zero_merge_over_gf2():
    t = term(Z2, (1, 0), (1, 0), (1, 0, 0))
    s = Scheme(1, 1, Z2, (t, t, term(Z2, (0, 1), (0, 1), (0, 0, 1))))
    out = apply_reduction(s, Reduction(0, 1, ("u", "v")))
    assert out.rank == 1


def test_reduction_needs_two_shared_slots():
    s = apply_flip(apply_flip(standard_scheme(1, 1, Z), Flip(0, 2, "v", "w-", 1)), Flip(3, 1, "v", "w-", 1))
    with pytest.raises(MoveError):
        apply_reduction(s, Reduction(1, 2, ("u", "v")))
    with pytest.raises(MoveError):
        apply_reduction(s, Reduction(1, 2, ("u",)))


def test_split_and_merge_back():
    s = Scheme(1, 0, Q, (term(Q, (1, 1), (1,), (1, 0)),))
    split = apply_split(s, Split(0, "u", vec(Q, 1, 0)))
    assert split.rank == 2
    assert split.terms[1] == term(Q, (0, 1), (1,), (1, 0))
    assert apply_reduction(split, Reduction(0, 1, ("v", "w"))) == s
    with pytest.raises(MoveError):
        apply_split(s, Split(0, "u", vec(Q, 1, 1)))


def test_flip_is_split_then_reduction():
    rng = random.Random(3)
    s = standard_scheme(2, 2, Q)
    for shape in enumerate_flips(s)[:12]:
        lam = rng.randint(1, 5)
        mv = shape.with_lambda(lam)
        ti, tj = s.terms[mv.i], s.terms[mv.j]
        t_name, r_name = mv.decremented, mv.incremented
        # split lam * tj.t off ti's t-slot, then merge the split-off part into tj
        part = ti.slot(t_name).axpy(-lam, tj.slot(t_name))
        if part.is_zero:
            continue
        step = apply_split(s, Split(mv.i, t_name, part))
        # the split-off term carries lam * tj.t; move lam into the r-slot so it shares t with tj
        step = apply_rebalance(step, Rebalance(step.rank - 1, t_name, r_name, lam))
        shared = tuple(x for x in ("u", "v", "w") if x != r_name)
        merged = apply_reduction(step, Reduction(mv.j, step.rank - 1, shared))
        assert merged == apply_flip(s, mv)


def test_rebalance():
    s = Scheme(0, 0, Q, (term(Q, (2,), (1,), (1,)),))
    assert apply_rebalance(s, Rebalance(0, "u", "w", 2)).terms == (term(Q, (1,), (1,), (2,)),)
    assert apply_rebalance(s, Rebalance(0, "u", "w", 1)) == s
    g = standard_scheme(1, 1, Z2)
    assert apply_rebalance(g, Rebalance(0, "u", "v", 1)) == g
    with pytest.raises(MoveError):
        apply_rebalance(s, Rebalance(0, "u", "w", 0))
    with pytest.raises(MoveError):
        apply_rebalance(s.to_domain(Z), Rebalance(0, "u", "w", 2))


def test_enumerate_reductions():
    assert enumerate_reductions(standard_scheme(1, 1, Q)) == []
    t = term(Q, (1, 0), (1, 0), (1, 0, 0))
    dup = Scheme(1, 1, Q, (t, t))
    assert enumerate_reductions(dup) == [Reduction(0, 1, ("u", "v"))]
    trace = karatsuba_derivation()
    s = trace.start_scheme()
    for mv in trace.moves[:2]:
        s = apply_move(s, mv)
    assert enumerate_reductions(s) == [Reduction(1, 2, ("u", "w"))]


def test_enumerate_flips_standard():
    shapes = enumerate_flips(standard_scheme(1, 1, Q))
    # two pairs share u, two share v, and (a0,b1,c1), (a1,b0,c1) share w;
    # five pairs, two orientations each
    assert len(shapes) == 10
    assert sum(1 for sh in shapes if sh.shared == "w") == 2
    assert FlipShape(0, 1, "u", "v-") in shapes
    assert FlipShape(1, 2, "w", "u-") in shapes
    assert enumerate_flips(Scheme(1, 1, Q, ())) == []


def test_random_moves_keep_the_tensor():
    rng = random.Random(11)
    for domain in (Q, Z2, CoeffDomain.gfp(5)):
        s = standard_scheme(2, 2, domain)
        target = contract(s)
        for _ in range(200):
            reductions = enumerate_reductions(s)
            if reductions and rng.random() < 0.3:
                mv = rng.choice(reductions)
                before = s.rank
                s = apply_move(s, mv)
                assert s.rank in (before - 1, before - 2)
            else:
                shapes = enumerate_flips(s)
                if not shapes:
                    break
                shape = rng.choice(shapes)
                lam = 1 if domain == Z2 else rng.randint(1, 4)
                try:
                    nxt = apply_move(s, shape.with_lambda(lam))
                except MoveError:
                    continue
                assert nxt.rank == s.rank
                s = nxt
            assert contract(s) == target


def test_karatsuba_derivation():
    trace = karatsuba_derivation()
    s = trace.start_scheme()
    for mv in trace.moves:
        s = apply_move(s, mv)
    assert s.rank == 3
    assert canonicalize(s) == canonicalize(karatsuba_scheme(Z))
    assert trace.counts() == {"flip": 2, "reduction": 1, "split": 0, "rebalance": 0}


def test_trace_round_trip(tmp_path):
    trace = MoveTrace(1, 1, Q, "standard", [
        Flip(0, 2, "v", "w-", 1),
        Rebalance(0, "w", "u", 2),
        Split(1, "u", vec(Q, 1, 0)),
    ])
    path = save_trace(trace, tmp_path / "t.json")
    back = load_trace(path)
    assert back.moves == trace.moves
    assert (back.n, back.m, back.domain) == (1, 1, Q)
    explicit = MoveTrace(1, 1, Z, karatsuba_scheme(Z), [])
    assert deserialize_trace(serialize_trace(explicit)).start == karatsuba_scheme(Z)


def test_trace_rejects_unknown_version():
    with pytest.raises(FormatError):
        deserialize_trace('{"format": "flip-trace/9", "n": 1, "m": 1, "domain": "Q", "moves": []}')
    with pytest.raises(FormatError):
        deserialize_trace('{"format": "flip-trace/1", "n": 1, "m": 1, "domain": "Q", '
                          '"moves": [{"op": "twist"}]}')


def test_ten_thousand_random_moves_keep_the_tensor():
    rng = random.Random(2024)
    gf5 = CoeffDomain.gfp(5)
    s = standard_scheme(2, 1, gf5)
    target = contract(s)
    applied = {"flip": 0, "reduction": 0, "split": 0, "rebalance": 0}
    for _ in range(10_000):
        kind = rng.choice(["flip", "flip", "reduction", "split", "rebalance"])
        if kind == "split" and s.rank >= 10:
            kind = "reduction"
        if kind == "flip":
            shapes = enumerate_flips(s)
            if not shapes:
                continue
            mv, delta = rng.choice(shapes).with_lambda(rng.randint(1, 4)), (0,)
        elif kind == "reduction":
            options = enumerate_reductions(s)
            if not options:
                continue
            mv, delta = rng.choice(options), (-1, -2)
        elif kind == "split":
            i, slot = rng.randrange(s.rank), rng.choice("uvw")
            part = CoeffVector.of(gf5, [rng.randrange(5) for _ in s.terms[i].slot(slot)])
            mv, delta = Split(i, slot, part), (1,)
        else:
            src, dst = rng.sample("uvw", 2)
            mv, delta = Rebalance(rng.randrange(s.rank), src, dst, rng.randint(1, 4)), (0,)
        try:
            nxt = apply_move(s, mv)
        except MoveError:
            continue
        assert nxt.rank - s.rank in delta
        assert contract(nxt) == target
        applied[kind] += 1
        s = nxt
    assert all(applied.values())
