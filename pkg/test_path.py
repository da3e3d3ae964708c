import time

import pytest

from coeff import CoeffDomain
from construct import EvalPoints, default_points, toom_cook_scheme
from moves import Flip, MoveTrace
from path import (PathError, choose_points, closed_form, flip_recurrence, recurrence_terms, replay,
                  split_path_length, toomcook_path)
from tensor import canonicalize, is_multiplication_tensor

Q = CoeffDomain.rational()


def test_zero_zero_is_empty():
    trace, stats = toomcook_path(0, 0, EvalPoints(Q, (0,)))
    assert len(trace) == 0
    assert stats.flips == 0 and stats.final_rank == 1


def test_one_one_path():
    pts = EvalPoints(Q, (0, 1, -1))
    trace, stats = toomcook_path(1, 1, pts)
    assert stats.final_rank == 3
    assert stats.reductions == 1
    assert stats.flips == 6
    assert stats.lemma_b == [0, 1]
    assert stats.rounds == [(1, 3)]
    assert canonicalize(replay(trace)) == canonicalize(toom_cook_scheme(1, 1, pts))


def test_two_two_path():
    pts = EvalPoints(Q, (0, 1, -1, 2, -2))
    trace, stats = toomcook_path(2, 2, pts)
    assert stats.final_rank == 5
    assert stats.reductions == 4
    assert trace.counts()["flip"] == stats.flips
    assert stats.recurrence_flips == 39
    # the outer level peels at 0 for free; the inner levels pay more than the recurrence
    assert stats.flips == 37
    assert [lv["peel"] for lv in stats.levels] == [1, 3, 5, 0]
    assert [lv["recurrence"]["peel"] for lv in stats.levels] == [0, 2, 3, 7]
    final = replay(trace, verify_each=True)
    assert canonicalize(final) == canonicalize(toom_cook_scheme(2, 2, pts))


@pytest.mark.parametrize("n, m", [(1, 2), (2, 1), (3, 1), (1, 3), (2, 3), (3, 3)])
def test_paths_end_at_toom_cook(n, m):
    trace, stats = toomcook_path(n, m, domain=Q)
    assert stats.reductions == n * m
    assert stats.final_rank == n + m + 1
    final = replay(trace)
    assert is_multiplication_tensor(final)
    assert final.rank == n + m + 1


def test_folding_round_costs():
    # a round over |S| active terms takes 2|S| + 1 flips
    _, stats = toomcook_path(3, 3, domain=Q)
    for active, flips in stats.rounds:
        assert flips == (2 * active + 1 if active else 1)


def test_path_over_prime_field():
    gf7 = CoeffDomain.gfp(7)
    trace, stats = toomcook_path(2, 2, domain=gf7)
    assert stats.final_rank == 5
    assert is_multiplication_tensor(replay(trace, verify_each=True))


def test_path_needs_matching_points():
    with pytest.raises(PathError):
        toomcook_path(1, 1, EvalPoints(Q, (0, 1)))


def test_choose_points_avoids_equal_powers():
    # f^2 = z^2 for f = -z, so (-1) cannot close a level peeled at 1 for n = 2
    z, f, _ = choose_points(EvalPoints(Q, (1, -1, 2, 3, 4)), 2)
    assert f ** 2 != z ** 2


def test_counts():
    assert flip_recurrence(1, 1) == 6
    assert flip_recurrence(2, 2) == 39
    assert flip_recurrence(0, 5) == 0
    assert flip_recurrence(2, 3) == flip_recurrence(3, 2)
    assert flip_recurrence(1, 4) == 48
    assert flip_recurrence(4, 4) == 279
    assert closed_form(2, 2) == 36
    assert split_path_length(1, 1) == 32


def test_replay_empty_trace_is_start():
    trace = MoveTrace(2, 1, Q, "standard", [])
    assert replay(trace) == trace.start_scheme()


def test_replay_reports_corrupted_step():
    trace, _ = toomcook_path(1, 1, EvalPoints(Q, (0, 1, -1)))
    k = next(idx for idx, mv in enumerate(trace.moves) if isinstance(mv, Flip))
    mv = trace.moves[k]
    trace.moves[k] = Flip(mv.i, mv.j, mv.shared, mv.orient, mv.lam + 5)
    with pytest.raises(PathError, match=r"step \d+"):
        replay(trace, verify_each=True)


# flips the construction emits with the default points 0, 1, -1, 2, -2, ...
EMITTED_FLIPS = {
    (0, 0): 0, (0, 1): 1, (0, 2): 4, (0, 3): 9, (0, 4): 16,
    (1, 1): 6, (1, 2): 16, (1, 3): 31, (1, 4): 51,
    (2, 2): 37, (2, 3): 64, (2, 4): 101,
    (3, 3): 111, (3, 4): 167,
    (4, 4): 250,
}


@pytest.mark.parametrize("n, m", sorted(EMITTED_FLIPS))
def test_path_sweep(n, m):
    started = time.perf_counter()
    trace, stats = toomcook_path(n, m, domain=Q)
    final = replay(trace)
    elapsed = time.perf_counter() - started

    pts = default_points(n + m + 1, Q)
    assert canonicalize(final) == canonicalize(toom_cook_scheme(n, m, pts))
    assert stats.reductions == n * m
    assert stats.final_rank == n + m + 1
    assert stats.flips == trace.counts()["flip"] == EMITTED_FLIPS[n, m]
    assert stats.recurrence_flips == flip_recurrence(n, m)
    assert elapsed < 10


@pytest.mark.parametrize("n, m", [(1, 3), (2, 2), (2, 4), (3, 4), (4, 4)])
def test_level_accounting(n, m):
    _, stats = toomcook_path(n, m, domain=Q)
    levels = stats.levels
    assert levels[-1]["total"] == stats.flips
    assert sum(lv["own"] for lv in levels) == stats.flips
    for lv in levels:
        k, rows = lv["n"], lv["m"]
        # peeling at 0 is free; otherwise one chain flip per shifted cell plus one per root row
        assert lv["peel"] == (0 if lv["z"] == "0" else (k + 1) * rows + k)
        assert len(lv["rounds"]) == k + rows - 1
        assert lv["closing"] == 1
        if k:
            rec = lv["recurrence"]
            assert rec["peel"] == recurrence_terms(k, rows)[0]
            assert sum(c for _, c in lv["rounds"]) <= rec["rounds"]


@pytest.mark.parametrize("n", [1, 2])
def test_peel_meets_slot_bound(n):
    # a nonzero peel changes 2(n+1)m + n + 1 slots and a flip changes two
    for m in range(n, 6):
        bound = (n + 1) * m + (n + 2) // 2
        assert (n + 1) * m + n == bound
        assert recurrence_terms(n, m)[0] < bound
