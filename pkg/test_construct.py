import time
from fractions import Fraction

import pytest

import make_base_schemes
from coeff import CoeffDomain
from construct import (ConstructionError, EvalPoints, append_row, block_union, build, default_points,
                       deg1_scheme, deg2_scheme, karatsuba_scheme, lagrange_coeffs, shift_scheme,
                       standard_scheme, toom_cook_scheme, walk_deg2_base, DATA_DIR)
from tensor import CoeffVector, Term, contract, is_multiplication_tensor

Z2 = CoeffDomain.gf2()
Q = CoeffDomain.rational()
Z = CoeffDomain.integer()


def test_standard_one_one_terms():
    s = standard_scheme(1, 1, Q)
    got = {(t.u.entries, t.v.entries, t.w.entries) for t in s.terms}
    assert got == {((1, 0), (1, 0), (1, 0, 0)), ((1, 0), (0, 1), (0, 1, 0)),
                   ((0, 1), (1, 0), (0, 1, 0)), ((0, 1), (0, 1), (0, 0, 1))}


def test_standard_sizes():
    assert standard_scheme(0, 0, Q).terms == (Term(CoeffVector.of(Q, [1]), CoeffVector.of(Q, [1]),
                                                    CoeffVector.of(Q, [1])),)
    assert standard_scheme(2, 2, Z2).rank == 9


def test_lagrange_columns():
    lag = lagrange_coeffs(EvalPoints(Q, (0, 1, -1)))
    half = Fraction(1, 2)
    assert lag.column(0) == (1, 0, -1)
    assert lag.column(1) == (0, half, half)
    assert lag.column(2) == (0, -half, half)


def test_lagrange_evaluation_property():
    pts = default_points(5, Q)
    lag = lagrange_coeffs(pts)
    for j, xj in enumerate(pts):
        for k in range(len(pts)):
            value = sum(lag.alpha[l][k] * xj ** l for l in range(len(pts)))
            assert value == (1 if j == k else 0)


def test_lagrange_over_prime_field():
    pts = default_points(3, CoeffDomain.gfp(5))
    assert pts.points == (0, 1, 4)
    lag = lagrange_coeffs(pts)
    assert lag.column(1) == (0, 3, 3)  # 1/2 = 3 mod 5


def test_toom_cook_ranks():
    assert toom_cook_scheme(1, 1, EvalPoints(Q, (0, 1, -1))).rank == 3
    s = toom_cook_scheme(2, 2, EvalPoints(Q, (0, 1, -1, 2, -2)))
    assert s.rank == 5 and is_multiplication_tensor(s)
    assert is_multiplication_tensor(toom_cook_scheme(1, 2, domain=CoeffDomain.gfp(7)))


def test_toom_cook_needs_enough_points():
    with pytest.raises(ConstructionError):
        toom_cook_scheme(1, 1, domain=Z2)
    with pytest.raises(ConstructionError):
        toom_cook_scheme(1, 1, EvalPoints(Q, (0, 1)))


def test_eval_points_validation():
    with pytest.raises(ConstructionError):
        EvalPoints(Q, (0, 1, 0))
    with pytest.raises(ConstructionError):
        EvalPoints(CoeffDomain.gfp(3), (1, 4))
    with pytest.raises(ConstructionError):
        EvalPoints(Z, (0, 1))


@pytest.mark.parametrize("n, rank", [(1, 3), (2, 5), (3, 6), (4, 8), (5, 9)])
@pytest.mark.parametrize("domain", [Z, Q, Z2, CoeffDomain.gfp(3)])
def test_deg1_ranks(n, rank, domain):
    s = deg1_scheme(n, domain)
    assert s.rank == rank
    assert is_multiplication_tensor(s)


def test_karatsuba_is_valid_everywhere():
    for domain in (Z, Q, Z2, CoeffDomain.zpow2(20)):
        assert is_multiplication_tensor(karatsuba_scheme(domain))


def test_append_row():
    s = append_row(karatsuba_scheme(Z))
    assert (s.n, s.m, s.rank) == (2, 1, 5)
    assert is_multiplication_tensor(s)
    with pytest.raises(ConstructionError):
        append_row(standard_scheme(1, 2, Z))


def test_shift_karatsuba_block():
    s = shift_scheme(karatsuba_scheme(Z), 2, 3, 1)
    assert (s.n, s.m) == (3, 1)
    for t in s.terms:
        assert not any(t.u.entries[:2])
        assert not any(t.w.entries[:2])


def test_shift_by_zero_embeds():
    s = karatsuba_scheme(Z)
    assert shift_scheme(s, 0, 1, 1) == s
    with pytest.raises(ConstructionError):
        shift_scheme(s, 1, 1, 1)


def test_block_union_reproduces_standard():
    low = standard_scheme(1, 1, Q)
    s = block_union(3, 1, [(low, 0), (low, 2)])
    assert contract(s) == contract(standard_scheme(3, 1, Q))
    with pytest.raises(ConstructionError):
        block_union(3, 1, [])


def test_build_dispatch():
    assert build("karatsuba", 1, 1, Z2).rank == 3
    assert build("toom-cook", 1, 1, Q, points=(0, 1, 2)).rank == 3
    assert build("standard", 2, 3, Q).rank == 12
    with pytest.raises(ConstructionError):
        build("karatsuba", 2, 2, Z)
    with pytest.raises(ConstructionError):
        build("deg1", 3, 2, Z)
    with pytest.raises(ConstructionError):
        build("strassen", 1, 1, Z)


def test_deg2_rejects_other_domains():
    with pytest.raises(ConstructionError):
        deg2_scheme(5, Q)
    with pytest.raises(ConstructionError):
        deg2_scheme(4, Z2)


@pytest.mark.parametrize("n", [5, 6, 7])
def test_deg2_bases_are_bundled(n):
    assert (DATA_DIR / f"deg2_base_{n}.json").exists()


def test_deg2_family_is_fast():
    started = time.perf_counter()
    for n in range(5, 11):
        s = deg2_scheme(n, Z2)
        assert (s.n, s.m) == (n, 2)
        assert s.rank == 2 * n + 1
        assert is_multiplication_tensor(s)
    assert time.perf_counter() - started < 5


def test_make_base_schemes_reports_failed_walk(tmp_path, monkeypatch, capsys):
    def stuck(n, seed=0, max_steps=0):
        raise ConstructionError(f"No rank-{2 * n + 1} base for ({n},2) within {max_steps} steps (best 14)")

    monkeypatch.setattr(make_base_schemes, "DATA_DIR", tmp_path)
    monkeypatch.setattr(make_base_schemes, "walk_deg2_base", stuck)
    assert make_base_schemes.make_base_schemes(degrees=(6,), max_steps=10) == []
    out = capsys.readouterr().out
    assert "✗ [deg2] (6,2): No rank-13 base" in out
    assert not (tmp_path / "deg2_base_6.json").exists()


def test_make_base_schemes_keeps_bundled_files(tmp_path, monkeypatch, capsys):
    (tmp_path / "deg2_base_5.json").write_text("{}")
    monkeypatch.setattr(make_base_schemes, "DATA_DIR", tmp_path)
    assert make_base_schemes.make_base_schemes(degrees=(5,)) == []
    assert "already bundled" in capsys.readouterr().out


def test_walk_deg2_base_without_budget_fails():
    # the block union starts one above the target rank
    with pytest.raises(ConstructionError, match="rank-11"):
        walk_deg2_base(5, max_steps=0)
