import os
import shutil

import pytest

from brent import (CLAIMED_UNSAT, SAT, UNKNOWN, UNSAT, SolverError, build_brent, decode_assignment, dpll,
                   encode_cnf, extend_assignment, parse_solver_output, save_certificate, solve, to_dimacs,
                   violated_clause, write_dimacs)
from coeff import CoeffDomain
from construct import karatsuba_scheme, standard_scheme
from tensor import is_multiplication_tensor

Z2 = CoeffDomain.gf2()


def test_system_sizes():
    one = build_brent(1, 1, 3)
    assert one.num_equations == 12 and one.num_vars == 21
    two = build_brent(2, 2, 5)
    assert two.num_equations == 45 and two.num_vars == 40
    with pytest.raises(SolverError):
        build_brent(1, 1, 0)


def test_karatsuba_satisfies_the_equations():
    system = build_brent(1, 1, 3)
    values = system.flatten(karatsuba_scheme(Z2))
    assert system.satisfied(values)
    cnf = encode_cnf(system)
    assert violated_clause(cnf, extend_assignment(cnf, values)) is None
    assert system.unflatten(values) == karatsuba_scheme(Z2)


def test_standard_scheme_does_not_fit_rank_three():
    with pytest.raises(SolverError):
        build_brent(1, 1, 3).flatten(standard_scheme(1, 1, Z2))


def test_symmetry_breaking_keeps_a_solution():
    system = build_brent(1, 1, 3)
    cnf = encode_cnf(system, symmetry_breaking=True)
    assert cnf.symmetry != (0, 0)
    verdict = solve(cnf)
    assert verdict.status == SAT
    assert is_multiplication_tensor(verdict.scheme)


def test_internal_solver_one_one():
    sat = solve(encode_cnf(build_brent(1, 1, 3)))
    assert sat.status == SAT
    assert sat.scheme.rank <= 3 and is_multiplication_tensor(sat.scheme)
    unsat = solve(encode_cnf(build_brent(1, 1, 2)))
    assert unsat.status == UNSAT
    assert unsat.solver == "internal-dpll"


@pytest.mark.parametrize("r", [4, 5])
def test_decision_budget_gives_unknown(r):
    # one decision settles neither the unsatisfiable rank 4 nor the satisfiable rank 5
    verdict = solve(encode_cnf(build_brent(2, 1, r)), max_decisions=1)
    assert verdict.status == UNKNOWN
    assert verdict.scheme is None


def test_all_zero_assignment_is_rejected():
    cnf = encode_cnf(build_brent(1, 1, 3))
    with pytest.raises(SolverError):
        decode_assignment(cnf, [])


def test_dpll_small_formulas():
    assert dpll(2, [[1, 2], [-1], [-2, 1]])[0] == UNSAT
    status, model = dpll(3, [[1, 2], [-1, 3], [-3]])
    assert status == SAT and model == [-1, 2, -3]
    assert dpll(1, [[]])[0] == UNSAT


def test_dimacs_layout(tmp_path):
    cnf = encode_cnf(build_brent(1, 1, 3))
    text = to_dimacs(cnf)
    assert f"p cnf {cnf.num_vars} {len(cnf.clauses)}" in text
    assert "c varmap alpha[0,0] 1" in text
    assert "c varmap gamma[2,2] 21" in text
    path = write_dimacs(cnf, tmp_path / "k.cnf")
    body = [l for l in path.read_text().splitlines() if not l.startswith(("c", "p"))]
    assert len(body) == len(cnf.clauses) and all(l.endswith(" 0") for l in body)


def test_parse_solver_output():
    status, model, version = parse_solver_output("c kissat version 3.1\ns SATISFIABLE\nv 1 -2\nv 3 0\n")
    assert (status, model) == (SAT, [1, -2, 3])
    assert "version" in version
    assert parse_solver_output("s UNSATISFIABLE\n")[0] == UNSAT
    assert parse_solver_output("")[0] == UNKNOWN
    with pytest.raises(SolverError):
        parse_solver_output("s SATISFIABLE\n")


@pytest.mark.skipif(shutil.which("sh") is None, reason="needs a POSIX shell")
def test_external_unsat_is_only_claimed():
    verdict = solve(encode_cnf(build_brent(1, 1, 2)), mode="external",
                    command="sh -c 'echo \"s UNSATISFIABLE\"' {cnf}")
    assert verdict.status == CLAIMED_UNSAT


def test_external_errors():
    cnf = encode_cnf(build_brent(1, 1, 2))
    with pytest.raises(SolverError):
        solve(cnf, mode="external")
    with pytest.raises(SolverError):
        solve(cnf, mode="external", command="no-such-solver-binary {cnf}")
    with pytest.raises(SolverError):
        solve(cnf, mode="magic")


def test_certificate(tmp_path):
    system = build_brent(1, 1, 2)
    verdict = solve(encode_cnf(system))
    path = save_certificate(verdict, system, tmp_path / "cert.json")
    cert = path.read_text()
    for key in ('"n": 1', '"r": 2', '"verdict": "unsat"', '"solver": "internal-dpll"'):
        assert key in cert


def test_pysat_backend():
    pytest.importorskip("pysat")
    sat = solve(encode_cnf(build_brent(1, 1, 3)), mode="pysat:cadical153")
    assert sat.status == SAT and is_multiplication_tensor(sat.scheme)
    unsat = solve(encode_cnf(build_brent(1, 1, 2)), mode="pysat:cadical153")
    assert unsat.status == CLAIMED_UNSAT


@pytest.mark.slow
def test_two_two_rank_five_is_unsat():
    pytest.importorskip("pysat")
    verdict = solve(encode_cnf(build_brent(2, 2, 5), symmetry_breaking=True), mode="pysat:cadical153")
    assert verdict.status == CLAIMED_UNSAT


@pytest.mark.slow
def test_two_two_rank_six_is_sat():
    pytest.importorskip("pysat")
    verdict = solve(encode_cnf(build_brent(2, 2, 6)), mode="pysat:cadical153")
    assert verdict.status == SAT
    assert is_multiplication_tensor(verdict.scheme)


@pytest.mark.slow
@pytest.mark.skipif(not os.getenv("POLYFLIP_SOLVER_CMD"), reason="no external solver configured")
@pytest.mark.parametrize("r, expected", [(7, CLAIMED_UNSAT), (8, SAT)])
def test_external_three_two(r, expected):
    verdict = solve(encode_cnf(build_brent(3, 2, r), symmetry_breaking=True), mode="external",
                    command=os.environ["POLYFLIP_SOLVER_CMD"])
    assert verdict.status == expected
