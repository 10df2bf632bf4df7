import json
import pathlib

import numpy as np
import pytest

from qkdbounds.sdp import (
    InconsistentConstraints,
    ProgramBuilder,
    SdpOptions,
    SdpProblem,
    Status,
    block_value,
    independent_rows,
    preprocess,
    read_sdpa,
    solve,
    write_sdpa,
)
from qkdbounds.sdp.generate import random_problem

from oracle import rel_diff

REFS = json.loads((pathlib.Path(__file__).parent / "data" / "reference_values.json").read_text())


def trace_one(c):
    """min <C, X> s.t. Tr X = 1, X >= 0; optimum is the smallest eigenvalue of C."""
    n = c.shape[0]
    return SdpProblem(("x",), (n,), (c,), (np.eye(n)[None],), np.array([1.0]))


def test_min_eigenvalue_program():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5, 12):
        g = rng.normal(size=(n, n))
        c = g + g.T
        sol = solve(trace_one(c))
        assert sol.status is Status.OPTIMAL
        assert abs(sol.objective_value - np.linalg.eigvalsh(c)[0]) < 1e-6
        assert np.linalg.eigvalsh(sol.primal_blocks["x"]).min() > -1e-7


def test_optimal_certificate_invariants():
    rng = np.random.default_rng(1)
    opts = SdpOptions()
    for _ in range(5):
        p = random_problem(rng, max_dim=8, max_equalities=12)
        sol = solve(p, opts)
        assert sol.status is Status.OPTIMAL
        assert sol.gap <= opts.gap_tol
        assert sol.primal_residual <= opts.feas_tol
        assert sol.dual_residual <= opts.feas_tol
        # weak duality
        assert sol.objective_value >= sol.dual_objective - 1e-8 * max(1, abs(sol.objective_value))
        for x in sol.primal_blocks.values():
            assert np.linalg.eigvalsh(x).min() >= -opts.feas_tol


@pytest.mark.parametrize("case", REFS["random"], ids=lambda c: f"seed{c['seed']}")
def test_random_programs_match_reference(case):
    p = random_problem(np.random.default_rng(case["seed"]))
    sol = solve(p)
    assert sol.status is Status.OPTIMAL
    assert rel_diff(sol.objective_value, case["objective"]) < 1e-6


def test_primal_infeasible():
    # x = -1 with x >= 0
    p = SdpProblem(("x",), (1,), (np.eye(1),), (np.eye(1)[None],), np.array([-1.0]))
    assert solve(p).status is Status.PRIMAL_INFEASIBLE


def test_dual_infeasible():
    # minimize -X11 with only the off-diagonal pinned: unbounded below
    a = np.array([[[0, 1.0], [1.0, 0]]])
    p = SdpProblem(("x",), (2,), (np.diag([-1.0, 0]),), (a,), np.array([0.0]))
    assert solve(p).status is Status.DUAL_INFEASIBLE


def test_inconsistent_constraints_reported_infeasible():
    p = SdpProblem(("x",), (2,), (np.eye(2),), (np.array([np.eye(2), np.eye(2)]),), np.array([1.0, 2.0]))
    with pytest.raises(InconsistentConstraints):
        independent_rows(p)
    assert solve(p).status is Status.PRIMAL_INFEASIBLE


def test_duplicate_rows_dropped():
    a = np.array([np.eye(3), np.eye(3), np.diag([1.0, 0, 0])])
    p = SdpProblem(("x",), (3,), (np.eye(3),), (a,), np.array([1.0, 1.0, 0.2]))
    kept, dropped = independent_rows(p)
    assert len(kept) == 2 and len(dropped) == 1
    assert preprocess(p).num_equalities == 2
    full_rank = random_problem(np.random.default_rng(2), max_equalities=5)
    assert preprocess(full_rank) is full_rank


def test_near_zero_rows_are_dropped_not_normalized():
    # a row that is zero up to roundoff must not be blown up into a constraint
    tiny = np.zeros((3, 3))
    tiny[0, 1] = tiny[1, 0] = 1e-17
    a = np.array([np.eye(3), tiny])
    p = SdpProblem(("x",), (3,), (np.diag([1.0, 2, 3]),), (a,), np.array([1.0, 0.0]))
    kept, dropped = independent_rows(p)
    assert list(kept) == [0] and list(dropped) == [1]
    sol = solve(p)
    assert sol.status is Status.OPTIMAL
    assert abs(sol.objective_value - 1.0) < 1e-6


def test_objective_scaling():
    p = random_problem(np.random.default_rng(3), max_dim=6, max_equalities=10)
    a, b = solve(p), solve(p.scaled_objective(10.0))
    assert rel_diff(b.objective_value, 10 * a.objective_value) < 1e-8 * 10 + 1e-7
    for nm in p.block_names:
        assert np.abs(a.primal_blocks[nm] - b.primal_blocks[nm]).max() < 1e-5


def test_solver_is_deterministic():
    p = random_problem(np.random.default_rng(4), max_dim=10, max_equalities=20)
    a, b = solve(p), solve(p)
    assert a.objective_value == b.objective_value
    assert a.iterations == b.iterations
    for nm in p.block_names:
        assert np.array_equal(a.primal_blocks[nm], b.primal_blocks[nm])


def test_max_iters_gives_numerical_limit():
    p = random_problem(np.random.default_rng(5), max_dim=10, max_equalities=20)
    assert solve(p, max_iters=2).status is Status.NUMERICAL_LIMIT


def test_sdpa_round_trip(tmp_path):
    p = random_problem(np.random.default_rng(6), max_dim=5, max_equalities=8)
    path = tmp_path / "prob.dat-s"
    write_sdpa(p, path, comment="round trip")
    q = read_sdpa(path)
    assert q.block_dims == p.block_dims
    assert np.allclose(q.rhs, p.rhs)
    for a, b in zip(p.constraints, q.constraints):
        assert np.allclose(a, b)
    # the objective survives the sign flip of the SDPA convention
    assert rel_diff(solve(q).objective_value, solve(p).objective_value) < 1e-6


def test_scalar_blocks():
    # min x + 2y s.t. x + y = 1 with 1x1 blocks
    p = SdpProblem(
        ("x", "y"), (1, 1), (np.eye(1), 2 * np.eye(1)), (np.ones((1, 1, 1)), np.ones((1, 1, 1))), np.array([1.0])
    )
    sol = solve(p)
    assert abs(sol.objective_value - 1.0) < 1e-7


def test_builder_complex_variable():
    # min <C, H> over density matrices equals the smallest eigenvalue, also for complex C
    rng = np.random.default_rng(7)
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    c = g + g.conj().T
    b = ProgramBuilder()
    b.add_variable("h", 3)
    b.add_equality({"h": np.eye(3)}, 1.0)
    b.minimize({"h": c})
    p = b.build()
    sol = solve(p)
    w, v = np.linalg.eigh(c)
    assert abs(sol.objective_value - w[0]) < 1e-6
    h = block_value(sol, p, "h")
    assert np.allclose(h, h.conj().T)
    assert abs(np.vdot(v[:, 0], h @ v[:, 0]).real - 1) < 1e-5


def test_builder_matrix_equality_and_maximize():
    # max Tr(P H) s.t. H = rho pins H completely
    rho = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    proj = np.diag([0.0, 1.0])
    b = ProgramBuilder()
    b.add_variable("h", 2)
    b.add_matrix_equality({"h": lambda e: e}, rho, 2)
    b.maximize({"h": proj}, constant=1.0)
    p = b.build()
    sol = solve(p)
    # stored as minimization of the negated functional
    assert abs(sol.objective_value + b.objective_constant + 1.3) < 1e-6
    assert np.allclose(block_value(sol, p, "h"), rho, atol=1e-6)


def test_builder_rejects_bad_input():
    b = ProgramBuilder()
    b.add_variable("h", 2, "real")
    with pytest.raises(ValueError):
        b.add_variable("h", 2)
    with pytest.raises(ValueError):
        b.add_variable("g", 2, "quaternion")
    with pytest.raises(ValueError):
        b.add_equality({"h": np.eye(3)}, 1.0)
    with pytest.raises(ValueError):
        b.add_equality({"nope": np.eye(2)}, 1.0)
